"""Stationary operating points: residuals, the single-inverter closed form,
and a damped Newton solver for arbitrary lossless networks.

Equilibria are taken in the co-rotating frame where every frequency
deviation vanishes, so a state is stationary when, at every non-slack
node j::

    0 = omega_d + kappa_j (Pd_j - P_el_j)
    0 = Ed_j - E_j + chi_j (Qd_j - Q_el_j)

A slack node keeps its phase at zero and its voltage at its setpoint and
contributes no residual rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linearization import coupling_matrices
from .network import GridNetwork, InverterParams, SystemState, build_network, power_injections

RESIDUAL_TOL = 1e-8      # acceptance bound for any returned equilibrium
NEWTON_TOL = 1e-10
REAL_ROOT_TOL = 1e-9     # |imag| < tol * (1 + |real|) counts as a real root
VOLTAGE_FLOOR = 1e-2     # Newton backtracking keeps voltages above this


class EquilibriumNotFound(RuntimeError):
    """Newton failed to converge from the given start.

    This signals "no equilibrium found from this start", not proven
    nonexistence; other basins may hold solutions.
    """


class SingularIterateError(RuntimeError):
    """The residual Jacobian lost rank at an iterate."""

    def __init__(self, message: str, state: SystemState):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class Equilibrium:
    """A stationary state with its residual norm and provenance."""

    state: SystemState
    residual_norm: float
    method: str
    slack: int | None = None

    def __post_init__(self):
        if np.any(self.state.omega != 0.0):
            raise ValueError("equilibria live in the rotating frame: omega must be zero")
        if not self.residual_norm < RESIDUAL_TOL:
            raise ValueError(
                f"residual norm {self.residual_norm:.3e} exceeds the acceptance bound {RESIDUAL_TOL}"
            )

    def to_dict(self) -> dict:
        return {
            "delta": self.state.delta.tolist(),
            "E": self.state.E.tolist(),
            "residual_norm": self.residual_norm,
            "method": self.method,
            "slack": self.slack,
        }


def residual(
    state: SystemState,
    params: InverterParams,
    net: GridNetwork,
    slack: int | None = None,
) -> np.ndarray:
    """Stationarity residuals, stacked [frequency rows; voltage rows].

    Rows belong to non-slack nodes in ascending index order.  The state
    supplies the slack's phase and voltage; its balance equations are
    excluded.
    """
    P_el, Q_el = power_injections(state, net)
    r_freq = params.omega_d + params.kappa * (params.Pd - P_el)
    r_volt = params.Ed - state.E + params.chi * (params.Qd - Q_el)
    if slack is None:
        return np.concatenate([r_freq, r_volt])
    keep = [j for j in range(net.n) if j != slack]
    return np.concatenate([r_freq[keep], r_volt[keep]])


def residual_norm(
    state: SystemState,
    params: InverterParams,
    net: GridNetwork,
    slack: int | None = None,
) -> float:
    """Max-norm of the stationarity residual."""
    r = residual(state, params, net, slack)
    return float(np.max(np.abs(r))) if r.size else 0.0


def _residual_jacobian(
    delta: np.ndarray,
    E: np.ndarray,
    params: InverterParams,
    net: GridNetwork,
    row_nodes: list[int],
    delta_cols: list[int],
    E_cols: list[int],
) -> np.ndarray:
    """d(residual)/d(delta[delta_cols], E[E_cols]) from the coupling matrices."""
    Lam, A, H = coupling_matrices(delta, E, net)
    kap = params.kappa[:, None]
    chiE = (params.chi * E)[:, None]
    dfreq_ddelta = -kap * Lam
    dfreq_dE = kap * A.T
    dvolt_ddelta = chiE * A
    dvolt_dE = chiE * H - np.eye(net.n)
    top = np.hstack([dfreq_ddelta[np.ix_(row_nodes, delta_cols)], dfreq_dE[np.ix_(row_nodes, E_cols)]])
    bot = np.hstack([dvolt_ddelta[np.ix_(row_nodes, delta_cols)], dvolt_dE[np.ix_(row_nodes, E_cols)]])
    return np.vstack([top, bot])


def solve_newton(
    net: GridNetwork,
    params: InverterParams,
    slack: int | None = None,
    init: SystemState | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = 50,
) -> Equilibrium:
    """Newton iteration on the stationarity residual with analytic Jacobian.

    The default start is flat (delta = 0, E = Ed).  With a slack node the
    slack's phase/voltage are pinned at (0, Ed_slack) and its rows and
    columns leave the Newton system; without one, delta_0 is pinned at 0
    to fix the global phase and the (consistently redundant) system is
    solved in the least-squares sense.

    Raises
    ------
    EquilibriumNotFound
        No convergence within ``max_iter`` iterations from this start.
    SingularIterateError
        Rank-deficient residual Jacobian at an iterate.
    """
    if not net.lossless:
        raise ValueError("the Newton solver handles lossless networks only")
    if slack is not None and not 0 <= slack < net.n:
        raise ValueError(f"slack index {slack} out of range for {net.n} nodes")
    n = net.n
    if init is None:
        delta = np.zeros(n)
        E = np.array(params.Ed, dtype=float)
    else:
        delta = np.array(init.delta, dtype=float)
        E = np.array(init.E, dtype=float)

    if slack is not None:
        delta -= delta[slack]
        delta[slack] = 0.0
        E[slack] = params.Ed[slack]
        row_nodes = [j for j in range(n) if j != slack]
        delta_cols = row_nodes
        E_cols = row_nodes
        square = True
    else:
        delta -= delta[0]
        row_nodes = list(range(n))
        delta_cols = list(range(1, n))
        E_cols = list(range(n))
        square = False

    def res(d, e) -> np.ndarray:
        return residual(SystemState(d, np.zeros(n), e), params, net, slack)

    r = res(delta, E)
    rnorm = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if rnorm < tol:
            break
        J = _residual_jacobian(delta, E, params, net, row_nodes, delta_cols, E_cols)
        ncols = len(delta_cols) + len(E_cols)
        try:
            if square:
                step = np.linalg.solve(J, r)
            else:
                step, _, rank, _ = np.linalg.lstsq(J, r, rcond=None)
                if rank < ncols:
                    raise np.linalg.LinAlgError(f"rank {rank} < {ncols}")
        except np.linalg.LinAlgError as exc:
            raise SingularIterateError(
                f"residual Jacobian singular at iterate (|r|={rnorm:.3e}): {exc}",
                SystemState(delta, np.zeros(n), np.maximum(E, VOLTAGE_FLOOR)),
            ) from None

        # Damped update: keep voltages positive and require residual progress.
        scale = 1.0
        for _ in range(40):
            d_new = delta.copy()
            e_new = E.copy()
            d_new[delta_cols] -= scale * step[: len(delta_cols)]
            e_new[E_cols] -= scale * step[len(delta_cols) :]
            if np.all(e_new >= VOLTAGE_FLOOR):
                r_new = res(d_new, e_new)
                rn_new = float(np.max(np.abs(r_new)))
                if rn_new < rnorm or scale < 1e-6:
                    break
            scale *= 0.5
        else:
            raise EquilibriumNotFound(
                f"no equilibrium found from this start (stalled at |r|={rnorm:.3e})"
            )
        delta, E, r, rnorm = d_new, e_new, r_new, rn_new
    if not rnorm < tol:
        raise EquilibriumNotFound(
            f"no equilibrium found from this start (|r|={rnorm:.3e} after {max_iter} iterations)"
        )

    state = SystemState(delta, np.zeros(n), E)
    return Equilibrium(state=state, residual_norm=rnorm, method="newton", slack=slack)


@dataclass(frozen=True)
class SingleInverterParams:
    """One inverter behind a coupling susceptance B to an infinite grid.

    The grid end holds voltage ``E_hat`` and the reference phase.  All
    droop fields mirror InverterParams, as scalars.
    """

    tau: float = 0.1
    kappa: float = 1.0
    chi: float = 0.05
    Pd: float = 0.0
    Qd: float = 0.05
    Ed: float = 1.0
    omega_d: float = 0.0
    B: float = 1.5
    E_hat: float = 1.0

    def __post_init__(self):
        for name in ("tau", "kappa", "chi", "Ed", "B", "E_hat"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")

    def as_network(self) -> tuple[GridNetwork, InverterParams, int]:
        """Two-node representation: node 0 the inverter, node 1 the grid (slack)."""
        net = build_network([(0, 1, self.B)], n=2)
        params = InverterParams(
            tau=np.array([self.tau, 1.0]),
            kappa=np.array([self.kappa, 1.0]),
            chi=np.array([self.chi, 1.0]),
            Pd=np.array([self.Pd, 0.0]),
            Qd=np.array([self.Qd, 0.0]),
            Ed=np.array([self.Ed, self.E_hat]),
            omega_d=self.omega_d,
        )
        return net, params, 1

    def fixed_voltage_polynomial(self) -> np.ndarray:
        """Coefficients (highest order first) of the degree-4 polynomial
        whose positive real roots are the candidate equilibrium voltages.

        Derived by squaring and adding the two stationarity equations to
        eliminate the phase angle::

            (B E_hat E)^2 = (omega_d/kappa + Pd)^2
                            + (B E^2 + (E - Ed)/chi - Qd)^2
        """
        a = self.omega_d / self.kappa + self.Pd
        c4 = self.B**2
        c3 = 2.0 * self.B / self.chi
        c2 = 1.0 / self.chi**2 - 2.0 * self.B * (self.Ed / self.chi + self.Qd) - self.B**2 * self.E_hat**2
        c1 = -2.0 * (self.Ed + self.chi * self.Qd) / self.chi**2
        c0 = (self.Ed / self.chi + self.Qd) ** 2 + a**2
        return np.array([c4, c3, c2, c1, c0])


def single_inverter_equilibria(p: SingleInverterParams) -> list[Equilibrium]:
    """All admissible fixed points of the inverter-vs-infinite-grid system.

    Candidate voltages are the positive real roots of the quartic
    (companion-matrix eigenvalues via ``numpy.roots``); for each, the
    phase comes from ``arcsin((omega_d/kappa + Pd) / (B E_hat E))`` on
    the principal branch, with the complementary branch ``pi - delta``
    kept as well.  Squaring admits spurious candidates, so every pair is
    validated against the full stationarity residual before acceptance.

    An empty list means no admissible fixed point for these parameters
    (not an error).
    """
    net, params, slack = p.as_network()
    a = p.omega_d / p.kappa + p.Pd
    roots = np.roots(p.fixed_voltage_polynomial())
    found: list[Equilibrium] = []
    seen: list[tuple[float, float]] = []
    for root in roots:
        if abs(root.imag) > REAL_ROOT_TOL * (1.0 + abs(root.real)):
            continue
        E_s = float(root.real)
        if E_s <= 0.0:
            continue
        s = a / (p.B * p.E_hat * E_s)
        if abs(s) > 1.0 + 1e-12:
            continue
        s = min(1.0, max(-1.0, s))
        principal = float(np.arcsin(s))
        for delta_s in (principal, float(np.pi - principal)):
            state = SystemState(
                delta=np.array([delta_s, 0.0]),
                omega=np.zeros(2),
                E=np.array([E_s, p.E_hat]),
            )
            rnorm = residual_norm(state, params, net, slack)
            if rnorm >= RESIDUAL_TOL:
                continue
            if any(abs(delta_s - d0) < 1e-7 and abs(E_s - e0) < 1e-7 for d0, e0 in seen):
                continue
            seen.append((delta_s, E_s))
            found.append(
                Equilibrium(state=state, residual_norm=rnorm, method="analytic-quartic", slack=slack)
            )
    found.sort(key=lambda eq: (eq.state.E[0], eq.state.delta[0]))
    return found
