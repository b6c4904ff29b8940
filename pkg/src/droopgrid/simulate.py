"""Time-domain integration of the nonlinear inverter equations.

The vector field in the rotating frame is, per node j::

    d(delta_j)/dt = omega_j
    tau_j d(omega_j)/dt = -omega_j + omega_d - kappa_j (P_el_j - Pd_j)
    tau_j d(E_j)/dt     = -E_j + Ed_j - chi_j (Q_el_j - Qd_j)

A slack node's state is frozen.  Scheduled parameter steps restart the
adaptive integrator exactly at the event times, so each segment is a
smooth initial-value problem integrated by an embedded Runge-Kutta 5(4)
pair.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .equilibrium import residual_norm
from .network import GridNetwork, InverterParams, SystemState, power_injections
from .paths import apply_network_overrides

BLOWUP_LIMIT = 1e3       # |omega| or |E| beyond this classifies as diverged
HARD_STOP = 1e4          # integration terminates once the state passes this
CONVERGED_RESIDUAL = 1e-6
CONVERGED_DRIFT = 1e-6
CYCLE_AMPLITUDE = 1e-4
CYCLE_DRIFT_FRACTION = 0.10


@dataclass(frozen=True)
class Schedule:
    """Ordered parameter steps (time, path, value) over a horizon t_end."""

    t_end: float
    events: tuple = ()

    def __post_init__(self):
        events = tuple((float(t), str(p), float(v)) for t, p, v in self.events)
        object.__setattr__(self, "events", events)
        times = [t for t, _, _ in events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        if times and (times[0] <= 0.0 or times[-1] >= self.t_end):
            raise ValueError("event times must lie strictly inside (0, t_end)")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")


@dataclass
class Trajectory:
    """Sampled trajectory with per-segment bookkeeping.

    ``delta``, ``omega``, ``E`` have shape (n_samples, n_nodes).
    ``segments`` lists (i0, i1, final_residual) index ranges, one per
    inter-event stretch; ``failed`` records integrator breakdown.
    """

    times: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    E: np.ndarray
    classification: str
    final_residual: float
    segments: list = field(default_factory=list)
    failed: bool = False

    @property
    def n(self) -> int:
        return self.delta.shape[1]

    def state(self, k: int) -> SystemState:
        return SystemState(self.delta[k], self.omega[k], self.E[k])

    def write_csv(self, fh) -> None:
        n = self.n
        writer = csv.writer(fh)
        header = (
            ["t"]
            + [f"delta_{j}" for j in range(n)]
            + [f"omega_{j}" for j in range(n)]
            + [f"E_{j}" for j in range(n)]
        )
        writer.writerow(header)
        for k in range(self.times.size):
            row = [repr(float(self.times[k]))]
            row += [repr(float(v)) for v in self.delta[k]]
            row += [repr(float(v)) for v in self.omega[k]]
            row += [repr(float(v)) for v in self.E[k]]
            writer.writerow(row)


def _rhs_factory(net: GridNetwork, params: InverterParams, slack: int | None):
    n = net.n
    inv_tau = 1.0 / params.tau

    def rhs(t, y):
        delta = y[:n]
        omega = y[n : 2 * n]
        E = y[2 * n :]
        dd = delta[:, None] - delta[None, :]
        EE = E[:, None] * E[None, :]
        P = np.sum(EE * net.B * np.sin(dd), axis=1)
        Q = -np.sum(EE * net.B * np.cos(dd), axis=1)
        if not net.lossless:
            P = P + np.sum(EE * net.G * np.cos(dd), axis=1)
            Q = Q + np.sum(EE * net.G * np.sin(dd), axis=1)
        ddelta = omega.copy()
        domega = inv_tau * (-omega + params.omega_d - params.kappa * (P - params.Pd))
        dE = inv_tau * (-E + params.Ed - params.chi * (Q - params.Qd))
        if slack is not None:
            ddelta[slack] = 0.0
            domega[slack] = 0.0
            dE[slack] = 0.0
        return np.concatenate([ddelta, domega, dE])

    return rhs


def _blowup_event(n: int):
    def event(t, y):
        return HARD_STOP - float(np.max(np.abs(y[n:])))

    event.terminal = True
    return event


def integrate(
    net: GridNetwork,
    params: InverterParams,
    init: SystemState,
    sched: Schedule,
    slack: int | None = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    sample_dt: float = 0.02,
    window: float | None = None,
) -> Trajectory:
    """Integrate the scheduled scenario and classify the result.

    Samples land on the global grid t = k * sample_dt plus the exact
    event instants.  Overrides accumulate: each event re-derives the
    (network, parameters) pair from the base system and every event up
    to and including itself.
    """
    if init.n != net.n:
        raise ValueError("initial state and network sizes differ")
    n = net.n
    boundaries = [0.0] + [t for t, _, _ in sched.events] + [sched.t_end]
    base_net, base_params = net, params
    active: list[tuple[str, float]] = []

    times_out: list[np.ndarray] = []
    ys_out: list[np.ndarray] = []
    segments: list[tuple[int, int, float]] = []
    y0 = init.as_vector()
    failed = False
    count = 0

    for k in range(len(boundaries) - 1):
        t0, t1 = boundaries[k], boundaries[k + 1]
        if k > 0:
            active.append(sched.events[k - 1][1:])
        cur_net, cur_params = apply_network_overrides(base_net, base_params, active)
        if slack is not None:
            y0[slack] = init.delta[slack]
            y0[n + slack] = 0.0
            y0[2 * n + slack] = init.E[slack]
        rhs = _rhs_factory(cur_net, cur_params, slack)
        first = int(np.ceil(t0 / sample_dt - 1e-9))
        grid = np.arange(first, int(np.floor(t1 / sample_dt + 1e-9)) + 1) * sample_dt
        t_eval = np.unique(np.concatenate([[t0], grid[(grid > t0) & (grid < t1)], [t1]]))
        sol = solve_ivp(
            rhs,
            (t0, t1),
            y0,
            method="RK45",
            t_eval=t_eval,
            rtol=rtol,
            atol=atol,
            events=_blowup_event(n),
            dense_output=False,
        )
        seg_t = sol.t
        seg_y = sol.y.T
        if seg_t.size == 0:
            failed = True
            break
        i0 = count
        skip = 1 if (k > 0 and seg_t.size > 0) else 0  # boundary sample already recorded
        times_out.append(seg_t[skip:])
        ys_out.append(seg_y[skip:])
        count += seg_t.size - skip
        end_state = seg_y[-1]
        seg_res = _safe_residual(end_state, cur_params, cur_net, slack)
        segments.append((i0 if k == 0 else i0 - 1, count, seg_res))
        y0 = end_state.copy()
        if sol.status != 0:  # blow-up event or failure: stop the schedule
            failed = sol.status < 0
            break

    t_all = np.concatenate(times_out) if times_out else np.zeros(0)
    y_all = np.vstack(ys_out) if ys_out else np.zeros((0, 3 * n))
    traj = Trajectory(
        times=t_all,
        delta=y_all[:, :n],
        omega=y_all[:, n : 2 * n],
        E=y_all[:, 2 * n :],
        classification="diverged",
        final_residual=segments[-1][2] if segments else float("inf"),
        segments=segments,
        failed=failed,
    )
    if window is None:
        span = t_all[-1] - t_all[0] if t_all.size > 1 else 1.0
        window = min(max(span / 5.0, 3.0 * sample_dt), span / 3.0001)
    traj.classification = classify(traj, window)
    return traj


def _safe_residual(y: np.ndarray, params: InverterParams, net: GridNetwork, slack) -> float:
    n = net.n
    E = y[2 * n :]
    if np.any(~np.isfinite(y)) or np.any(E <= 0.0):
        return float("inf")
    state = SystemState(y[:n], np.zeros(n), E)
    r = residual_norm(state, params, net, slack)
    # frequency deviations enter the stationarity gap directly
    w = y[n : 2 * n]
    if slack is not None:
        w = np.delete(w, slack)
    return max(r, float(np.max(np.abs(w), initial=0.0)))


def _window_stats(t: np.ndarray, Y: np.ndarray, window: float) -> tuple[float, float, float]:
    """(amplitude of last window, amplitude of previous, drift to final sample)."""
    t_end = t[-1]
    last = t >= t_end - window
    prev = (t >= t_end - 2 * window) & (t < t_end - window)
    amp_last = float(np.max(Y[last].max(axis=0) - Y[last].min(axis=0)))
    amp_prev = float(np.max(Y[prev].max(axis=0) - Y[prev].min(axis=0))) if prev.any() else 0.0
    drift = float(np.max(np.abs(Y[last] - Y[-1])))
    return amp_last, amp_prev, drift


def classify(traj: Trajectory, window: float) -> str:
    """Trichotomy {converged, limit-cycle, diverged} from windowed statistics.

    Diverged: integrator breakdown, non-finite samples, |omega| or |E|
    beyond 1e3, or non-positive voltages.  Converged: final residual
    below 1e-6 and state change over the last window below 1e-6.
    Limit-cycle: bounded, last-window amplitude above 1e-4 that is not
    shrinking by more than 10% per window.  Bounded leftovers (slow
    creeps, decaying rings) count as converged.
    """
    t, Y = traj.times, np.hstack([traj.delta, traj.omega, traj.E])
    if t.size < 2:
        return "diverged"
    span = t[-1] - t[0]
    if span < 3.0 * window:
        raise ValueError(f"trajectory span {span:.3g} covers fewer than 3 windows of {window:.3g}")
    if (
        traj.failed
        or not np.all(np.isfinite(Y))
        or np.max(np.abs(traj.omega)) > BLOWUP_LIMIT
        or np.max(np.abs(traj.E)) > BLOWUP_LIMIT
        or np.min(traj.E) <= 0.0
    ):
        return "diverged"
    amp_last, amp_prev, drift = _window_stats(t, Y, window)
    if traj.final_residual < CONVERGED_RESIDUAL and drift < CONVERGED_DRIFT:
        return "converged"
    if amp_last > CYCLE_AMPLITUDE:
        shrinking = amp_prev > amp_last and (amp_prev - amp_last) > CYCLE_DRIFT_FRACTION * amp_prev
        return "converged" if shrinking else "limit-cycle"
    return "converged"


def classify_segments(traj: Trajectory, window: float) -> list[str]:
    """Classify each inter-event segment of a scheduled run separately."""
    out = []
    for i0, i1, seg_res in traj.segments:
        sub = Trajectory(
            times=traj.times[i0:i1],
            delta=traj.delta[i0:i1],
            omega=traj.omega[i0:i1],
            E=traj.E[i0:i1],
            classification="",
            final_residual=seg_res,
            segments=[],
            failed=traj.failed and i1 == traj.segments[-1][1],
        )
        out.append(classify(sub, window))
    return out
