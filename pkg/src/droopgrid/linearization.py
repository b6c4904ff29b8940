"""Linearized dynamics around an equilibrium and eigenvalue classification.

The linearization of the inverter equations around an operating point
``(delta°, 0, E°)`` is organized through three N x N coupling matrices:

* ``Lam`` -- sensitivity of active power to angles (a weighted Laplacian
  when all angle differences stay within +-pi/2),
* ``A``   -- cross coupling between angles and voltages,
* ``H``   -- sensitivity of reactive power to voltages, with
  ``H_tilde = H - X^-1 E^-1`` absorbing the droop feedback.

With diagonal matrices T (time constants), K (active gains), X (reactive
gains) and E (equilibrium voltages), the state Jacobian in the ordering
``(angle, frequency, voltage)`` reads::

    J = [[0,          I,      0        ],
         [-T^-1 K Lam, -T^-1, T^-1 K A^T],
         [T^-1 X E A,  0,     T^-1 X E H_tilde]]

For a slack-anchored system the slack rows/columns are removed.  Without
a slack the uniform phase shift is an exact zero mode and is excluded
from the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .network import GridNetwork, InverterParams, SystemState

if TYPE_CHECKING:  # pragma: no cover
    from .equilibrium import Equilibrium

STABILITY_MARGIN = 1e-9     # verdict threshold on Re(mu)
ZERO_MODE_TOL = 1e-8        # magnitude window for the discarded shift mode
DEFINITENESS_TOL = 1e-10
SYMMETRY_TOL = 1e-12


def coupling_matrices(
    delta: np.ndarray, E: np.ndarray, net: GridNetwork
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build (Lam, A, H) at the state (delta, E).

    Off-diagonal / diagonal entries::

        Lam[j,l] = -E_j E_l B[j,l] cos(d_l - d_j)      Lam[j,j] = sum_{k!=j} E_j E_k B[j,k] cos(d_k - d_j)
        A[j,l]   = -E_l B[j,l] sin(d_l - d_j)          A[j,j]   = sum_{k!=j} E_k B[j,k] sin(d_k - d_j)
        H[j,l]   =  B[j,l] cos(d_l - d_j)              H[j,j]   = 2 B[j,j] + sum_{k!=j} B[j,k] cos(d_k - d_j) E_k / E_j

    Lam and A have exact zero row sums; Lam and H are symmetric.
    """
    if not net.lossless:
        raise ValueError("linear stability analysis is implemented for lossless networks only")
    delta = np.asarray(delta, dtype=float)
    E = np.asarray(E, dtype=float)
    dlj = delta[None, :] - delta[:, None]  # d_l - d_j in entry (j, l)
    cos_lj = np.cos(dlj)
    sin_lj = np.sin(dlj)

    W = (E[:, None] * E[None, :]) * net.B * cos_lj
    Lam = -W
    np.fill_diagonal(Lam, W.sum(axis=1) - np.diag(W))

    V = (E[None, :] * net.B) * sin_lj
    A = -V
    np.fill_diagonal(A, V.sum(axis=1))  # diagonal of V is zero (sin 0)

    U = net.B * cos_lj * (E[None, :] / E[:, None])
    H = net.B * cos_lj
    np.fill_diagonal(H, 2.0 * np.diag(net.B) + (U.sum(axis=1) - np.diag(U)))

    return Lam, A, H


@dataclass(frozen=True)
class LinearizedSystem:
    """Coupling matrices and diagonal factors at an equilibrium.

    Matrices are over all n nodes; ``free`` lists the non-slack indices
    that carry dynamics.  ``restrict`` produces the free-node views used
    by the Jacobians and the explicit criteria.
    """

    Lam: np.ndarray
    A: np.ndarray
    H: np.ndarray
    H_tilde: np.ndarray
    E0: np.ndarray
    tau: np.ndarray
    kappa: np.ndarray
    chi: np.ndarray
    slack: int | None = None

    @property
    def n(self) -> int:
        return self.E0.size

    @property
    def free(self) -> list[int]:
        return [j for j in range(self.n) if j != self.slack]

    def restrict(self, M: np.ndarray) -> np.ndarray:
        """Restrict an n x n matrix to the free (non-slack) block."""
        if self.slack is None:
            return M
        f = self.free
        return M[np.ix_(f, f)]

    def free_diag(self, name: str) -> np.ndarray:
        vec = getattr(self, name)
        if self.slack is None:
            return vec
        return vec[self.free]


def build_linearization(
    eq: "Equilibrium | SystemState",
    params: InverterParams,
    net: GridNetwork,
    slack: int | None = None,
) -> LinearizedSystem:
    """Evaluate the coupling matrices at an equilibrium.

    Accepts either an Equilibrium (its slack overrides the argument) or
    a bare SystemState.
    """
    state = getattr(eq, "state", eq)
    if hasattr(eq, "slack"):
        slack = eq.slack
    Lam, A, H = coupling_matrices(state.delta, state.E, net)
    H_tilde = H - np.diag(1.0 / (params.chi * state.E))
    return LinearizedSystem(
        Lam=Lam,
        A=A,
        H=H,
        H_tilde=H_tilde,
        E0=np.array(state.E),
        tau=np.array(params.tau),
        kappa=np.array(params.kappa),
        chi=np.array(params.chi),
        slack=slack,
    )


def full_jacobian(lin: LinearizedSystem) -> np.ndarray:
    """Assemble the 3m x 3m state Jacobian over the free nodes.

    Ordering is (angles, frequencies, voltages).  In free mode
    (no slack) the vector (1, 0, 0) spans the exact kernel.
    """
    Lam = lin.restrict(lin.Lam)
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    tau = lin.free_diag("tau")
    kappa = lin.free_diag("kappa")
    chi = lin.free_diag("chi")
    E0 = lin.free_diag("E0")
    m = tau.size

    J = np.zeros((3 * m, 3 * m))
    J[0:m, m : 2 * m] = np.eye(m)
    J[m : 2 * m, 0:m] = -(kappa / tau)[:, None] * Lam
    J[m : 2 * m, m : 2 * m] = -np.diag(1.0 / tau)
    J[m : 2 * m, 2 * m :] = (kappa / tau)[:, None] * A.T
    J[2 * m :, 0:m] = (chi * E0 / tau)[:, None] * A
    J[2 * m :, 2 * m :] = (chi * E0 / tau)[:, None] * Ht
    return J


def reduced_jacobian(lin: LinearizedSystem) -> np.ndarray:
    """Symmetric 2m x 2m matrix [[-Lam, A^T], [A, H_tilde]] over free nodes.

    Its definiteness on the shift-orthogonal subspace decides stability.
    Raises if the assembled matrix is not symmetric to 1e-12 (internal
    consistency failure).
    """
    Lam = lin.restrict(lin.Lam)
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    Xi = np.block([[-Lam, A.T], [A, Ht]])
    asym = np.max(np.abs(Xi - Xi.T), initial=0.0)
    if asym > SYMMETRY_TOL:
        raise RuntimeError(f"reduced Jacobian asymmetry {asym:.3e} exceeds {SYMMETRY_TOL}")
    return 0.5 * (Xi + Xi.T)


@dataclass(frozen=True)
class StabilityReport:
    """Eigenvalue classification of a state Jacobian.

    ``dominant`` is the eigenvalue with the largest real part after the
    zero-mode exclusion (free mode only).  ``verdict`` is ``stable`` when
    Re(dominant) < -1e-9, ``unstable`` when > +1e-9, ``marginal``
    otherwise or when the zero-mode bookkeeping fails.
    """

    eigenvalues: np.ndarray
    dominant: complex
    verdict: str
    zero_mode_excluded: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(m.real), float(m.imag)] for m in self.eigenvalues],
            "dominant": [float(self.dominant.real), float(self.dominant.imag)],
            "verdict": self.verdict,
            "zero_mode_excluded": self.zero_mode_excluded,
        }


def eigen_stability(J: np.ndarray, mode: str = "free") -> StabilityReport:
    """Classify a Jacobian spectrum.

    mode "free" discards the single eigenvalue nearest zero, which must
    satisfy ``|mu| < 1e-8``; ambiguous zero-mode structure yields a
    ``marginal`` verdict flagged for review.  mode "slack-anchored"
    evaluates the full spectrum.
    """
    if mode not in ("free", "slack-anchored"):
        raise ValueError(f"unknown mode {mode!r}")
    mu = np.linalg.eigvals(np.asarray(J, dtype=float))
    order = np.lexsort((mu.imag, mu.real))
    mu = mu[order]
    excluded = False
    note = ""
    spectrum = mu
    if mode == "free":
        k = int(np.argmin(np.abs(mu)))
        near_zero = np.abs(mu) < ZERO_MODE_TOL
        if np.abs(mu[k]) >= ZERO_MODE_TOL:
            note = f"expected zero mode has |mu|={np.abs(mu[k]):.3e} >= {ZERO_MODE_TOL}"
            dominant = mu[int(np.argmax(mu.real))]
            return StabilityReport(mu, dominant, "marginal", False, note)
        if near_zero.sum() > 1:
            note = f"{int(near_zero.sum())} eigenvalues within {ZERO_MODE_TOL} of zero; manual review"
            dominant = mu[int(np.argmax(mu.real))]
            return StabilityReport(mu, dominant, "marginal", False, note)
        spectrum = np.delete(mu, k)
        excluded = True
    dominant = spectrum[int(np.argmax(spectrum.real))]
    if dominant.real < -STABILITY_MARGIN:
        verdict = "stable"
    elif dominant.real > STABILITY_MARGIN:
        verdict = "unstable"
    else:
        verdict = "marginal"
    return StabilityReport(mu, complex(dominant), verdict, excluded, note)


def shift_complement_basis(dim: int, block: int) -> np.ndarray:
    """Orthonormal basis of the complement of span{(1,..,1,0,..,0)}.

    The distinguished vector has ones in the first ``block`` entries and
    zeros elsewhere; the basis is obtained from a Householder reflector
    mapping it onto the first coordinate axis, so the remaining columns
    are exactly orthogonal to it.
    """
    u = np.zeros(dim)
    u[:block] = 1.0
    v = u / np.linalg.norm(u)
    w = v - np.eye(dim)[:, 0]
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        Hh = np.eye(dim)
    else:
        w = w / nw
        Hh = np.eye(dim) - 2.0 * np.outer(w, w)
    return Hh[:, 1:]


def definiteness_on_subspace(M: np.ndarray, subspace: str = "full") -> str:
    """Classify a symmetric matrix restricted to a subspace.

    ``subspace`` is one of "D1" (complement of the uniform angle shift in
    R^m), "D2" (complement of the shift in the angle half of R^{2m}), or
    "full".  Returns "negative-definite", "negative-semidefinite-only",
    or "indefinite-or-positive" from the extreme projected eigenvalues
    at threshold 1e-10.
    """
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-9:
        raise ValueError("matrix must be symmetric")
    dim = M.shape[0]
    if subspace == "full":
        Q = np.eye(dim)
    elif subspace == "D1":
        Q = shift_complement_basis(dim, dim)
    elif subspace == "D2":
        if dim % 2 != 0:
            raise ValueError("D2 subspace needs an even-dimensional matrix")
        Q = shift_complement_basis(dim, dim // 2)
    else:
        raise ValueError(f"unknown subspace {subspace!r}")
    P = Q.T @ M @ Q
    P = 0.5 * (P + P.T)
    eigs = np.linalg.eigvalsh(P)
    if eigs[-1] < -DEFINITENESS_TOL:
        return "negative-definite"
    if eigs[-1] <= DEFINITENESS_TOL:
        return "negative-semidefinite-only"
    return "indefinite-or-positive"


def lyapunov_decrement(
    lin: LinearizedSystem, xi: np.ndarray, nu: np.ndarray, eps: np.ndarray
) -> float:
    """Time derivative of the quadratic certificate along the linear flow.

    For a perturbation (xi, nu, eps) of the free nodes::

        Vdot = -2 nu^T K^-1 nu
               - 2 (A xi + H_tilde eps)^T T^-1 X E (A xi + H_tilde eps)

    which is non-positive whenever the gain and voltage diagonals are
    positive, independent of the stability verdict.
    """
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    kappa = lin.free_diag("kappa")
    w = lin.free_diag("chi") * lin.free_diag("E0") / lin.free_diag("tau")
    r = A @ xi + Ht @ eps
    return float(-2.0 * nu @ (nu / kappa) - 2.0 * r @ (w * r))
