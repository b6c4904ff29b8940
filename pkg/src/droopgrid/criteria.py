"""Explicit stability and instability criteria with numerical margins.

Every criterion reports a signed margin (positive = satisfied with
slack) so sweeps can plot distance-to-violation, not just verdicts.
Two exact tests decide stability by Schur-complementing the symmetric
reduced Jacobian [[-Lam, A^T], [A, H_tilde]] against either diagonal
block; five cheaper bounds relate droop gains, network coupling, and
algebraic connectivity to those exact conditions.

Criterion wire names ("cor1".."cor5", "lemma2_I", "lemma2_II") are the
identifiers fixed by the sweep CSV schema and the criteria report; the
functions carry descriptive names.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import cos, isnan

import numpy as np

from .equilibrium import Equilibrium
from .linearization import (
    DEFINITENESS_TOL,
    LinearizedSystem,
    shift_complement_basis,
)
from .network import GridNetwork, InverterParams

PINV_CUTOFF = 1e-10          # relative singular-value cutoff for the Laplacian pseudoinverse
SINGULAR_REL_TOL = 1e-12     # |eig| below this (relative) counts as singular

CRITERION_NAMES = ("cor1", "cor2", "cor3", "cor4", "cor5", "lemma2_I", "lemma2_II")


@dataclass(frozen=True)
class CriterionResult:
    """Verdict plus margin for one criterion.

    kind is one of {"sufficient-for-stability", "necessary-for-stability",
    "sufficient-for-instability", "exact"}; verdict is "satisfied",
    "violated", or "not-applicable" (margin is NaN in that case) and
    satisfied holds exactly when margin > 0.
    """

    name: str
    kind: str
    verdict: str
    margin: float
    detail: dict | None = None

    @classmethod
    def from_margin(cls, name: str, kind: str, margin: float, detail: dict | None = None):
        verdict = "satisfied" if margin > 0.0 else "violated"
        return cls(name, kind, verdict, float(margin), detail)

    @classmethod
    def not_applicable(cls, name: str, kind: str, reason: str):
        return cls(name, kind, "not-applicable", float("nan"), {"reason": reason})

    def to_dict(self) -> dict:
        detail = None
        if self.detail is not None:
            detail = {str(k): v for k, v in self.detail.items()}
        return {
            "name": self.name,
            "kind": self.kind,
            "verdict": self.verdict,
            "margin": None if isnan(self.margin) else self.margin,
            "detail": detail,
        }


@dataclass(frozen=True)
class SpectralAux:
    """Spectral data shared by the explicit criteria.

    lambda2 is the smallest eigenvalue of the angle-coupling matrix on
    the shift-orthogonal subspace (the algebraic connectivity when the
    matrix is a proper Laplacian); in slack-anchored mode it is the
    smallest eigenvalue of the grounded matrix.  v_F is the matching
    eigenvector, Lambda_pinv the truncated-SVD pseudoinverse, and norms
    holds the induced 2-norms of A, A^T and A^T H_tilde^-1 A (None when
    H_tilde is singular).
    """

    lambda2: float
    v_F: np.ndarray
    Lambda_pinv: np.ndarray
    norms: dict
    connected: bool
    grounded: bool


def spectral_aux(lin: LinearizedSystem) -> SpectralAux:
    """Connectivity eigenpair, pseudoinverse and coupling norms for `lin`."""
    Lam = lin.restrict(lin.Lam)
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    m = Lam.shape[0]
    grounded = lin.slack is not None

    if grounded:
        eigs, vecs = np.linalg.eigh(0.5 * (Lam + Lam.T))
        lambda2 = float(eigs[0])
        v_F = vecs[:, 0]
    else:
        Q = shift_complement_basis(m, m)
        P = Q.T @ Lam @ Q
        eigs, vecs = np.linalg.eigh(0.5 * (P + P.T))
        lambda2 = float(eigs[0])
        v_F = Q @ vecs[:, 0]
    v_F = v_F / np.linalg.norm(v_F)

    U, s, Vt = np.linalg.svd(0.5 * (Lam + Lam.T))
    cutoff = PINV_CUTOFF * (s[0] if s.size else 0.0)
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    Lam_pinv = (Vt.T * s_inv) @ U.T

    connected = lambda2 > DEFINITENESS_TOL
    if lambda2 > max(DEFINITENESS_TOL, 100.0 * cutoff):
        # smallest retained singular value of Lam must be lambda2 itself
        norm_pinv = float(np.max(s_inv, initial=0.0))
        if abs(norm_pinv * lambda2 - 1.0) > 1e-9:
            raise RuntimeError(
                f"pseudoinverse norm check failed: |Lam^+|*lambda2 = {norm_pinv * lambda2:.12f}"
            )

    norm_A = float(np.linalg.norm(A, 2))
    norms = {"A": norm_A, "At": float(np.linalg.norm(A.T, 2)), "AtHinvA": None}
    h_eigs = np.linalg.eigvalsh(0.5 * (Ht + Ht.T))
    h_scale = float(np.max(np.abs(h_eigs), initial=0.0))
    if h_scale > 0.0 and float(np.min(np.abs(h_eigs))) > SINGULAR_REL_TOL * h_scale:
        HinvA = np.linalg.solve(Ht, A)
        norms["AtHinvA"] = float(np.linalg.norm(A.T @ HinvA, 2))
    return SpectralAux(
        lambda2=lambda2,
        v_F=v_F,
        Lambda_pinv=Lam_pinv,
        norms=norms,
        connected=connected,
        grounded=grounded,
    )


def angle_condition(eq: Equilibrium, net: GridNetwork) -> CriterionResult:
    """cos(delta_j - delta_l) > 0 on every coupling.

    Sufficient for the angle-coupling matrix to be a proper weighted
    Laplacian, hence positive definite on the shift-orthogonal subspace.
    The margin is the worst cosine over all couplings.
    """
    delta = eq.state.delta
    detail = {}
    worst = 1.0
    for j, l, _ in net.couplings():
        c = cos(delta[j] - delta[l])
        detail[f"{j}-{l}"] = c
        worst = min(worst, c)
    return CriterionResult.from_margin("angle", "sufficient-for-stability", worst, detail)


def _offdiag_coupling_rows(net: GridNetwork) -> np.ndarray:
    """Row sums of the coupling susceptances, diagonal excluded."""
    off = net.B - np.diag(np.diag(net.B))
    return off.sum(axis=1)


def voltage_droop_bound(
    params: InverterParams, eq: Equilibrium, net: GridNetwork
) -> CriterionResult:
    """Per-node reactive-gain cap: 1/chi_j > sum_l B[j,l] (E_j + E_l).

    Sums run over couplings (off-diagonal entries).  Together with the
    angle condition this certifies a negative definite voltage matrix by
    a disk bound on its rows, and therefore a stable isolated voltage
    subsystem.  A violated verdict is inconclusive, not instability.
    """
    E = eq.state.E
    off = net.B - np.diag(np.diag(net.B))
    bound = (off * (E[:, None] + E[None, :])).sum(axis=1)
    free = [j for j in range(net.n) if j != eq.slack]
    margins = {j: float(1.0 / params.chi[j] - bound[j]) for j in free}
    worst = min(margins.values())
    return CriterionResult.from_margin("cor1", "sufficient-for-stability", worst, margins)


def voltage_instability_certificate(
    params: InverterParams,
    eq: Equilibrium,
    lin: LinearizedSystem,
    max_exhaustive: int = 15,
    n_random: int = 1000,
    seed: int = 0,
) -> CriterionResult:
    """Subset certificate for an indefinite voltage matrix.

    A node subset S with sum_{j in S} 1/(chi_j E_j) <= sum_{j,l in S} H[j,l]
    exhibits a non-negative quadratic form on the voltage block, which
    rules out negative definiteness and certifies linear instability.
    Exhaustive over subsets up to ``max_exhaustive`` free nodes; beyond
    that, singletons, the full set, and ``n_random`` seeded random
    subsets are tested (sound but incomplete).
    """
    free = lin.free
    H = lin.restrict(lin.H)
    gain = 1.0 / (lin.free_diag("chi") * lin.free_diag("E0"))
    m = len(free)

    def subset_margin(mask: np.ndarray) -> float:
        return float(mask @ H @ mask - gain @ mask)

    best = -np.inf
    best_subset: list[int] = []
    if m <= max_exhaustive:
        for size in range(1, m + 1):
            for combo in combinations(range(m), size):
                mask = np.zeros(m)
                mask[list(combo)] = 1.0
                val = subset_margin(mask)
                if val > best:
                    best, best_subset = val, [free[i] for i in combo]
    else:
        rng = np.random.RandomState(seed)
        candidates = [np.eye(m)[i] for i in range(m)] + [np.ones(m)]
        for _ in range(n_random):
            mask = (rng.rand(m) < 0.5).astype(float)
            if mask.sum() == 0:
                continue
            candidates.append(mask)
        for mask in candidates:
            val = subset_margin(mask)
            if val > best:
                best, best_subset = val, [free[i] for i in np.flatnonzero(mask)]
    return CriterionResult.from_margin(
        "cor2", "sufficient-for-instability", best, {"subset": best_subset}
    )


def connectivity_necessary_bound(
    aux: SpectralAux, lin: LinearizedSystem
) -> CriterionResult:
    """Leading-order necessary condition in the small-reactive-gain regime:

        lambda2 > sum_j chi_j E_j [(A v_F)_j]^2

    Diagnostic only; it carries an O(chi^2) remainder and never
    overrides the exact tests.
    """
    A = lin.restrict(lin.A)
    w = lin.free_diag("chi") * lin.free_diag("E0")
    Av = A @ aux.v_F
    rhs = float(w @ (Av * Av))
    return CriterionResult.from_margin(
        "cor3", "necessary-for-stability", aux.lambda2 - rhs, {"rhs": rhs}
    )


def droop_connectivity_bound(
    params: InverterParams,
    eq: Equilibrium,
    lin: LinearizedSystem,
    aux: SpectralAux,
    net: GridNetwork,
) -> CriterionResult:
    """Sufficient condition coupling gain caps to network connectivity:

        lambda2 > 0  and  1/chi_j > sum_l B[j,l] + E_j |A|_2 |A^T|_2 / lambda2

    with the susceptance sum over couplings (off-diagonal entries).
    Satisfied implies the exact angle-block test holds, hence linear
    stability.
    """
    if aux.lambda2 <= 0.0:
        return CriterionResult.from_margin(
            "cor4", "sufficient-for-stability", aux.lambda2, {"reason": "lambda2 <= 0"}
        )
    rows = _offdiag_coupling_rows(net)
    sec = aux.norms["A"] * aux.norms["At"] / aux.lambda2
    free = lin.free
    E = eq.state.E
    margins = {j: float(1.0 / params.chi[j] - rows[j] - E[j] * sec) for j in free}
    worst = min(margins.values())
    return CriterionResult.from_margin("cor4", "sufficient-for-stability", worst, margins)


def connectivity_norm_bound(lin: LinearizedSystem, aux: SpectralAux) -> CriterionResult:
    """Sufficient condition lambda2 > |A^T H_tilde^-1 A|_2, assuming the
    voltage matrix is negative definite; not applicable otherwise."""
    Ht = lin.restrict(lin.H_tilde)
    h_eigs = np.linalg.eigvalsh(0.5 * (Ht + Ht.T))
    h_scale = float(np.max(np.abs(h_eigs), initial=0.0))
    if h_scale == 0.0 or float(np.min(np.abs(h_eigs))) <= SINGULAR_REL_TOL * h_scale:
        return CriterionResult.not_applicable(
            "cor5", "sufficient-for-stability", "voltage matrix is singular"
        )
    if h_eigs[-1] >= 0.0:
        return CriterionResult.not_applicable(
            "cor5", "sufficient-for-stability", "voltage matrix is not negative definite"
        )
    norm = aux.norms["AtHinvA"]
    if norm is None:  # pragma: no cover - guarded by the singularity check above
        return CriterionResult.not_applicable(
            "cor5", "sufficient-for-stability", "voltage matrix is singular"
        )
    return CriterionResult.from_margin(
        "cor5", "sufficient-for-stability", aux.lambda2 - norm, {"norm": norm}
    )


def schur_angle_criterion(lin: LinearizedSystem, aux: SpectralAux) -> CriterionResult:
    """Exact test, angle block first: the angle matrix must be positive
    definite on the shift-orthogonal subspace and the voltage-side Schur
    complement H_tilde + A Lam^+ A^T negative definite.

    The margin is min(lambda2, -max eigenvalue of the complement), so
    either failing sub-condition drives it non-positive.
    """
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    S2 = Ht + A @ aux.Lambda_pinv @ A.T
    lam_max = float(np.linalg.eigvalsh(0.5 * (S2 + S2.T))[-1])
    margin = min(aux.lambda2, -lam_max)
    return CriterionResult.from_margin(
        "lemma2_I", "exact", margin, {"lambda2": aux.lambda2, "complement_max_eig": lam_max}
    )


def schur_voltage_criterion(lin: LinearizedSystem, aux: SpectralAux) -> CriterionResult:
    """Exact test, voltage block first: the voltage matrix must be
    negative definite and the angle-side Schur complement
    Lam + A^T H_tilde^-1 A positive definite on the shift-orthogonal
    subspace.  Not applicable when the voltage matrix is singular."""
    Lam = lin.restrict(lin.Lam)
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    h_eigs = np.linalg.eigvalsh(0.5 * (Ht + Ht.T))
    h_scale = float(np.max(np.abs(h_eigs), initial=0.0))
    if h_scale == 0.0 or float(np.min(np.abs(h_eigs))) <= SINGULAR_REL_TOL * h_scale:
        return CriterionResult.not_applicable("lemma2_II", "exact", "voltage matrix is singular")
    lam_max_H = float(h_eigs[-1])
    if lam_max_H >= 0.0:
        return CriterionResult.from_margin(
            "lemma2_II", "exact", -lam_max_H, {"voltage_max_eig": lam_max_H}
        )
    M = Lam + A.T @ np.linalg.solve(Ht, A)
    M = 0.5 * (M + M.T)
    if aux.grounded:
        lam_min = float(np.linalg.eigvalsh(M)[0])
    else:
        Q = shift_complement_basis(M.shape[0], M.shape[0])
        P = Q.T @ M @ Q
        lam_min = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
    margin = min(-lam_max_H, lam_min)
    return CriterionResult.from_margin(
        "lemma2_II", "exact", margin, {"voltage_max_eig": lam_max_H, "complement_min_eig": lam_min}
    )


def schur_decomposition(
    lin: LinearizedSystem, aux: SpectralAux
) -> tuple[np.ndarray, np.ndarray]:
    """Congruence factors (U, S) with Xi = U^T S U.

    S is block diagonal in (-Lam, H_tilde + A Lam^+ A^T) and U the unit
    upper-triangular transformation [[I, -Lam^+ A^T], [0, I]], which
    maps the shift direction onto itself.
    """
    Lam = lin.restrict(lin.Lam)
    A = lin.restrict(lin.A)
    Ht = lin.restrict(lin.H_tilde)
    m = Lam.shape[0]
    S2 = Ht + A @ aux.Lambda_pinv @ A.T
    S = np.block([[-Lam, np.zeros((m, m))], [np.zeros((m, m)), S2]])
    U = np.block([[np.eye(m), -aux.Lambda_pinv @ A.T], [np.zeros((m, m)), np.eye(m)]])
    return U, S


def evaluate_criteria(
    eq: Equilibrium,
    params: InverterParams,
    net: GridNetwork,
    lin: LinearizedSystem | None = None,
    which=None,
    seed: int = 0,
) -> list[CriterionResult]:
    """Evaluate the named criteria (all seven plus the angle condition
    by default) at one equilibrium, in canonical report order."""
    from .linearization import build_linearization

    if lin is None:
        lin = build_linearization(eq, params, net)
    aux = spectral_aux(lin)
    wanted = set(which) if which is not None else set(CRITERION_NAMES) | {"angle"}
    results = []
    if "angle" in wanted:
        results.append(angle_condition(eq, net))
    if "cor1" in wanted:
        results.append(voltage_droop_bound(params, eq, net))
    if "cor2" in wanted:
        results.append(voltage_instability_certificate(params, eq, lin, seed=seed))
    if "cor3" in wanted:
        results.append(connectivity_necessary_bound(aux, lin))
    if "cor4" in wanted:
        results.append(droop_connectivity_bound(params, eq, lin, aux, net))
    if "cor5" in wanted:
        results.append(connectivity_norm_bound(lin, aux))
    if "lemma2_I" in wanted:
        results.append(schur_angle_criterion(lin, aux))
    if "lemma2_II" in wanted:
        results.append(schur_voltage_criterion(lin, aux))
    return results
