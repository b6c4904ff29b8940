"""Two-parameter sweeps, stability maps, separatrix extraction, audits.

Each grid cell is solved independently from the base system (no warm
starts), so maps are deterministic and order-free: identical specs give
bit-identical CSV.  Single-inverter systems use the analytic quartic
route; networks use Newton from the flat start.  A cell where no
admissible equilibrium exists is a regular outcome (the no-fixed-point
marker), not a failure; solver breakdowns are recorded in-cell and
never abort the sweep.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .criteria import CRITERION_NAMES, evaluate_criteria
from .equilibrium import (
    EquilibriumNotFound,
    SingularIterateError,
    single_inverter_equilibria,
    solve_newton,
)
from .linearization import build_linearization, eigen_stability, full_jacobian
from .systems import SystemSpec

CSV_COLUMNS = (
    "x", "y", "n_stable", "dominant_re", "dominant_im", "delta_star", "E_star",
    "cor1", "cor2", "cor3", "cor4", "cor5", "lemma2_I", "lemma2_II",
)
_VERDICT_CODE = {"satisfied": 1, "violated": 0, "not-applicable": -1}


@dataclass(frozen=True)
class Axis:
    """One sweep axis: a parameter path scanned over [lo, hi] in count steps."""

    path: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("axis needs count >= 2")
        if not self.lo < self.hi:
            raise ValueError("axis needs lo < hi")

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class SweepSpec:
    """Sweep definition: system, two axes, fixed overrides, evaluators.

    ``evaluators`` picks the criteria columns to fill ("lemma2" expands
    to both exact tests); fixed points and eigenvalues are always
    computed.
    """

    system: SystemSpec
    axis_x: Axis
    axis_y: Axis
    fixed: tuple = ()
    evaluators: tuple = ()
    seed: int = 0

    def criteria_names(self) -> list[str]:
        wanted = []
        for ev in self.evaluators:
            if ev == "lemma2":
                wanted += ["lemma2_I", "lemma2_II"]
            elif ev in CRITERION_NAMES:
                wanted.append(ev)
            elif ev in ("fixed-point", "eigen", "angle"):
                continue
            else:
                raise ValueError(f"unknown evaluator {ev!r}")
        return [name for name in CRITERION_NAMES if name in wanted]


@dataclass
class Cell:
    """Outcome at one grid point.

    ``n_stable`` counts eigen-stable equilibria; None marks a solver
    failure (text in ``failure``).  ``dominant`` and the representative
    state refer to the most stable equilibrium found; all equilibrium
    fields are None at no-fixed-point cells.
    """

    ix: int
    iy: int
    x: float
    y: float
    n_stable: int | None = 0
    n_equilibria: int = 0
    dominant: complex | None = None
    delta_star: float | None = None
    E_star: float | None = None
    criteria: dict = field(default_factory=dict)
    failure: str | None = None

    @property
    def stable(self) -> bool:
        return bool(self.n_stable) and self.n_stable > 0


@dataclass
class StabilityMap:
    """Grid of cells, row-major in (iy, ix)."""

    spec: SweepSpec
    xs: np.ndarray
    ys: np.ndarray
    cells: list

    def cell(self, ix: int, iy: int) -> Cell:
        return self.cells[iy * self.xs.size + ix]

    @property
    def n_failures(self) -> int:
        return sum(1 for c in self.cells if c.failure is not None)

    def stable_mask(self) -> np.ndarray:
        mask = np.zeros((self.ys.size, self.xs.size), dtype=bool)
        for c in self.cells:
            mask[c.iy, c.ix] = c.stable
        return mask

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for c in self.cells:
            row = [repr(float(c.x)), repr(float(c.y))]
            row.append(str(c.n_stable) if c.n_stable is not None else "-1")
            for val in (
                None if c.dominant is None else c.dominant.real,
                None if c.dominant is None else c.dominant.imag,
                c.delta_star,
                c.E_star,
            ):
                row.append("nan" if val is None else repr(float(val)))
            for name in CRITERION_NAMES:
                res = c.criteria.get(name)
                row.append(str(_VERDICT_CODE[res.verdict]) if res is not None else "-1")
            writer.writerow(row)


def evaluate_point(spec: SweepSpec, x: float, y: float) -> Cell:
    """Solve, classify and run criteria at one parameter point."""
    cell = Cell(ix=-1, iy=-1, x=float(x), y=float(y))
    overrides = list(spec.fixed) + [(spec.axis_x.path, x), (spec.axis_y.path, y)]
    system = spec.system.with_overrides(overrides)
    names = spec.criteria_names()
    try:
        if system.kind == "single":
            p = system.resolve()
            eqs = single_inverter_equilibria(p)
            net, params, slack = p.as_network()
        else:
            net, params, slack = system.resolve()
            try:
                eqs = [solve_newton(net, params, slack=slack)]
            except EquilibriumNotFound:
                eqs = []
        mode = "free" if slack is None else "slack-anchored"
        best = None
        n_stable = 0
        for eq in eqs:
            lin = build_linearization(eq, params, net)
            report = eigen_stability(full_jacobian(lin), mode)
            if report.verdict == "stable":
                n_stable += 1
            if best is None or report.dominant.real < best[1].dominant.real:
                best = (eq, report, lin)
        cell.n_equilibria = len(eqs)
        cell.n_stable = n_stable
        if best is not None:
            eq, report, lin = best
            cell.dominant = complex(report.dominant)
            free = [j for j in range(net.n) if j != slack]
            rep_node = free[int(np.argmax(np.abs(eq.state.delta[free])))]
            cell.delta_star = float(eq.state.delta[rep_node])
            cell.E_star = float(eq.state.E[rep_node])
            if names:
                results = evaluate_criteria(
                    eq, params, net, lin=lin, which=names, seed=spec.seed
                )
                cell.criteria = {r.name: r for r in results}
    except SingularIterateError as exc:
        cell.failure = f"singular iterate: {exc}"
        cell.n_stable = None
    except Exception as exc:  # per-cell failures must not abort the sweep
        cell.failure = f"{type(exc).__name__}: {exc}"
        cell.n_stable = None
    return cell


def sweep(spec: SweepSpec, threads: int = 1) -> StabilityMap:
    """Evaluate the full grid; cells are independent and order-free."""
    xs = spec.axis_x.values()
    ys = spec.axis_y.values()
    points = [(ix, iy) for iy in range(ys.size) for ix in range(xs.size)]

    def run(point):
        ix, iy = point
        cell = evaluate_point(spec, xs[ix], ys[iy])
        cell.ix, cell.iy = ix, iy
        return cell

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(run, points))
    else:
        cells = [run(p) for p in points]
    return StabilityMap(spec=spec, xs=xs, ys=ys, cells=cells)


def _refine_crossing(spec: SweepSpec, p_stable, p_other, tol: float = 1e-3):
    """Bisect the stable/not-stable transition along a segment of the grid."""
    a = np.asarray(p_stable, dtype=float)
    b = np.asarray(p_other, dtype=float)
    for _ in range(60):
        if np.max(np.abs(b - a)) <= tol:
            break
        mid = 0.5 * (a + b)
        if evaluate_point(spec, mid[0], mid[1]).stable:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def separatrix(smap: StabilityMap, tol: float = 1e-3, refine: bool = True) -> list:
    """Boundary polylines between stable and not-stable regions.

    Marching squares over the grid of cell centers; each edge crossing
    is refined by bisection on the underlying model to ``tol`` axis
    resolution (skipped when ``refine`` is False).  A uniformly stable
    or unstable map yields an empty list.
    """
    xs, ys = smap.xs, smap.ys
    stable = smap.stable_mask()
    spec = smap.spec

    crossings: dict = {}

    def crossing(i0, j0, i1, j1):
        key = (i0, j0, i1, j1)
        if key not in crossings:
            p0 = (xs[i0], ys[j0])
            p1 = (xs[i1], ys[j1])
            if stable[j0, i0]:
                s, o = p0, p1
            else:
                s, o = p1, p0
            if refine:
                pt = _refine_crossing(spec, s, o, tol)
            else:
                pt = 0.5 * (np.asarray(p0) + np.asarray(p1))
            crossings[key] = (float(pt[0]), float(pt[1]))
        return crossings[key]

    segments = []
    for j in range(ys.size - 1):
        for i in range(xs.size - 1):
            code = (
                (1 if stable[j, i] else 0)
                | (2 if stable[j, i + 1] else 0)
                | (4 if stable[j + 1, i + 1] else 0)
                | (8 if stable[j + 1, i] else 0)
            )
            if code in (0, 15):
                continue
            bottom = lambda: crossing(i, j, i + 1, j)
            top = lambda: crossing(i, j + 1, i + 1, j + 1)
            left = lambda: crossing(i, j, i, j + 1)
            right = lambda: crossing(i + 1, j, i + 1, j + 1)
            table = {
                1: [(left, bottom)], 2: [(bottom, right)], 3: [(left, right)],
                4: [(right, top)], 5: [(left, top), (bottom, right)],
                6: [(bottom, top)], 7: [(left, top)], 8: [(top, left)],
                9: [(top, bottom)], 10: [(top, right), (bottom, left)],
                11: [(top, right)], 12: [(right, left)], 13: [(right, bottom)],
                14: [(bottom, left)],
            }
            for e1, e2 in table[code]:
                segments.append((e1(), e2()))

    # Chain shared endpoints into polylines, deterministically.
    def key(pt):
        return (round(pt[0], 9), round(pt[1], 9))

    adj: dict = {}
    for a, b in segments:
        adj.setdefault(key(a), []).append((a, b))
        adj.setdefault(key(b), []).append((b, a))
    used = set()
    polylines = []
    for start in sorted(adj):
        for seg in adj[start]:
            seg_id = (key(seg[0]), key(seg[1]))
            if seg_id in used or (seg_id[1], seg_id[0]) in used:
                continue
            line = [seg[0], seg[1]]
            used.add(seg_id)
            while True:
                tail = key(line[-1])
                ext = None
                for nxt in adj.get(tail, []):
                    nid = (key(nxt[0]), key(nxt[1]))
                    if nid in used or (nid[1], nid[0]) in used:
                        continue
                    ext = nxt
                    used.add(nid)
                    break
                if ext is None:
                    break
                line.append(ext[1])
            polylines.append(line)
    return polylines


@dataclass(frozen=True)
class AuditReport:
    """Soundness audit of a sufficient criterion against the eigen verdicts."""

    criterion: str
    violations: int
    coverage: float
    n_criterion_satisfied: int
    n_eigen_stable: int
    violating_cells: tuple = ()

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "violations": self.violations,
            "coverage": self.coverage,
            "n_criterion_satisfied": self.n_criterion_satisfied,
            "n_eigen_stable": self.n_eigen_stable,
            "violating_cells": [list(c) for c in self.violating_cells],
        }


def containment_audit(smap: StabilityMap, criterion: str) -> AuditReport:
    """Count criterion-satisfied cells that are not eigen-stable.

    A sound sufficient criterion has zero violations; coverage is the
    satisfied count over the eigen-stable count (0 when nothing is
    stable).
    """
    if criterion not in CRITERION_NAMES:
        raise ValueError(f"unknown criterion {criterion!r}")
    violations = []
    n_sat = 0
    n_stable = 0
    for c in smap.cells:
        if c.failure is not None:
            continue
        if c.stable:
            n_stable += 1
        res = c.criteria.get(criterion)
        if res is not None and res.verdict == "satisfied":
            n_sat += 1
            if not c.stable:
                violations.append((c.x, c.y))
    coverage = (n_sat / n_stable) if n_stable else 0.0
    return AuditReport(
        criterion=criterion,
        violations=len(violations),
        coverage=coverage,
        n_criterion_satisfied=n_sat,
        n_eigen_stable=n_stable,
        violating_cells=tuple(violations),
    )
