"""Sweeps, stability maps, separatrix extraction, containment audits."""

import io

import numpy as np
import pytest

from droopgrid import (
    Axis,
    SweepSpec,
    containment_audit,
    separatrix,
    single_inverter_spec,
    sweep,
    tree_spec,
    two_inverter_spec,
)
from droopgrid.sweep import CSV_COLUMNS, Cell, StabilityMap, evaluate_point


def _single_sweep_spec(chi=0.5, nx=14, ny=14, evaluators=()):
    return SweepSpec(
        system=single_inverter_spec(tau=0.1, B=1.5, kappa=1.0, chi=chi, Ed=1.0, E_hat=1.0),
        axis_x=Axis("Qd", 0.0, 1.0, nx),
        axis_y=Axis("Pd", 0.0, 3.0, ny),
        evaluators=tuple(evaluators),
    )


# ----------------------------------------------------------------- validation

def test_axis_validation():
    with pytest.raises(ValueError, match="count"):
        Axis("Pd", 0.0, 1.0, 1)
    with pytest.raises(ValueError, match="lo < hi"):
        Axis("Pd", 1.0, 0.0, 5)


def test_unknown_evaluator_rejected():
    spec = SweepSpec(
        system=single_inverter_spec(),
        axis_x=Axis("Qd", 0.0, 1.0, 2),
        axis_y=Axis("Pd", 0.0, 1.0, 2),
        evaluators=("nope",),
    )
    with pytest.raises(ValueError, match="evaluator"):
        spec.criteria_names()


# -------------------------------------------------------------------- sweeps

def test_degenerate_grid_identical_cells():
    """Both grid points at one stable parameter set: identical outcomes."""
    spec = SweepSpec(
        system=single_inverter_spec(chi=0.05),
        axis_x=Axis("Qd", 0.05, 0.05 + 1e-12, 2),
        axis_y=Axis("Pd", 0.8, 0.8 + 1e-12, 2),
        evaluators=("cor4",),
    )
    smap = sweep(spec)
    cells = smap.cells
    assert all(c.stable for c in cells)
    ref = cells[0].dominant.real
    assert all(abs(c.dominant.real - ref) < 1e-9 for c in cells)


def test_single_inverter_map_structure():
    """Stable region bounded above in Pd; every column transitions from
    stable to no-fixed-point as Pd grows."""
    smap = sweep(_single_sweep_spec())
    mask = smap.stable_mask()
    for ix in range(smap.xs.size):
        col = mask[:, ix]
        assert col[0], "low-power cells must be stable"
        k = int(np.argmin(col))  # first unstable row
        assert not col[k:].any(), "stability must not reappear above the fold"
        top = smap.cell(ix, smap.ys.size - 1)
        assert top.n_equilibria == 0, "top rows must be past the fold"


def test_boundary_cells_approach_fold():
    """Adjacent to the no-fixed-point region the two branches are close:
    the dominant eigenvalue magnitude is small relative to interior cells."""
    smap = sweep(_single_sweep_spec(nx=10, ny=60))
    mask = smap.stable_mask()
    for ix in range(0, smap.xs.size, 3):
        col = mask[:, ix]
        k = int(np.argmin(col))
        if k == 0 or col[k:].any():
            continue
        boundary = smap.cell(ix, k - 1)
        interior = smap.cell(ix, 0)
        assert abs(boundary.dominant.real) < 0.5 * abs(interior.dominant.real)
        assert boundary.delta_star > 0.9


def test_max_power_grows_with_coupling():
    """In the coupling-power plane the transmissible power rises almost
    linearly with the coupling strength."""
    spec = SweepSpec(
        system=single_inverter_spec(chi=0.5, Qd=0.05),
        axis_x=Axis("B", 0.5, 5.0, 16),
        axis_y=Axis("Pd", 0.05, 4.0, 60),
    )
    smap = sweep(spec)
    mask = smap.stable_mask()
    max_pd = []
    for ix in range(smap.xs.size):
        rows = np.flatnonzero(mask[:, ix])
        max_pd.append(smap.ys[rows[-1]] if rows.size else 0.0)
    max_pd = np.array(max_pd)
    assert np.all(np.diff(max_pd) >= -1e-12)
    r = np.corrcoef(smap.xs, max_pd)[0, 1]
    assert r > 0.99


def test_sweep_determinism_and_threading():
    spec = _single_sweep_spec(nx=8, ny=8, evaluators=("cor4", "lemma2"))
    a, b = sweep(spec), sweep(spec)
    c = sweep(spec, threads=4)
    bufs = []
    for m in (a, b, c):
        buf = io.StringIO()
        m.write_csv(buf)
        bufs.append(buf.getvalue())
    assert bufs[0] == bufs[1] == bufs[2]


def test_csv_layout_and_verdict_encoding():
    spec = _single_sweep_spec(nx=4, ny=4, evaluators=("cor1", "cor4", "lemma2"))
    smap = sweep(spec)
    buf = io.StringIO()
    smap.write_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 17
    for line in lines[1:]:
        parts = line.split(",")
        assert len(parts) == len(CSV_COLUMNS)
        # criteria fields encode {1, 0, -1}
        for v in parts[7:]:
            assert v in ("1", "0", "-1")
        # unevaluated criteria stay -1
        assert parts[CSV_COLUMNS.index("cor2")] == "-1"


def test_failed_cell_csv_encoding():
    xs = np.array([0.0, 1.0])
    ys = np.array([0.0, 1.0])
    cells = [Cell(ix, iy, xs[ix], ys[iy]) for iy in range(2) for ix in range(2)]
    cells[3].failure = "boom"
    cells[3].n_stable = None
    smap = StabilityMap(spec=_single_sweep_spec(), xs=xs, ys=ys, cells=cells)
    assert smap.n_failures == 1
    buf = io.StringIO()
    smap.write_csv(buf)
    last = buf.getvalue().strip().splitlines()[-1].split(",")
    assert last[2] == "-1" and last[3] == "nan"


# ----------------------------------------------------------------- separatrix

def test_separatrix_empty_on_uniform_map():
    spec = SweepSpec(
        system=single_inverter_spec(chi=0.05),
        axis_x=Axis("Qd", 0.0, 0.2, 4),
        axis_y=Axis("Pd", 0.0, 0.5, 4),
    )
    smap = sweep(spec)
    assert smap.stable_mask().all()
    assert separatrix(smap) == []


def test_separatrix_tracks_boundary():
    smap = sweep(_single_sweep_spec(nx=12, ny=12))
    lines = separatrix(smap, tol=1e-3)
    assert lines, "boundary expected on this map"
    pts = np.array([p for line in lines for p in line])
    assert pts[:, 0].min() >= smap.xs[0] - 1e-9 and pts[:, 0].max() <= smap.xs[-1] + 1e-9
    # every refined point is a true stability transition within tolerance:
    # nudging along y by the tolerance flips stability across the fold
    for x, y in pts[:: max(1, len(pts) // 6)]:
        lo = evaluate_point(smap.spec, x, y - 2e-3).stable
        hi = evaluate_point(smap.spec, x, y + 2e-3).stable
        if lo != hi:
            continue
        lo = evaluate_point(smap.spec, x - 2e-3, y).stable
        hi = evaluate_point(smap.spec, x + 2e-3, y).stable
        assert lo != hi, f"no transition near refined point ({x}, {y})"


def test_stable_region_shrinks_with_reactive_gain():
    """Larger reactive gain strictly shrinks the stable set in the
    coupling-power plane (cellwise nesting)."""
    masks = []
    for chi in (0.25, 0.5, 0.75):
        spec = SweepSpec(
            system=single_inverter_spec(chi=chi, Qd=0.05),
            axis_x=Axis("B", 0.25, 5.0, 18),
            axis_y=Axis("Pd", 0.05, 4.0, 18),
        )
        masks.append(sweep(spec).stable_mask())
    assert not (masks[1] & ~masks[0]).any()
    assert not (masks[2] & ~masks[1]).any()
    assert masks[0].sum() > masks[1].sum() > masks[2].sum()


# -------------------------------------------------------------------- audits

def test_two_inverter_containment_audits():
    spec = SweepSpec(
        system=two_inverter_spec(chi=0.1),
        axis_x=Axis("global.B_scale", 0.2, 3.0, 10),
        axis_y=Axis("global.P_scale", 0.1, 2.0, 10),
        evaluators=("cor1", "cor2", "cor3", "cor4", "cor5", "lemma2"),
    )
    smap = sweep(spec)
    assert smap.n_failures == 0
    for crit in ("cor4", "cor5", "lemma2_I", "lemma2_II"):
        report = containment_audit(smap, crit)
        assert report.violations == 0, f"{crit}: {report.violating_cells}"
    exact = containment_audit(smap, "lemma2_I")
    assert exact.coverage == pytest.approx(1.0)


def test_tree_audit_is_conservative():
    """On the tree the gain-and-connectivity bound is sound but strictly
    conservative: every certified cell is stable, many stable cells are
    uncertified."""
    spec = SweepSpec(
        system=tree_spec(chi=0.5),
        axis_x=Axis("global.chi", 0.02, 1.0, 10),
        axis_y=Axis("global.P_scale", 0.1, 2.0, 10),
        fixed=(("global.B_scale", 1.5),),
        evaluators=("cor4", "lemma2"),
    )
    smap = sweep(spec)
    rep = containment_audit(smap, "cor4")
    assert rep.violations == 0
    assert 0.0 < rep.coverage < 1.0
    exact = containment_audit(smap, "lemma2_I")
    assert exact.violations == 0 and exact.coverage == pytest.approx(1.0)


def test_tree_gain_bound_empty_at_large_gain_coupling():
    """With reactive gain 0.5 every interior tree node has coupling row sum
    at least 2B, so the bound cannot fire anywhere on a B-scan: sound
    (zero violations) with zero coverage."""
    spec = SweepSpec(
        system=tree_spec(chi=0.5),
        axis_x=Axis("global.B_scale", 0.5, 5.0, 6),
        axis_y=Axis("global.P_scale", 0.1, 2.0, 6),
        evaluators=("cor4",),
    )
    rep = containment_audit(sweep(spec), "cor4")
    assert rep.violations == 0
    assert rep.n_criterion_satisfied == 0


def test_audit_zero_coverage_when_never_satisfied():
    spec = SweepSpec(
        system=two_inverter_spec(chi=5.0),   # far beyond any gain cap
        axis_x=Axis("global.B_scale", 0.2, 1.0, 4),
        axis_y=Axis("global.P_scale", 0.1, 0.5, 4),
        evaluators=("cor4",),
    )
    smap = sweep(spec)
    rep = containment_audit(smap, "cor4")
    assert rep.violations == 0
    assert rep.n_criterion_satisfied == 0
    assert rep.coverage == 0.0


def test_audit_unknown_criterion():
    smap = sweep(_single_sweep_spec(nx=4, ny=4))
    with pytest.raises(ValueError, match="criterion"):
        containment_audit(smap, "angle-ish")


# ------------------------------------------------------------ built-in parity

def test_two_inverter_system_shape():
    net, params, slack = two_inverter_spec().resolve()
    assert slack == 1
    assert params.Pd.tolist() == [1.0, -1.0]
    assert net.B[0, 1] == 1.0


def test_tree_system_shape():
    net, params, slack = tree_spec().resolve()
    assert slack == 0
    assert net.n == 10
    assert params.Pd.tolist() == [-1.5] * 4 + [1.0] * 6
    assert abs(params.Pd.sum()) < 1e-12
    degrees = (net.B > 0).sum(axis=1)
    assert degrees.tolist() == [3, 3, 3, 3, 1, 1, 1, 1, 1, 1]
    scaled, sparams, _ = tree_spec().with_overrides(
        {"global.B_scale": 2.0, "global.P_scale": 0.5}
    ).resolve()
    assert scaled.B[0, 1] == 2.0
    assert sparams.Pd.tolist() == [-0.75] * 4 + [0.5] * 6
