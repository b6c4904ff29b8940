"""Nonlinear time integration, schedules, and trajectory classification."""

import io

import numpy as np
import pytest

from droopgrid import (
    Schedule,
    SingleInverterParams,
    SystemState,
    Trajectory,
    build_linearization,
    classify,
    classify_segments,
    eigen_stability,
    full_jacobian,
    integrate,
    single_inverter_equilibria,
)

STORY = dict(tau=0.1, B=1.5, kappa=1.0, Pd=1.2, Qd=0.05, Ed=1.0, E_hat=1.0, omega_d=0.0)


def _stable_point(chi):
    p = SingleInverterParams(**{**STORY, "chi": chi})
    net, params, slack = p.as_network()
    for eq in single_inverter_equilibria(p):
        rep = eigen_stability(full_jacobian(build_linearization(eq, params, net)), "slack-anchored")
        if rep.verdict == "stable":
            return p, net, params, slack, eq, rep
    raise AssertionError(f"no stable point at chi={chi}")


# ------------------------------------------------------------------ schedules

def test_schedule_validation():
    Schedule(t_end=10.0, events=((1.0, "inverter.0.chi", 0.1), (2.0, "inverter.0.chi", 0.2)))
    with pytest.raises(ValueError, match="increasing"):
        Schedule(t_end=10.0, events=((2.0, "a", 1.0), (2.0, "a", 2.0)))
    with pytest.raises(ValueError, match="inside"):
        Schedule(t_end=10.0, events=((11.0, "a", 1.0),))
    with pytest.raises(ValueError, match="t_end"):
        Schedule(t_end=-1.0)


# ---------------------------------------------------------------- integration

def test_fixed_point_stays_fixed():
    """From an eigen-stable equilibrium with no events, the state stays
    within 1e-7 over 50 s."""
    _, net, params, slack, eq, _ = _stable_point(0.05)
    traj = integrate(net, params, eq.state, Schedule(t_end=50.0), slack=slack, sample_dt=0.5)
    drift = max(
        float(np.max(np.abs(traj.delta - eq.state.delta[None, :]))),
        float(np.max(np.abs(traj.omega))),
        float(np.max(np.abs(traj.E - eq.state.E[None, :]))),
    )
    assert drift < 1e-7
    assert traj.classification == "converged"
    assert traj.final_residual < 1e-8


def test_droop_step_scenario_segment_classification():
    """Stepping the reactive gain 0.05 -> 0.15 -> 0.3: settle, settle again,
    then lose the fixed point and ring on a bounded cycle."""
    _, net, params, slack, eq, _ = _stable_point(0.05)
    sched = Schedule(
        t_end=36.0,
        events=((12.0, "inverter.0.chi", 0.15), (24.0, "inverter.0.chi", 0.3)),
    )
    traj = integrate(net, params, eq.state, sched, slack=slack)
    assert classify_segments(traj, window=3.0) == ["converged", "converged", "limit-cycle"]
    assert traj.classification == "limit-cycle"
    assert len(traj.segments) == 3
    # events applied exactly at their instants: both boundary samples present
    for t_ev in (12.0, 24.0):
        assert np.any(np.isclose(traj.times, t_ev))


def test_perturbation_decay_rate_matches_dominant_eigenvalue():
    """A small kick decays at the linear rate within 10%."""
    _, net, params, slack, eq, rep = _stable_point(0.15)
    init = SystemState(
        delta=eq.state.delta + np.array([1e-4, 0.0]),
        omega=np.zeros(2),
        E=eq.state.E,
    )
    traj = integrate(net, params, init, Schedule(t_end=6.0), slack=slack, sample_dt=0.005)
    ref = np.concatenate([eq.state.delta, np.zeros(2), eq.state.E])
    Y = np.hstack([traj.delta, traj.omega, traj.E])
    dist = np.linalg.norm(Y - ref[None, :], axis=1)
    sel = (traj.times > 1.0) & (dist > 1e-9)
    slope = np.polyfit(traj.times[sel], np.log(dist[sel]), 1)[0]
    assert slope == pytest.approx(rep.dominant.real, rel=0.10)


def test_rotating_frame_invariance():
    """Shifting all initial angles shifts the angle trace and nothing else."""
    _, net, params, slack, eq, _ = _stable_point(0.15)
    init = SystemState(eq.state.delta + np.array([0.05, 0.0]), np.zeros(2), eq.state.E)
    base = integrate(net, params, init, Schedule(t_end=5.0), slack=None, sample_dt=0.05)
    c = 0.9
    shifted_init = SystemState(init.delta + c, np.zeros(2), init.E)
    shifted = integrate(net, params, shifted_init, Schedule(t_end=5.0), slack=None, sample_dt=0.05)
    assert np.max(np.abs(shifted.delta - base.delta - c)) < 1e-9
    assert np.max(np.abs(shifted.omega - base.omega)) < 1e-9
    assert np.max(np.abs(shifted.E - base.E)) < 1e-9


def test_tolerance_robustness_of_classification():
    _, net, params, slack, eq, _ = _stable_point(0.05)
    sched = Schedule(
        t_end=36.0,
        events=((12.0, "inverter.0.chi", 0.15), (24.0, "inverter.0.chi", 0.3)),
    )
    loose = integrate(net, params, eq.state, sched, slack=slack)
    tight = integrate(net, params, eq.state, sched, slack=slack, rtol=0.5e-8, atol=0.5e-10)
    assert classify_segments(loose, 3.0) == classify_segments(tight, 3.0)


# -------------------------------------------------------------- classification

def _synthetic(t, Y, residual=0.0, failed=False):
    n = Y.shape[1] // 3
    return Trajectory(
        times=t,
        delta=Y[:, :n],
        omega=Y[:, n : 2 * n],
        E=Y[:, 2 * n :],
        classification="",
        final_residual=residual,
        segments=[],
        failed=failed,
    )


def test_classify_constant_trajectory():
    t = np.linspace(0, 10, 201)
    Y = np.hstack([np.full((201, 1), 0.3), np.zeros((201, 1)), np.ones((201, 1))])
    assert classify(_synthetic(t, Y, residual=1e-9), window=2.0) == "converged"


def test_classify_exponential_blowup():
    t = np.linspace(0, 10, 201)
    E = np.exp(t)[:, None]
    Y = np.hstack([np.zeros((201, 1)), np.zeros((201, 1)), E])
    assert classify(_synthetic(t, Y, residual=np.inf), window=2.0) == "diverged"


def test_classify_steady_oscillation():
    t = np.linspace(0, 30, 1501)
    osc = 0.2 * np.sin(2.0 * t)[:, None]
    Y = np.hstack([0.5 + osc, np.zeros((1501, 1)), np.ones((1501, 1))])
    assert classify(_synthetic(t, Y, residual=0.05), window=5.0) == "limit-cycle"


def test_classify_decaying_ring_counts_as_converged():
    t = np.linspace(0, 30, 1501)
    osc = (0.2 * np.exp(-0.3 * t) * np.sin(2.0 * t))[:, None]
    Y = np.hstack([0.5 + osc, np.zeros((1501, 1)), np.ones((1501, 1))])
    assert classify(_synthetic(t, Y, residual=0.05), window=5.0) == "converged"


def test_classify_needs_three_windows():
    t = np.linspace(0, 3, 31)
    Y = np.zeros((31, 3))
    Y[:, 2] = 1.0
    with pytest.raises(ValueError, match="windows"):
        classify(_synthetic(t, Y), window=2.0)


def test_classify_failed_integration_is_diverged():
    t = np.linspace(0, 10, 101)
    Y = np.hstack([np.zeros((101, 2)), np.ones((101, 1))])
    assert classify(_synthetic(t, Y, residual=0.0, failed=True), window=2.0) == "diverged"


# ------------------------------------------------------------------- output

def test_trajectory_csv_layout():
    _, net, params, slack, eq, _ = _stable_point(0.05)
    traj = integrate(net, params, eq.state, Schedule(t_end=1.0), slack=slack, sample_dt=0.25)
    buf = io.StringIO()
    traj.write_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "t,delta_0,delta_1,omega_0,omega_1,E_0,E_1"
    assert len(lines) == traj.times.size + 1
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == 0.0 and len(first) == 7
