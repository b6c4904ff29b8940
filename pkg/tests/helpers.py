"""Shared generators and oracles for the test suite."""

from __future__ import annotations

import numpy as np

from droopgrid import (
    Equilibrium,
    GridNetwork,
    InverterParams,
    SystemState,
    build_network,
    power_injections,
)


def random_connected_network(rng, n, b_range=(0.5, 2.0), extra_edge_prob=0.3):
    """Random tree plus optional chords, couplings drawn from b_range."""
    couplings = []
    for j in range(1, n):
        k = int(rng.randint(0, j))
        couplings.append((k, j, float(rng.uniform(*b_range))))
    for j in range(n):
        for l in range(j + 2, n):
            if rng.rand() < extra_edge_prob and not any(
                (a, b) == (j, l) for a, b, _ in couplings
            ):
                couplings.append((j, l, float(rng.uniform(*b_range))))
    return build_network(couplings, n=n)


def random_equilibrium_instance(
    rng,
    n=None,
    slack=None,
    angle_spread=0.6,
    voltage_spread=(0.85, 1.15),
    chi_range=(0.02, 0.8),
):
    """Exact equilibrium by construction: draw a state, back-solve the setpoints.

    Given any state (delta, E) and gains, choosing Pd_j = P_el_j and
    Qd_j = Q_el_j + (E_j - Ed_j)/chi_j makes the stationarity residual
    vanish identically, so arbitrary operating points (stable or not)
    become exact equilibria of a valid parameter set.
    """
    if n is None:
        n = int(rng.randint(2, 7))
    net = random_connected_network(rng, n)
    delta = rng.uniform(-angle_spread, angle_spread, n)
    E = rng.uniform(*voltage_spread, size=n)
    if slack is not None:
        delta -= delta[slack]
        E[slack] = 1.0
    else:
        delta -= delta[0]
    state = SystemState(delta=delta, omega=np.zeros(n), E=E)
    Ed = np.ones(n) if slack is not None else rng.uniform(0.95, 1.05, n)
    if slack is not None:
        Ed[slack] = 1.0
    params = InverterParams(
        tau=rng.uniform(0.05, 0.3, n),
        kappa=rng.uniform(0.5, 2.0, n),
        chi=rng.uniform(*chi_range, size=n),
        Pd=np.zeros(n),
        Qd=np.zeros(n),
        Ed=Ed,
        omega_d=0.0,
    )
    P_el, Q_el = power_injections(state, net)
    params = InverterParams(
        tau=params.tau,
        kappa=params.kappa,
        chi=params.chi,
        Pd=P_el,
        Qd=Q_el + (E - Ed) / params.chi,
        Ed=Ed,
        omega_d=0.0,
    )
    eq = Equilibrium(state=state, residual_norm=0.0, method="newton", slack=slack)
    return net, params, eq


def finite_difference_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector map."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return J


def nonlinear_rhs(net: GridNetwork, params: InverterParams, slack):
    """The simulator vector field on the stacked (delta, omega, E) state."""
    n = net.n

    def rhs(y):
        delta, omega, E = y[:n], y[n : 2 * n], y[2 * n :]
        state = SystemState(delta, omega, np.maximum(E, 1e-9))
        P, Q = power_injections(state, net)
        ddelta = omega.copy()
        domega = (-omega + params.omega_d - params.kappa * (P - params.Pd)) / params.tau
        dE = (-E + params.Ed - params.chi * (Q - params.Qd)) / params.tau
        if slack is not None:
            ddelta[slack] = domega[slack] = dE[slack] = 0.0
        return np.concatenate([ddelta, domega, dE])

    return rhs


def grid_search_single_inverter(p, n_E=2001, delta_window=(-np.pi / 2, np.pi / 2),
                                E_window=(0.2, 2.0)):
    """Independent fixed-point oracle for the single-inverter system.

    The frequency equation pins sin(delta) = a / (B Ehat E) on the
    principal branch, so equilibria inside the window are the roots of
    the scalar voltage mismatch g(E).  Roots are located on a dense grid
    by sign changes (bisection) and by refined local minima of |g|
    (tangencies), then filtered by the full residual.
    """
    a = p.omega_d / p.kappa + p.Pd

    def g_vec(E):
        E = np.asarray(E, dtype=float)
        s = a / (p.B * p.E_hat * E)
        d = np.arcsin(np.clip(s, -1.0, 1.0))
        Q_el = p.B * E**2 - p.B * p.E_hat * E * np.cos(d)
        out = p.Ed - E + p.chi * (p.Qd - Q_el)
        return np.where(np.abs(s) > 1.0, np.nan, out)

    def g(E):
        return float(g_vec(E))

    Es = np.linspace(*E_window, n_E)
    vals = g_vec(Es)
    roots = []
    for k in range(n_E - 1):
        v0, v1 = vals[k], vals[k + 1]
        if np.isnan(v0) or np.isnan(v1):
            continue
        if v0 == 0.0:
            roots.append(Es[k])
        elif v0 * v1 < 0.0:
            lo, hi = Es[k], Es[k + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if g(lo) * g(mid) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
    # tangent contacts: local minima of |g| driven toward zero
    absvals = np.abs(vals)
    for k in range(1, n_E - 1):
        if np.isnan(absvals[k - 1]) or np.isnan(absvals[k]) or np.isnan(absvals[k + 1]):
            continue
        if absvals[k] <= absvals[k - 1] and absvals[k] <= absvals[k + 1] and absvals[k] < 1e-4:
            lo, hi = Es[k - 1], Es[k + 1]
            for _ in range(80):
                m1 = lo + (hi - lo) / 3.0
                m2 = hi - (hi - lo) / 3.0
                if abs(g(m1)) < abs(g(m2)):
                    hi = m2
                else:
                    lo = m1
            E_t = 0.5 * (lo + hi)
            if abs(g(E_t)) < 1e-9:
                roots.append(E_t)
    out = []
    for E in roots:
        s = a / (p.B * p.E_hat * E)
        if abs(s) > 1.0:
            continue
        d = float(np.arcsin(np.clip(s, -1.0, 1.0)))
        if not delta_window[0] <= d <= delta_window[1]:
            continue
        if any(abs(E - E0) < 1e-6 and abs(d - d0) < 1e-6 for d0, E0 in out):
            continue
        out.append((d, float(E)))
    return sorted(out, key=lambda t: t[1])
