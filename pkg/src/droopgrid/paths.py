"""Dotted parameter paths shared by schedules and sweeps.

Network systems accept::

    inverter.<i>.<field>   one node's tau/kappa/chi/Pd/Qd/Ed
    global.<field>         every node (omega_d is global anyway)
    global.B_scale         multiply the base susceptance matrix
    global.P_scale         multiply the base active-power setpoints

Single-inverter systems accept the bare scalar field names
(tau, kappa, chi, Pd, Qd, Ed, omega_d, B, E_hat).

Scaling paths act on the *base* system, so a set of overrides is
order-independent and idempotent: scales are applied first, absolute
values afterwards.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .equilibrium import SingleInverterParams
from .network import GridNetwork, InverterParams

_NODE_FIELDS = ("tau", "kappa", "chi", "Pd", "Qd", "Ed")
_SINGLE_FIELDS = ("tau", "kappa", "chi", "Pd", "Qd", "Ed", "omega_d", "B", "E_hat")


def apply_network_overrides(
    net: GridNetwork, params: InverterParams, overrides
) -> tuple[GridNetwork, InverterParams]:
    """Apply (path, value) overrides to a base network system."""
    items = list(overrides.items()) if isinstance(overrides, dict) else list(overrides)
    scales = [(p, v) for p, v in items if p in ("global.B_scale", "global.P_scale")]
    sets = [(p, v) for p, v in items if p not in ("global.B_scale", "global.P_scale")]
    for path, value in scales:
        if path == "global.B_scale":
            net = GridNetwork(
                n=net.n, B=net.B * float(value), G=net.G * float(value), lossless=net.lossless
            )
        else:
            params = replace(params, Pd=np.array(params.Pd) * float(value))
    for path, value in sets:
        parts = path.split(".")
        if len(parts) == 2 and parts[0] == "global":
            params = params.with_field(parts[1], value, node=None)
        elif len(parts) == 3 and parts[0] == "inverter":
            params = params.with_field(parts[2], value, node=int(parts[1]))
        else:
            raise ValueError(f"unknown parameter path {path!r}")
    return net, params


def apply_single_overrides(p: SingleInverterParams, overrides) -> SingleInverterParams:
    """Apply (path, value) overrides to single-inverter scalar parameters."""
    items = list(overrides.items()) if isinstance(overrides, dict) else list(overrides)
    for path, value in items:
        name = path.split(".")[-1] if path.startswith("single.") else path
        if name not in _SINGLE_FIELDS:
            raise ValueError(f"unknown single-inverter parameter path {path!r}")
        p = replace(p, **{name: float(value)})
    return p
