"""Built-in test systems and the system-spec bundle used by sweeps.

Two benchmark networks are provided:

* a two-inverter pair exchanging power P over one line, the receiving
  inverter acting as slack;
* a ten-node tree: a central slack, three inner consumers drawing
  3P/2 each, and six outer producers injecting P each (two leaves per
  inner node), so the setpoints balance exactly.

Both default to tau=0.1, kappa=1, Ed=1, Qd=0.05, omega_d=0 and unit
base couplings, so ``global.B_scale`` plays the role of the uniform
line susceptance and ``global.P_scale`` the power level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .equilibrium import SingleInverterParams
from .network import GridNetwork, InverterParams, build_network
from .paths import apply_network_overrides, apply_single_overrides

TREE_EDGES = ((0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6), (2, 7), (3, 8), (3, 9))


@dataclass(frozen=True)
class SystemSpec:
    """A base system plus parameter-path overrides.

    ``kind`` is "single" (scalar single-inverter model, analytic fixed
    points) or "network" (full network, Newton fixed points).
    """

    kind: str
    net: GridNetwork | None = None
    params: InverterParams | None = None
    slack: int | None = None
    single: SingleInverterParams | None = None
    overrides: tuple = ()

    def with_overrides(self, more) -> "SystemSpec":
        items = list(more.items()) if isinstance(more, dict) else list(more)
        merged = tuple(list(self.overrides) + [(str(p), float(v)) for p, v in items])
        return SystemSpec(
            kind=self.kind,
            net=self.net,
            params=self.params,
            slack=self.slack,
            single=self.single,
            overrides=merged,
        )

    def resolve(self):
        """Apply the overrides to the base system.

        Returns SingleInverterParams for kind "single", else the tuple
        (net, params, slack).
        """
        if self.kind == "single":
            return apply_single_overrides(self.single, self.overrides)
        net, params = apply_network_overrides(self.net, self.params, self.overrides)
        return net, params, self.slack


def single_inverter_spec(**fields) -> SystemSpec:
    """Single inverter against an infinite grid; fields override defaults."""
    return SystemSpec(kind="single", single=SingleInverterParams(**fields))


def two_inverter_spec(chi: float = 0.05, tau: float = 0.1, kappa: float = 1.0,
                      Qd: float = 0.05, Ed: float = 1.0) -> SystemSpec:
    """Producer-consumer pair, slack at node 1, unit base coupling and power."""
    net = build_network([(0, 1, 1.0)], n=2)
    params = InverterParams.uniform(
        2, tau=tau, kappa=kappa, chi=chi, Pd=[1.0, -1.0], Qd=Qd, Ed=Ed, omega_d=0.0
    )
    return SystemSpec(kind="network", net=net, params=params, slack=1)


def tree_spec(chi: float = 0.5, tau: float = 0.1, kappa: float = 1.0,
              Qd: float = 0.05, Ed: float = 1.0) -> SystemSpec:
    """Ten-node tree: central slack 0, inner sinks 1-3, outer sources 4-9.

    Outer nodes inject the base power 1, inner ones (slack included)
    draw 3/2; ``global.P_scale`` sweeps the family power level.
    """
    net = build_network([(a, b, 1.0) for a, b in TREE_EDGES], n=10)
    Pd = [-1.5, -1.5, -1.5, -1.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    params = InverterParams.uniform(
        10, tau=tau, kappa=kappa, chi=chi, Pd=Pd, Qd=Qd, Ed=Ed, omega_d=0.0
    )
    return SystemSpec(kind="network", net=net, params=params, slack=0)


def builtin_spec(name: str, **kwargs) -> SystemSpec:
    """Look up a built-in system by name."""
    builders = {
        "single-inverter": single_inverter_spec,
        "two-inverter": two_inverter_spec,
        "tree": tree_spec,
    }
    if name not in builders:
        raise ValueError(f"unknown built-in system {name!r}; choose from {sorted(builders)}")
    return builders[name](**kwargs)
