"""Command-line front end.

Subcommands: fixed-point, stability, criteria, simulate, sweep,
separatrix, audit.  Every subcommand reads a JSON config (--config) and
writes JSON or CSV (--out, --format).  Exit codes: 0 success, 2 invalid
config, 3 when a sweep finished with per-cell failures.

System block accepted by all subcommands::

    {"system": "single-inverter", "params": {"Pd": 1.2, "chi": 0.05, ...}}
    {"system": "two-inverter" | "tree", "params": {...builder kwargs...},
     "overrides": {"global.B_scale": 1.5, ...}}
    {"system": "network", "network": "net.json" | {...inline...},
     "params": {"tau": 0.1, "chi": [...], ...}, "slack": 0}
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import __version__
from .criteria import evaluate_criteria
from .equilibrium import (
    EquilibriumNotFound,
    SingleInverterParams,
    single_inverter_equilibria,
    solve_newton,
)
from .linearization import build_linearization, eigen_stability, full_jacobian
from .network import InverterParams, SystemState, load_network, network_from_dict
from .simulate import Schedule, integrate
from .sweep import Axis, SweepSpec, containment_audit, separatrix, sweep
from .systems import SystemSpec, builtin_spec
from .paths import apply_network_overrides


class ConfigError(ValueError):
    """Invalid or incomplete configuration file."""


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _system_from_config(cfg: dict) -> SystemSpec:
    name = cfg.get("system")
    if name is None:
        raise ConfigError("config needs a 'system' entry")
    if name in ("single-inverter", "two-inverter", "tree"):
        spec = builtin_spec(name, **cfg.get("params", {}))
    elif name == "network":
        net_cfg = cfg.get("network")
        if net_cfg is None:
            raise ConfigError("network system needs a 'network' entry (file path or inline)")
        net = load_network(net_cfg) if isinstance(net_cfg, str) else network_from_dict(net_cfg)
        params = InverterParams.from_dict(cfg.get("params", {}), n=net.n)
        slack = cfg.get("slack")
        spec = SystemSpec(
            kind="network",
            net=net,
            params=params,
            slack=None if slack is None else int(slack),
        )
    else:
        raise ConfigError(f"unknown system {name!r}")
    overrides = cfg.get("overrides", {})
    if overrides:
        spec = spec.with_overrides(overrides)
    return spec


def _resolved(spec: SystemSpec):
    if spec.kind == "single":
        p = spec.resolve()
        net, params, slack = p.as_network()
        return p, net, params, slack
    net, params, slack = spec.resolve()
    return None, net, params, slack


def _equilibria(spec: SystemSpec):
    single, net, params, slack = _resolved(spec)
    if single is not None:
        return single_inverter_equilibria(single), net, params, slack
    try:
        return [solve_newton(net, params, slack=slack)], net, params, slack
    except EquilibriumNotFound:
        return [], net, params, slack


def _emit(data, args, default_name: str) -> None:
    text = json.dumps(data, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_fixed_point(args) -> int:
    cfg = _load_config(args.config)
    eqs, *_ = _equilibria(_system_from_config(cfg))
    _emit([eq.to_dict() for eq in eqs], args, "equilibria")
    return 0


def cmd_stability(args) -> int:
    cfg = _load_config(args.config)
    eqs, net, params, slack = _equilibria(_system_from_config(cfg))
    mode = "free" if slack is None else "slack-anchored"
    out = []
    for eq in eqs:
        lin = build_linearization(eq, params, net)
        report = eigen_stability(full_jacobian(lin), mode)
        out.append({"equilibrium": eq.to_dict(), "stability": report.to_dict()})
    _emit(out, args, "stability")
    return 0


def cmd_criteria(args) -> int:
    cfg = _load_config(args.config)
    eqs, net, params, slack = _equilibria(_system_from_config(cfg))
    out = []
    for eq in eqs:
        results = evaluate_criteria(eq, params, net, seed=args.seed)
        out.append(
            {"equilibrium": eq.to_dict(), "criteria": [r.to_dict() for r in results]}
        )
    _emit(out, args, "criteria")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    spec = _system_from_config(cfg)
    single, net, params, slack = _resolved(spec)
    if "t_end" not in cfg:
        raise ConfigError("simulate config needs 't_end'")
    events = [(e["t"], e["path"], e["value"]) for e in cfg.get("events", [])]
    if single is not None:
        # scalar paths address the inverter node of the two-node form
        events = [(t, p if p.startswith(("inverter.", "global.")) else f"inverter.0.{p}", v)
                  for t, p, v in events]
    sched = Schedule(t_end=float(cfg["t_end"]), events=tuple(events))
    init_cfg = cfg.get("init")
    if init_cfg is None:
        eqs, *_ = _equilibria(spec)
        stable = []
        for eq in eqs:
            lin = build_linearization(eq, params, net)
            mode = "free" if slack is None else "slack-anchored"
            if eigen_stability(full_jacobian(lin), mode).verdict == "stable":
                stable.append(eq)
        if not stable:
            raise ConfigError("no stable equilibrium to start from; provide 'init'")
        init = stable[0].state
    else:
        init = SystemState(
            delta=init_cfg["delta"],
            omega=init_cfg.get("omega", [0.0] * net.n),
            E=init_cfg["E"],
        )
    traj = integrate(
        net,
        params,
        init,
        sched,
        slack=slack,
        sample_dt=float(cfg.get("sample_dt", 0.02)),
        rtol=float(cfg.get("rtol", 1e-8)),
        atol=float(cfg.get("atol", 1e-10)),
    )
    if args.format == "json" or (args.out or "").endswith(".json"):
        data = {
            "classification": traj.classification,
            "final_residual": traj.final_residual,
            "t": traj.times.tolist(),
            "delta": traj.delta.tolist(),
            "omega": traj.omega.tolist(),
            "E": traj.E.tolist(),
        }
        _emit(data, args, "trajectory")
    else:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                traj.write_csv(fh)
        else:
            traj.write_csv(sys.stdout)
    return 0


def _sweep_spec_from_config(cfg: dict, seed: int) -> SweepSpec:
    spec = _system_from_config(cfg)
    ax = cfg.get("axis_x")
    ay = cfg.get("axis_y")
    if not ax or not ay:
        raise ConfigError("sweep config needs 'axis_x' and 'axis_y'")

    def axis(d) -> Axis:
        return Axis(path=d["path"], lo=float(d["min"]), hi=float(d["max"]), count=int(d["count"]))

    fixed = tuple((str(k), float(v)) for k, v in cfg.get("fixed", {}).items())
    evaluators = tuple(cfg.get("evaluators", []))
    return SweepSpec(
        system=spec, axis_x=axis(ax), axis_y=axis(ay), fixed=fixed,
        evaluators=evaluators, seed=seed,
    )


def _write_map(smap, args) -> None:
    if args.format == "json":
        data = []
        for c in smap.cells:
            data.append(
                {
                    "x": c.x, "y": c.y,
                    "n_stable": c.n_stable,
                    "dominant": None if c.dominant is None else [c.dominant.real, c.dominant.imag],
                    "delta_star": c.delta_star, "E_star": c.E_star,
                    "criteria": {k: v.verdict for k, v in c.criteria.items()},
                    "failure": c.failure,
                }
            )
        _emit(data, args, "map")
    else:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                smap.write_csv(fh)
        else:
            smap.write_csv(sys.stdout)


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    spec = _sweep_spec_from_config(cfg, args.seed)
    smap = sweep(spec, threads=args.threads)
    _write_map(smap, args)
    return 3 if smap.n_failures else 0


def cmd_separatrix(args) -> int:
    cfg = _load_config(args.config)
    spec = _sweep_spec_from_config(cfg, args.seed)
    smap = sweep(spec, threads=args.threads)
    lines = separatrix(smap, tol=float(cfg.get("resolution", 1e-3)))
    if args.format == "json":
        _emit([[[p[0], p[1]] for p in line] for line in lines], args, "separatrix")
    else:
        rows = ["polyline,x,y"]
        for i, line in enumerate(lines):
            for p in line:
                rows.append(f"{i},{p[0]!r},{p[1]!r}")
        text = "\n".join(rows) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return 3 if smap.n_failures else 0


def cmd_audit(args) -> int:
    cfg = _load_config(args.config)
    criterion = args.criterion or cfg.get("criterion")
    if not criterion:
        raise ConfigError("audit needs --criterion or a 'criterion' config entry")
    spec = _sweep_spec_from_config(cfg, args.seed)
    if criterion not in spec.criteria_names():
        evaluators = tuple(list(spec.evaluators) + [criterion])
        spec = replace(spec, evaluators=evaluators)
    smap = sweep(spec, threads=args.threads)
    report = containment_audit(smap, criterion)
    _emit(report.to_dict(), args, "audit")
    return 3 if smap.n_failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="droopgrid",
        description="Equilibria, stability criteria and parameter sweeps "
        "for droop-controlled inverter networks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "fixed-point": (cmd_fixed_point, "compute equilibria"),
        "stability": (cmd_stability, "equilibria plus eigenvalue verdicts"),
        "criteria": (cmd_criteria, "evaluate the explicit criteria"),
        "simulate": (cmd_simulate, "integrate a scheduled scenario"),
        "sweep": (cmd_sweep, "two-parameter stability map"),
        "separatrix": (cmd_separatrix, "boundary polylines of a sweep"),
        "audit": (cmd_audit, "containment audit of a sufficient criterion"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=None, help="output file (stdout if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        if name == "audit":
            p.add_argument("--criterion", default=None, help="criterion name, e.g. cor4")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
