"""Command-line entry point: ``krylovsim <subcommand> [options]``.

Exit codes: 0 success, 1 check failure (or truncated basis), 2 bad input.
Options given on the command line override values from ``--config FILE``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .experiments import (
    DEFAULTS,
    ExperimentError,
    cmd_access,
    cmd_basis,
    cmd_layer_sweep,
    cmd_pauli_sweep,
    cmd_smin,
    cmd_xxz,
    merge_config,
)

COMMANDS = {
    "basis": cmd_basis,
    "access": cmd_access,
    "smin": cmd_smin,
    "layer-sweep": cmd_layer_sweep,
    "pauli-sweep": cmd_pauli_sweep,
    "xxz": cmd_xxz,
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--model", help="ising, heisenberg or xxz:DELTA (default ising)")
    p.add_argument("--L", type=int, help="chain length (default 4)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, help="worker processes for synthesis sweeps")
    p.add_argument("--out", default="runs", help="output directory (default ./runs)")
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def _tolerances(p):
    p.add_argument("--rank-tol", dest="rank_tol", type=float)
    p.add_argument("--ortho-tol", dest="ortho_tol", type=float)
    p.add_argument("--containment-tol", dest="containment_tol", type=float)
    p.add_argument("--max-depth", dest="max_depth", type=int)


def _grape(p):
    g = p.add_argument_group("GRAPE")
    g.add_argument("--iterations", type=int, help="Adam iterations per step count")
    g.add_argument("--lr", dest="learning_rate", type=float)
    g.add_argument("--threshold", type=float, help="loss threshold epsilon")
    g.add_argument("--tau", type=float, help="target evolution time")
    g.add_argument("--dt", type=float, help="step duration")
    g.add_argument("--u-max", dest="u_max", type=float)
    g.add_argument("--restarts", type=int)
    p.add_argument("--schedule", help="comma-separated step counts")
    p.add_argument("--full-curves", action="store_true", help="do not stop sweeps at n_c")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="krylovsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"krylovsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="build and store the block Krylov basis")
    _common(p)
    _tolerances(p)
    p.add_argument("--sweep-L", dest="sweep_L", help="range a..b: tabulate M for both models")

    for name, text in (("access", "access depth of single-site Paulis"), ("smin", "minimum operator size map")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _tolerances(p)

    p = sub.add_parser("layer-sweep", help="n_c versus Krylov depth of random block targets")
    _common(p)
    _tolerances(p)
    _grape(p)
    p.add_argument("--layers", help="range a..b or list a,b,c")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("pauli-sweep", help="n_c versus complexity for weight <= 2 Paulis")
    _common(p)
    _tolerances(p)
    _grape(p)

    p = sub.add_parser("xxz", help="XXZ Hamiltonian synthesis and residual weights")
    _common(p)
    _tolerances(p)
    _grape(p)
    p.add_argument("--delta", type=float, help="XXZ anisotropy (default 1.5)")

    p = sub.add_parser("verify", help="run the acceptance checks")
    _common(p)
    p.add_argument("--quick", action="store_true", help="only checks at L <= 3")
    p.add_argument("--only", help="comma-separated check names")
    return parser


GRAPE_KEYS = ("iterations", "learning_rate", "threshold", "tau", "dt", "u_max", "restarts")
TOP_KEYS = ("model", "L", "seed", "jobs", "rank_tol", "ortho_tol", "containment_tol", "max_depth",
            "layers", "samples", "delta", "sweep_L")


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = DEFAULTS
    if args.config is not None:
        try:
            cfg = merge_config(cfg, json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ExperimentError(f"cannot read config {args.config}: {exc}") from exc
    ns = vars(args)
    flags = {k: ns.get(k) for k in TOP_KEYS if k in ns}
    flags["grape"] = {k: ns.get(k) for k in GRAPE_KEYS if k in ns}
    if ns.get("schedule"):
        try:
            flags["schedule"] = [int(x) for x in ns["schedule"].split(",")]
        except ValueError as exc:
            raise ExperimentError(f"bad schedule {ns['schedule']!r}") from exc
    if ns.get("full_curves"):
        flags["stop_at_threshold"] = False
    cfg = merge_config(cfg, flags)
    if cfg["L"] < 2:
        raise ExperimentError("--L must be >= 2")
    sched = cfg["schedule"]
    if not sched or sched[0] < 1 or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ExperimentError("schedule must be strictly increasing positive integers")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "verify":
            from .acceptance import run_checks

            names = args.only.split(",") if args.only else None
            return run_checks(quick=args.quick, names=names, jobs=cfg["jobs"], out=Path(args.out))
        return COMMANDS[args.command](cfg, Path(args.out))
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
