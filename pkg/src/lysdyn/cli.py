"""Command-line entry point: run, list-systems, replay, orbit, chain."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import experiment as ex
from .core import COMPARISON_WINDOW, DynamicsError
from .skew import SkewProduct, load_cocycle
from .systems import CATALOG, make_system


def _cmd_run(args) -> int:
    overrides = {"seed": args.seed, "horizon": args.horizon}
    try:
        cfg = ex.load_config(args.config, overrides)
        rows, trace = ex.execute(cfg)
        paths = ex.write_report(cfg, rows, trace, ex.output_stem(cfg, args.output))
    except ex.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in rows if r["payload"].get("status") == "error"]
    for p in paths:
        print(p)
    for r in failed:
        print(f"row {r['row']} aborted: {r['payload']['error']}: {r['payload']['message']}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_list(args) -> int:
    print("identifier            properties (asserted from literature, not verified here)")
    for ident, desc, props in CATALOG:
        flags = ", ".join(f"{k.replace('_', ' ')}={'yes' if v else 'no'}" for k, v in props.items())
        print(f"{ident:<22}{desc}")
        print(f"{'':<22}{flags}")
    return 0


def _cmd_replay(args) -> int:
    try:
        rows = ex.read_report(args.report)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.row is not None:
        rows = [r for r in rows if r["row"] == args.row]
        if not rows:
            print(f"error: no row {args.row}", file=sys.stderr)
            return 2
    ok = True
    for r in rows:
        res = ex.replay_row(r, seed=args.seed)
        print(f"row {r['row']}: {'match' if res.match else 'MISMATCH'}")
        for d in res.differences[:20]:
            print(f"  {d}")
        ok &= res.match
    return 0 if ok else 1


def _system_for(args):
    base = make_system(args.system)
    if getattr(args, "cocycle", None):
        return SkewProduct(base, load_cocycle(args.cocycle))
    return base


def _point(system, text, rng, depth):
    try:
        value = float(text)
    except ValueError:
        value = text
    return ex.resolve_point(system, value, rng, depth)


def _cmd_orbit(args) -> int:
    try:
        system = _system_for(args)
        rng = None if args.seed is None else np.random.default_rng(args.seed)
        depth = args.horizon + COMPARISON_WINDOW
        x, y = _point(system, args.x, rng, depth), _point(system, args.y, rng, depth)
        trace = system.pair_orbit_distances(x, y, args.horizon)
    except (ValueError, DynamicsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = ex.format_trace(trace)
    if args.output:
        ex._atomic_write(ex.Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_chain(args) -> int:
    from .analysis.chains import characteristic_chain

    try:
        system = _system_for(args)
        rng = None if args.seed is None else np.random.default_rng(args.seed)
        depth = args.horizon + COMPARISON_WINDOW
        x, y = _point(system, args.x, rng, depth), _point(system, args.y, rng, depth)
        rec = characteristic_chain(system, x, y, args.eta, args.horizon)
    except (ValueError, DynamicsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(rec.to_json(full=args.full), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lysdyn", description="Finite-horizon experiments on Li-Yorke pairs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config and write a report")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--output", help=f"report path stem (default ${ex.OUTPUT_ENV}/<id>)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("list-systems", help="print the system catalog")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("replay", help="re-execute report rows and compare payloads")
    p.add_argument("report")
    p.add_argument("--row", type=int)
    p.add_argument("--seed", type=int, help="replay with a different seed")
    p.set_defaults(func=_cmd_replay)

    for name, helptext in (("orbit", "dump a pair distance trace"), ("chain", "dump a characteristic chain")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("system")
        p.add_argument("--x", required=True)
        p.add_argument("--y", required=True)
        p.add_argument("--horizon", type=int, default=ex.DEFAULT_HORIZON)
        p.add_argument("--seed", type=int)
        p.add_argument("--cocycle", required=name == "chain", help="cocycle descriptor (TOML)")
        if name == "orbit":
            p.add_argument("--output")
            p.set_defaults(func=_cmd_orbit)
        else:
            p.add_argument("--eta", type=float, default=0.25)
            p.add_argument("--full", action="store_true")
            p.set_defaults(func=_cmd_chain)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
