"""Command-line entry point: ``banditnet {run, sweep, gen-trace, verify-trace}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from banditnet.adversary import content_hash, parse_trace, serialize_trace, verify_piecewise_stability
from banditnet.errors import ConstructionError, ContractViolation, InvariantFailure, ScenarioError, StructuralError
from banditnet.harness import SWEEP_AXES, build_trace, run, sweep
from banditnet.scenario import load_scenario, parse_value

log = logging.getLogger("banditnet")

U64 = 2 ** 64


def _u64(text: str) -> int:
    val = int(text, 0)
    if not 0 <= val < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def _scenario(args):
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_scenario(args.scenario, overrides)


def cmd_run(args) -> int:
    scn = _scenario(args)
    res = run(scn, out_dir=args.out)
    s = res.summary
    print(f"{scn.name}: scheduler={s.scheduler} T={s.rounds} avg_queue={s.avg_queue:.6g}"
          + (f" avg_utility_gap={s.avg_utility_gap:.6g}" if s.avg_utility_gap is not None else ""))
    if res.csv_path is not None:
        print(f"wrote {res.csv_path}")
    for msg in s.invariant_failures:
        print(f"invariant failure: {msg}", file=sys.stderr)
    return 0 if s.invariants_ok else 1


def cmd_sweep(args) -> int:
    scn = _scenario(args)
    values = [parse_value(v) for v in args.values.split(",")]
    summaries, table = sweep(scn, args.axis, values, out_dir=args.out, workers=args.workers)
    sys.stdout.write(table)
    bad = [s for s in summaries if not s.invariants_ok]
    for s in bad:
        for msg in s.invariant_failures:
            print(f"invariant failure ({s.scheduler}, seed {s.seed}): {msg}", file=sys.stderr)
    return 0 if not bad else 1


def cmd_gen_trace(args) -> int:
    scn = _scenario(args)
    trace, ref = build_trace(scn)
    data = serialize_trace(trace, ref)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{scn.name}_seed{scn.effective_trace_seed}.trace.jsonl"
    path.write_bytes(data)
    print(f"wrote {path} ({trace.rounds} rounds, slack {ref.slack:.6g}, C_W {ref.window_constant:.6g})")
    print(f"hash {content_hash(data)}")
    return 0


def cmd_verify_trace(args) -> int:
    data = Path(args.trace).read_bytes()
    trace, ref = parse_trace(data)
    if ref is None:
        print("trace file carries no reference policy", file=sys.stderr)
        return 1
    result = verify_piecewise_stability(trace, ref)
    roundtrip = serialize_trace(trace, ref) == data
    print(json.dumps({
        "accepted": result.accepted,
        "slack": result.slack,
        "window": result.window,
        "server": result.server,
        "commodity": result.commodity,
        "deficit": result.deficit,
        "roundtrip_exact": roundtrip,
        "hash": content_hash(data),
    }, sort_keys=True))
    return 0 if result.accepted and roundtrip else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="banditnet", description="Adversarial multi-hop network scheduling experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--scenario", required=True, help="scenario TOML file")
        sp.add_argument("--seed", type=_u64, help="override the scenario seed")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="set a scenario key, dotted for nested tables (repeatable)")

    sp = sub.add_parser("run", help="run one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a scenario over several values of one axis")
    common(sp)
    sp.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--workers", type=int, default=None, help="parallel runs (default: sweep.workers or 1)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gen-trace", help="generate and save an adversary trace with its reference policy")
    common(sp)
    sp.set_defaults(func=cmd_gen_trace)

    sp = sub.add_parser("verify-trace", help="check a saved trace against its reference policy")
    sp.add_argument("trace", help="trace file written by gen-trace")
    sp.set_defaults(func=cmd_verify_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (ScenarioError, StructuralError, ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantFailure, ContractViolation) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
