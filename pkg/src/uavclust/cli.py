"""Command line front end: ``generate-trace``, ``run``, ``summarize``, ``replay``.

Units are in the flag names; dB values are accepted only here and converted
to linear inside the library. Exit status is 0 when the requested work
completed (infeasible runs included) and 2 on a bad specification.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .mobility import MobilityConfig, generate_trace, write_trace

log = logging.getLogger("uavclust")


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def cmd_generate_trace(args) -> int:
    cfg = MobilityConfig(area=(args.area_m, args.area_m), n_groups=args.groups,
                         members_per_group=args.members, duration=args.duration_s,
                         time_step=args.time_step_s, rng_seed=args.seed)
    trace = generate_trace(cfg)
    write_trace(args.out, trace)
    print(f"wrote {len(trace)} snapshots of {cfg.n_users} users to {args.out}")
    return 0


def _spec_from_args(args) -> harness.ExperimentSpec:
    d = json.loads(Path(args.spec).read_text()) if args.spec else {}
    overrides = {"n_scenarios": args.scenarios, "base_seed": args.seed,
                 "source": args.source, "output_dir": args.out,
                 "time_limit_s": args.time_limit_s}
    if args.algorithms:
        overrides["algorithms"] = tuple(args.algorithms.split(","))
    if args.u_max:
        overrides["u_max_sweep"] = _ints(args.u_max)
    if args.gamma_th_db:
        overrides["gamma_th_sweep_db"] = _floats(args.gamma_th_db)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return harness.ExperimentSpec.from_dict(d)


def cmd_run(args) -> int:
    spec = _spec_from_args(args)

    def progress(row):
        log.info("%s seed=%d u_max=%d feasible=%s M=%d EE=%.4g %s", row.algorithm, row.seed,
                 row.u_max, row.feasible, row.m_final, row.ee, row.error)

    rows = harness.run_experiment(spec, progress)
    summary = harness.summarize(rows)
    paths = harness.emit_outputs(rows, summary, spec.output_dir, spec.gamma_th_sweep_db)
    Path(spec.output_dir, "spec.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
    imp = summary["ee_improvement_pct"]["all"]
    print(f"{len(rows)} runs, {summary['n_feasible']} feasible; "
          f"mean paired EE improvement {imp['mean']}% over {imp['n']} pairs")
    print(f"outputs in {paths['rows.csv'].parent}")
    return 0


def cmd_summarize(args) -> int:
    rows = harness.read_rows_csv(args.rows)
    if not rows:
        print(f"{args.rows} holds no rows", file=sys.stderr)
        return 2
    summary = harness.summarize(rows)
    text = json.dumps(summary, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_replay(args) -> int:
    bad = 0
    n = 0
    with Path(args.solutions).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            n += 1
            entry = json.loads(line)
            problems = harness.replay_solution(entry)
            if problems:
                bad += 1
                print(f"{entry['algorithm']} seed={entry['seed']} u_max={entry['u_max']}: "
                      + "; ".join(problems[:5]))
    print(f"replayed {n} solutions, {bad} with violations")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavclust", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every run")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-trace", help="write a group-mobility trace as JSON lines")
    g.add_argument("--out", required=True, help="output .jsonl path")
    g.add_argument("--area-m", type=float, default=1200.0, help="side of the square area (m)")
    g.add_argument("--groups", type=int, default=5)
    g.add_argument("--members", type=int, default=39, help="members per group, leader excluded")
    g.add_argument("--duration-s", type=float, default=60.0)
    g.add_argument("--time-step-s", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate_trace)

    r = sub.add_parser("run", help="run a paired experiment and write its outputs")
    r.add_argument("--spec", help="experiment spec JSON (flags below override it)")
    r.add_argument("--out", help="output directory")
    r.add_argument("--source", help="rpgm, uniform, or a scenario JSON path")
    r.add_argument("--scenarios", type=int, help="ensemble size")
    r.add_argument("--seed", type=int, help="base seed")
    r.add_argument("--algorithms", help="comma list from {ducem,kmeans}")
    r.add_argument("--u-max", help="comma list of users-per-drone caps")
    r.add_argument("--gamma-th-db", help="comma list of SINR thresholds (dB)")
    r.add_argument("--time-limit-s", type=float, help="per-run time limit (s)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="recompute summary statistics from rows.csv")
    s.add_argument("rows")
    s.add_argument("--out", help="summary JSON path (default: stdout)")
    s.set_defaults(func=cmd_summarize)

    v = sub.add_parser("replay", help="re-verify stored solutions against the constraints")
    v.add_argument("solutions", help="solutions.jsonl from a run")
    v.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
