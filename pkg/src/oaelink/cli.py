"""Command line: run, sweep, compare, consensus."""

from __future__ import annotations

import argparse
import sys

from . import analysis, consensus
from .netsim import MODES, Scenario, ScenarioError, Simulator
from .suite import run_suite


def _load(path: str) -> Scenario:
    try:
        return Scenario.from_file(path)
    except ScenarioError as exc:
        sys.exit(str(exc))


def cmd_run(args) -> int:
    scn = _load(args.scenario)
    mode = args.mode or scn.mode
    tr = Simulator(scn, seed=args.seed, mode=mode).run()
    rep = analysis.check_invariants(tr)
    if args.trace:
        tr.write(args.trace)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(rep.to_jsonl())
    print(f"{scn.name} mode={mode} seed={tr.header['seed']} end_tick={tr.end_tick} records={len(tr)}")
    for txn, outcome in sorted(analysis.txn_outcomes(tr).items()):
        print(f"  txn {txn}: {outcome}")
    print(rep.table())
    return 1 if mode == "oae" and not rep.clean else 0


def cmd_sweep(args) -> int:
    scn = _load(args.scenario)
    mode = args.mode or scn.mode
    res = run_suite([scn], args.seeds, mode, start=args.start)
    print(f"{scn.name} mode={mode} seeds={args.seeds} runs={res.runs} ({res.seconds:.1f}s)")
    print(res.report.table())
    print(f"kbp: rows={res.kbp.rows} unbalanced={res.kbp.balance_violations} "
          f"commits={res.kbp.commits} ineligible={len(res.kbp.ineligible)}")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(res.report.to_jsonl())
    return 1 if mode == "oae" and not res.report.clean else 0


def cmd_compare(args) -> int:
    scn = _load(args.scenario)
    oae = run_suite([scn], args.seeds, "oae", start=args.start)
    fito = run_suite([scn], args.seeds, "fito", start=args.start)
    print(analysis.compare_table(oae.report, fito.report))
    return 0 if oae.report.clean else 1


def cmd_consensus(args) -> int:
    props = tuple(args.proposals)
    if len(props) != args.n:
        sys.exit(f"need {args.n} proposals, got {len(props)}")
    crash = frozenset(args.crash or ())
    if args.exhaustive:
        res = consensus.explore(consensus.ConsensusScenario(args.n, props, crash))
        print(f"n={args.n} crash={sorted(crash)} states={res.states} interleavings={res.interleavings}")
        print(f"  decided values across runs: {sorted(res.decided_values)}")
        print(f"  max own steps: {res.max_steps} (bound {consensus.STEP_BOUND})")
        problems = res.problems
    else:
        problems = []
        worst = 0
        for s in range(args.seeds):
            scn = consensus.ConsensusScenario(args.n, props, crash, schedule=s)
            o = consensus.run(scn)
            worst = max(worst, max(o.steps.values()))
            problems += [f"seed {s}: {p}" for p in o.problems(scn)]
            if s == 0:
                print(f"seed 0 decisions: {o.decisions} steps: {o.steps}")
        print(f"n={args.n} crash={sorted(crash)} runs={args.seeds} max own steps={worst} (bound {consensus.STEP_BOUND})")
    for prop in ("agreement", "validity", "termination", "steps"):
        bad = [p for p in problems if prop in p]
        print(f"  {prop:<12} {'PASS' if not bad else 'FAIL'}")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oaelink", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one scenario and audit its trace")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--trace", help="write the trace here")
    r.add_argument("--report", help="write the violation report (jsonl) here")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="audit many seeds of one scenario")
    s.add_argument("scenario")
    s.add_argument("--seeds", type=int, required=True)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--report")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="run both modes, print the comparison grid")
    c.add_argument("scenario")
    c.add_argument("--seeds", type=int, default=1)
    c.add_argument("--start", type=int, default=0)
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("consensus", help="n-process consensus over link transactions")
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--proposals", type=int, nargs="+", required=True)
    k.add_argument("--crash", type=int, nargs="*")
    g = k.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true")
    g.add_argument("--seeds", type=int, default=100)
    k.set_defaults(func=cmd_consensus)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
