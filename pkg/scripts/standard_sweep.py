"""Standard fault sweep in both modes, with the comparison grid and KBP audit.

    python scripts/standard_sweep.py --seeds 2000
"""

from __future__ import annotations

import argparse

from oaelink.analysis import compare_table
from oaelink.suite import STANDARD_SUITE, run_suite


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=2000, help="seeds per scenario file")
    args = ap.parse_args()
    res = {m: run_suite(STANDARD_SUITE, args.seeds, m) for m in ("oae", "fito")}
    for m, r in res.items():
        print(f"[{m}] {r.runs} scenarios in {r.seconds:.1f}s; kbp rows={r.kbp.rows} "
              f"ticks={r.kbp.ticks_covered} unbalanced={r.kbp.balance_violations} "
              f"commits={r.kbp.commits} ineligible={len(r.kbp.ineligible)}")
    print(compare_table(res["oae"].report, res["fito"].report))


if __name__ == "__main__":
    main()
