"""Exhaustive consensus for n in {2, 3}, random schedules for n = 5."""

from __future__ import annotations

import argparse

from oaelink.consensus import ConsensusScenario, crash_configs, explore, random_sweep


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=1000)
    args = ap.parse_args()
    for n in (2, 3):
        props = tuple(range(1, n + 1))
        for crash in crash_configs(n, n):
            r = explore(ConsensusScenario(n, props, crash))
            status = "ok" if r.ok else f"FAIL {r.problems[:3]}"
            print(f"n={n} crash={sorted(crash)} states={r.states} interleavings={r.interleavings} "
                  f"max_steps={r.max_steps} decided={sorted(r.decided_values)} {status}")
    s = random_sweep(5, (1, 2, 3, 4, 5), args.seeds, max_crashes=2)
    print(f"n=5 random runs={s.runs} max_steps={s.max_steps} problems={len(s.problems)}")


if __name__ == "__main__":
    main()
