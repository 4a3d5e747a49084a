"""Commit tick versus transmission-complete tick over a delay x frame-time grid."""

from __future__ import annotations

from oaelink.analysis import pif_ticks
from oaelink.netsim import LinkParams, Scenario, ScriptEntry, EndpointSpec, Simulator, pif_condition


def one(delay: int, tx: int) -> tuple[int, int]:
    p = LinkParams(one_way_delay=delay, frame_tx_time=tx, loss_prob=0, dup_prob=0, reorder_prob=0, corrupt_prob=0)
    scn = Scenario("pif-grid", p, {"A": EndpointSpec(1, [ScriptEntry(1, "A", "initiate", {1: 1})]),
                                   "B": EndpointSpec()}, horizon=200)
    (_txn, commit, done), = pif_ticks(Simulator(scn).run())
    return commit, done


def main() -> None:
    print(f"{'delay':>5} {'tx':>4} {'pif':>5} {'commit':>7} {'tx_done':>8} {'born committed':>15}")
    for delay in (1, 2, 3, 5, 10):
        for tx in (1, 4, 10, 25):
            commit, done = one(delay, tx)
            p = pif_condition(LinkParams(one_way_delay=delay, frame_tx_time=tx))
            print(f"{delay:>5} {tx:>4} {str(p):>5} {commit:>7} {done:>8} {str(commit <= done):>15}")


if __name__ == "__main__":
    main()
