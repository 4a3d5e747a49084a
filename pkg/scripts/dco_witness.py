"""Two traces that differ only inside the indefinite phase, and their DCO images."""

from __future__ import annotations

from oaelink.analysis import dco_project
from oaelink.netsim import Scenario, Simulator
from oaelink.suite import SCENARIOS


def main() -> None:
    traces = {o: Simulator(Scenario.from_file(SCENARIOS / f"witness_{o}.yaml")).run() for o in "AB"}
    proj = {o: dco_project(t) for o, t in traces.items()}
    print("traces identical:", traces["A"].dumps() == traces["B"].dumps())
    print("images identical:", proj["A"].image() == proj["B"].image())
    print("loss set:", list(proj["A"].loss_set))


if __name__ == "__main__":
    main()
