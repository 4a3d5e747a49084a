"""Regenerate the golden traces under tests/golden.

Run only after a deliberate, reviewed change to trace content; the
determinism test diffs fresh runs against these files byte for byte.
"""

from __future__ import annotations

import sys
from pathlib import Path

from oaelink.netsim import Scenario, Simulator
from oaelink.suite import CANONICAL, SCENARIOS, canonical_path

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"


def targets():
    for name in CANONICAL:
        yield f"{name}.trace", canonical_path(name)
    for origin in ("A", "B"):
        yield f"witness_origin_{origin}.trace", SCENARIOS / f"witness_{origin}.yaml"


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for out, src in targets():
        tr = Simulator(Scenario.from_file(src), seed=0).run()
        tr.write(GOLDEN / out)
        print(f"{out}: {len(tr)} records")
    return 0


if __name__ == "__main__":
    sys.exit(main())
