"""Batch runs: many seeds of many scenario files, folded into one report."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import KbpAudit, ResolutionAudit, ViolationReport, check_invariants, kbp_audit, resolution_audit
from .netsim import Scenario, Simulator

ROOT = Path(__file__).resolve().parents[2]
SCENARIOS = ROOT / "scenarios"
STANDARD_SUITE = tuple(sorted((SCENARIOS / "suite").glob("*.yaml")))
CANONICAL = ("empty", "single_commit", "crossed", "schema_skew", "multi_field")


@dataclass
class SuiteResult:
    mode: str
    report: ViolationReport = field(default_factory=ViolationReport)
    kbp: KbpAudit = field(default_factory=KbpAudit)
    resolution: ResolutionAudit | None = None
    runs: int = 0
    seconds: float = 0.0


def run_suite(files, seeds: int, mode: str = "oae", start: int = 0,
              resolution: str | None = None) -> SuiteResult:
    """Run ``seeds`` consecutive seeds of every scenario file in ``files``.

    ``resolution`` optionally also audits relation trajectories ("events" or
    "commits" sampling, see :func:`analysis.resolution_audit`).
    """
    out = SuiteResult(mode)
    if resolution:
        out.resolution = ResolutionAudit()
    t0 = time.perf_counter()
    for f in files:
        scn = f if isinstance(f, Scenario) else Scenario.from_file(f)
        for seed in range(start, start + seeds):
            tr = Simulator(scn, seed=seed, mode=mode).run()
            out.report.merge(check_invariants(tr))
            out.kbp.merge(kbp_audit(tr))
            if resolution:
                out.resolution.merge(resolution_audit(tr, resolution))
            out.runs += 1
    out.seconds = time.perf_counter() - t0
    return out


def canonical_path(name: str) -> Path:
    return SCENARIOS / "canonical" / f"{name}.yaml"
