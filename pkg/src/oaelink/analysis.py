"""Trace auditor: atomicity/normative invariant checks, relations, DCO projection.

Everything here is a pure function of a :class:`~oaelink.trace.Trace`, so
the same checks run on OAE and FITO traces and on hand-built traces.

Invariant predicates, in the vocabulary of the trace schema:

A1  an observer snapshot only shows writers that both endpoints committed
A2  no commit whose intended and interpreted digests differ
A3  an observer snapshot never mixes a transaction's fields with older eras
N1  commitment is bilateral: no endpoint commits alone, nothing is applied
    before both endpoints are COMMITTED
N2  COMMITTED is entered only from REFLECTING via CommitAck, after an intact
    reflection was validated
N3  corruption, duplication and reordering never reach committed state:
    commits need an intact payload delivery, nothing is applied twice,
    no field regresses to an older writer
N4  a timeout in TENTATIVE/REFLECTING leads to ABORTED, never to a retry
    or a later commit
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field

from .ilt import CausalIndex, CausalRelation, bitstring
from .trace import Record, Trace, require_version

INVARIANTS = ("A1", "A2", "A3", "N1", "N2", "N3", "N4")
OUTSTANDING = ("TENTATIVE", "REFLECTING")


def _verbatim(rec: Record) -> list:
    return [rec.tick, rec.channel, rec.endpoint, rec.txn, dict(rec.body)]


@dataclass
class Violation:
    tick: int
    txn: int | None
    invariant: str
    evidence: list[list]
    note: str = ""


@dataclass
class ViolationReport:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(INVARIANTS, 0))
    violations: list[Violation] = field(default_factory=list)
    traces: int = 0
    keep: int = 1000  # evidence retained when merging many reports

    def add(self, invariant: str, rec: Record, note: str = "", *more: Record) -> None:
        self.counts[invariant] += 1
        if len(self.violations) < self.keep:
            self.violations.append(
                Violation(rec.tick, rec.txn, invariant, [_verbatim(r) for r in (rec, *more)], note))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def clean(self) -> bool:
        return self.total == 0

    def merge(self, other: "ViolationReport") -> "ViolationReport":
        for k, v in other.counts.items():
            self.counts[k] = self.counts.get(k, 0) + v
        room = self.keep - len(self.violations)
        self.violations.extend(other.violations[:max(room, 0)])
        self.traces += other.traces
        return self

    def to_jsonl(self) -> str:
        lines = [json.dumps({"counts": self.counts, "traces": self.traces}, sort_keys=True)]
        for v in self.violations:
            lines.append(json.dumps({"tick": v.tick, "txn": v.txn, "invariant": v.invariant,
                                     "note": v.note, "evidence": v.evidence}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = [f"{'invariant':<10}{'count':>8}"]
        rows += [f"{k:<10}{self.counts[k]:>8}" for k in INVARIANTS]
        return "\n".join(rows)


def check_invariants(trace: Trace) -> ViolationReport:
    require_version(trace)
    rep = ViolationReport(traces=1)
    writes: dict[int, dict[int, int]] = {}
    initiator: dict[int, str] = {}
    committed: dict[int, dict[str, Record]] = defaultdict(dict)
    payload_ok: dict[int, set[str]] = defaultdict(set)
    reflection_ok: dict[int, set[str]] = defaultdict(set)
    validated: set[int] = set()
    timed_out: dict[int, Record] = {}
    rank: dict[str, dict[int, int]] = {"A": {}, "B": {}}
    writer: dict[str, dict[int, int]] = {"A": {}, "B": {}}
    applied: dict[tuple[str, int], set[int]] = defaultdict(set)

    for rec in trace.records:
        ch, ep, txn, b = rec.channel, rec.endpoint, rec.txn, rec.body
        if ch == "fsm":
            kind = b.get("kind")
            if kind not in ("transition", "latched", "retry"):
                continue
            ev, src, dst = b.get("event"), b.get("from"), b.get("to")
            if ev == "ValidationOk" and ep in reflection_ok.get(txn, ()):
                validated.add(txn)
            if ev == "Timeout" and src in OUTSTANDING:
                if dst != "ABORTED":
                    rep.add("N4", rec, "timeout did not abort")
                elif txn is not None:
                    timed_out.setdefault(txn, rec)
            if kind == "transition" and dst == "COMMITTED":
                if src != "REFLECTING" or ev != "CommitAck":
                    rep.add("N2", rec, "COMMITTED not entered from REFLECTING via CommitAck")
                elif txn not in validated:
                    rep.add("N2", rec, "commit without a validated reflection")
                if ev == "Timeout":
                    rep.add("N4", rec, "commit via timeout")
                elif txn in timed_out:
                    rep.add("N4", rec, "commit after timeout", timed_out[txn])
                committed[txn][ep] = rec
        elif ch == "wire":
            if b.get("op") != "deliver":
                continue
            fk = b.get("frame_kind")
            if fk in ("Tentative", "Write") and b.get("intact"):
                payload_ok[txn].add(ep)
            elif fk == "Reflection" and b.get("intact"):
                reflection_ok[txn].add(ep)
        elif ch == "auditor":
            op = b.get("op")
            if op == "txn-begin":
                writes[txn] = {f: v for f, v in b["writes"]}
                initiator[txn] = ep
            elif op == "apply":
                if len(committed.get(txn, ())) < 2:
                    rep.add("N1", rec, "applied before bilateral commit")
                r = rank[ep].setdefault(txn, len(rank[ep]))
                seen = applied[(ep, txn)]
                for f, _v in b["fields"]:
                    if f in seen:
                        rep.add("N3", rec, f"field {f} applied twice")
                    prev = writer[ep].get(f)
                    if prev is not None and rank[ep].get(prev, -1) > r:
                        rep.add("N3", rec, f"field {f} regressed from txn {prev}")
                    writer[ep][f] = txn
                    seen.add(f)
            elif op == "commit":
                if b.get("intended") != b.get("interpreted"):
                    rep.add("A2", rec, "delivered but interpreted differently")
                init = b.get("initiator") or initiator.get(txn)
                peer = "B" if init == "A" else "A"
                if peer not in payload_ok.get(txn, ()):
                    rep.add("N3", rec, "commit without an intact payload delivery")
        elif ch == "observer" and b.get("op") == "read":
            snap = {f: w for f, _v, w in b["snapshot"]}
            for w in sorted(set(snap.values())):
                if len(committed.get(w, ())) < 2:
                    rep.add("A1", rec, f"writer txn {w} not committed at both endpoints")
                mine = writes.get(w)
                if mine is None or len(mine) < 2:
                    continue
                r = rank[ep].get(w)
                for g in mine:
                    u = snap.get(g)
                    if u is None or (u != w and rank[ep].get(u, -1) < (r if r is not None else 0)):
                        rep.add("A3", rec, f"txn {w} visible without field {g}")
                        break

    for txn, eps in committed.items():
        if len(eps) < 2:
            rep.add("N1", next(iter(eps.values())), "unilateral commit")
    return rep


# ---------------------------------------------------------------------------
# knowledge balance


@dataclass
class KbpAudit:
    rows: int = 0
    ticks_covered: int = 0
    unbalanced: list[list] = field(default_factory=list)
    commits: int = 0
    ineligible: list[list] = field(default_factory=list)

    @property
    def balance_violations(self) -> int:
        return len(self.unbalanced)

    def merge(self, other: "KbpAudit") -> "KbpAudit":
        self.rows += other.rows
        self.ticks_covered += other.ticks_covered
        self.unbalanced += other.unbalanced
        self.commits += other.commits
        self.ineligible += other.ineligible
        return self


def kbp_audit(trace: Trace) -> KbpAudit:
    """Balance at every audited tick, eligibility at every commit.

    Registers only change inside event ticks, so one row per endpoint per
    event tick covers every tick up to the next row.
    """
    out = KbpAudit()
    last: dict[str, int] = {}
    end = trace.end_tick
    for rec in trace.records:
        if rec.channel == "kbp":
            out.rows += 1
            if rec.endpoint in last:
                out.ticks_covered += rec.tick - last[rec.endpoint]
            last[rec.endpoint] = rec.tick
            if not rec.body.get("balanced"):
                out.unbalanced.append(_verbatim(rec))
        elif rec.channel == "auditor" and rec.body.get("op") == "commit":
            out.commits += 1
            if not rec.body.get("eligible"):
                out.ineligible.append(_verbatim(rec))
    out.ticks_covered += sum(end - t + 1 for t in last.values())
    return out


# ---------------------------------------------------------------------------
# relations and the DCO projection


def _index(trace: Trace | CausalIndex) -> CausalIndex:
    return trace if isinstance(trace, CausalIndex) else CausalIndex(trace)


def relation_matrix(trace: Trace | CausalIndex, at_tick: int) -> dict[tuple[str, str], CausalRelation]:
    """Four-valued relation for every pair of events present by ``at_tick``.

    Keys are (earlier eid, later eid) in trace order; the diagonal is absent.
    """
    idx = _index(trace)
    evs = [e for e in idx.events if e.tick <= at_tick]
    return {
        (a.eid, b.eid): idx.relate(a.index, b.index, at_tick)
        for i, a in enumerate(evs) for b in evs[i + 1:]
    }


@dataclass(frozen=True)
class DcoProjection:
    relations: dict[tuple[str, str], CausalRelation]
    loss_set: tuple[tuple[str, str], ...]

    def image(self) -> bytes:
        """Canonical serialization of the three-valued image (loss set excluded)."""
        lines = sorted(f"{a} {b} {bitstring(r)}" for (a, b), r in self.relations.items())
        return ("\n".join(lines) + "\n").encode()


def dco_project(trace: Trace | CausalIndex) -> DcoProjection:
    """Collapse to before/after/concurrent; aborted unresolved pairs become concurrent."""
    idx = _index(trace)
    evs = idx.events
    rel = {}
    for i, a in enumerate(evs):
        for b in evs[i + 1:]:
            r = idx.relate(a.index, b.index)
            rel[(a.eid, b.eid)] = CausalRelation.CONCURRENT if r is CausalRelation.INDEFINITE else r
    loss = tuple((evs[i].eid, evs[j].eid) for i, j in idx.crossed_pairs)
    return DcoProjection(rel, loss)


_TRAJECTORY = re.compile(r"(?:11,)*(?:(?:01,)+|(?:10,)+|(?:00,)+)?")


@dataclass
class ResolutionAudit:
    pairs: int = 0
    indefinite_pairs: int = 0
    resolved: int = 0
    projected_concurrent: int = 0
    problems: list[str] = field(default_factory=list)

    def merge(self, other: "ResolutionAudit") -> "ResolutionAudit":
        self.pairs += other.pairs
        self.indefinite_pairs += other.indefinite_pairs
        self.resolved += other.resolved
        self.projected_concurrent += other.projected_concurrent
        self.problems += other.problems
        return self


def resolution_audit(trace: Trace, sample: str = "events") -> ResolutionAudit:
    """Check every pair's relation trajectory against ``Indefinite* (definite)?``.

    ``sample="events"`` evaluates the matrix at every tick carrying an fsm
    transition; ``sample="commits"`` only at commit ticks (the only ticks at
    which a resolution may happen) plus each pair's first tick, which is
    much cheaper and sufficient to see every change a commit can cause.
    """
    idx = CausalIndex(trace)
    evs = idx.events
    commit_ticks = sorted({e.tick for e in evs if e.to_state == "COMMITTED"})
    committed_txns = {e.txn for e in evs if e.to_state == "COMMITTED"}
    if sample == "events":
        ticks = sorted({e.tick for e in evs})
    elif sample == "commits":
        ticks = commit_ticks
    else:
        raise ValueError(f"sample must be 'events' or 'commits', got {sample!r}")
    out = ResolutionAudit()
    crossed = set(idx.crossed_pairs)
    for i, a in enumerate(evs):
        for b in evs[i + 1:]:
            out.pairs += 1
            born = max(a.tick, b.tick)
            pts = [born] + [t for t in ticks if t > born]
            traj = [idx.relate(a.index, b.index, t) for t in pts]
            codes = "".join(bitstring(r) + "," for r in traj)
            name = f"{trace.header.get('scenario')}/{trace.header.get('seed')}:{a.eid}~{b.eid}"
            if not _TRAJECTORY.fullmatch(codes):
                out.problems.append(f"{name}: trajectory {codes}")
                continue
            if traj[0] is not CausalRelation.INDEFINITE:
                if (a.index, b.index) in crossed:
                    out.problems.append(f"{name}: crossed pair born definite")
                continue
            out.indefinite_pairs += 1
            change = next((t for t, r in zip(pts, traj) if r.definite), None)
            if change is not None:
                out.resolved += 1
                if change not in commit_ticks or traj[-1] is CausalRelation.CONCURRENT:
                    out.problems.append(f"{name}: resolved at tick {change} without a commit")
            else:
                if a.txn in committed_txns or b.txn in committed_txns:
                    out.problems.append(f"{name}: still indefinite after its transaction committed")
                out.projected_concurrent += 1
    return out


# ---------------------------------------------------------------------------
# trace summaries used by experiments and acceptance checks


def txn_outcomes(trace: Trace) -> dict[int, str]:
    """Final outcome per transaction at its initiator: COMMITTED, ABORTED or OPEN."""
    begun = {r.txn: r.endpoint for r in trace.records
             if r.channel == "auditor" and r.body.get("op") == "txn-begin"}
    out = dict.fromkeys(begun, "OPEN")
    for r in trace.records:
        if r.channel == "fsm" and r.body.get("kind") == "transition" and r.txn in begun \
                and r.endpoint == begun[r.txn] and r.body["to"] in ("COMMITTED", "ABORTED"):
            out[r.txn] = r.body["to"]
    return out


def retries(trace: Trace) -> dict[int, int]:
    begun = [r.txn for r in trace.records if r.channel == "auditor" and r.body.get("op") == "txn-begin"]
    out = dict.fromkeys(begun, 0)
    for r in trace.records:
        if r.channel == "fsm" and r.body.get("kind") == "retry":
            out[r.txn] = out.get(r.txn, 0) + 1
    return out


def pif_ticks(trace: Trace) -> list[tuple[int, int, int]]:
    """(txn, first COMMITTED tick, transmission-complete tick of its Tentative frame)."""
    tx_done: dict[int, int] = {}
    commit: dict[int, int] = {}
    for r in trace.records:
        if r.channel == "wire" and r.body.get("op") == "emit" and r.body.get("frame_kind") in ("Tentative", "Write"):
            tx_done.setdefault(r.txn, r.body["tx_done"])
        elif r.channel == "fsm" and r.body.get("kind") == "transition" and r.body.get("to") == "COMMITTED":
            commit.setdefault(r.txn, r.tick)
    return [(t, commit[t], tx_done[t]) for t in sorted(commit) if t in tx_done]


def hyperdata_counts(trace: Trace) -> dict[str, int]:
    counts = {"wire": 0, "observer": 0}
    for r in trace.records:
        if r.body.get("frame_kind") == "Hyperdata" or r.body.get("op") == "hyperdata":
            counts[r.channel] = counts.get(r.channel, 0) + 1
    return counts


def frame_conservation(trace: Trace) -> tuple[int, int]:
    """(emitted + duplicated, delivered + dropped + in flight at end); equal on a sound trace."""
    sent = accounted = 0
    for r in trace.records:
        if r.channel != "wire":
            continue
        op = r.body.get("op")
        if op == "emit":
            sent += 1 + (1 if r.body.get("dup") and not r.body.get("lost") else 0)
        elif op in ("deliver", "drop", "in-flight-at-end"):
            accounted += 1
    return sent, accounted


# ---------------------------------------------------------------------------
# link-family comparison grid

# Columns that are cited from the comparison table rather than simulated.
CITED = {
    "NVLink": {"A1": "yes", "A2": "---", "A3": "yes", "reflecting": "absent", "consensus": "2"},
    "CXL": {"A1": "partial", "A2": "---", "A3": "line-level", "reflecting": "absent", "consensus": "2"},
}


def _cell(n: int) -> str:
    return "yes (0)" if n == 0 else f"--- ({n})"


def compare_table(oae: ViolationReport, fito: ViolationReport) -> str:
    cols = ["OAE [sim]", "RDMA/FITO [sim]", "NVLink [cited]", "CXL [cited]"]
    rows = []
    for k in INVARIANTS:
        cited = [CITED[c].get(k, "n/a") for c in ("NVLink", "CXL")]
        rows.append([k, _cell(oae.counts[k]), _cell(fito.counts[k]), *cited])
    rows.append(["reflecting", "mandatory", "absent", CITED["NVLink"]["reflecting"], CITED["CXL"]["reflecting"]])
    rows.append(["consensus", "inf (see consensus)", "2 [cited]", "2", "2"])
    widths = [max(len(str(r[i])) for r in rows + [["invariant", *cols]]) for i in range(5)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format("invariant", *cols), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*r) for r in rows]
    out.append(f"traces: {oae.traces} per mode")
    return "\n".join(out)
