"""Deterministic discrete-event simulator for one duplex point-to-point link.

Time is integer ticks. A frame occupies its direction of the wire for
``frame_tx_time`` ticks from its start of transmission, so its last bit
leaves in tick ``start + frame_tx_time - 1`` (recorded as ``tx_done``). Its
leading edge reaches the peer ``one_way_delay`` ticks after the start;
receivers act on the leading edge (cut-through). Every fault applied to a frame
(loss, corruption, duplication, reordering) is decided once, at emission,
from a per-direction SplitMix64 stream.

The protocol running on the link is pluggable: :class:`OaeLink` here,
``fito_baseline.FitoLink`` for the contrast model. Both write the same
trace schema.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from . import kbp
from .ilt import tc_init, tc_on_initiate, tc_on_round_complete
from .link_fsm import EndpointFsm, EventKind, LinkEvent, LinkState, OUTSTANDING, on_timeout, step
from .rng import SplitMix64
from .trace import Trace
from .transaction import (
    Frame,
    FrameKind,
    HyperdataLoop,
    Phase,
    Rejected,
    Transaction,
    VisibleStore,
    abort_rollback,
    circulate_hyperdata,
    commit_visibility,
    digest_bit,
    fcs,
    initiate,
    quiesce,
    reflect,
    tiebreak_winner,
    validate_reflection,
)

ENDPOINTS = ("A", "B")
MODES = ("oae", "fito")

# delivery before timers before script actions before observer reads
PRIO_DELIVER, PRIO_TIMER, PRIO_SCRIPT, PRIO_READ = 0, 1, 2, 3


def other(ep: str) -> str:
    return "B" if ep == "A" else "A"


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid scenario:\n  " + "\n  ".join(errors))
        self.errors = errors


class HorizonExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scenario description


@dataclass
class LinkParams:
    one_way_delay: int = 3
    frame_tx_time: int = 1
    # harness defaults; no fault rates are given for real links
    loss_prob: float = 0.01
    dup_prob: float = 0.005
    reorder_prob: float = 0.005
    corrupt_prob: float = 0.001
    seed: int = 0
    timeout: int | None = None  # default 4 x one-way delay
    max_retries: int = 3  # FITO retry budget before fail-stop

    @property
    def effective_timeout(self) -> int:
        return self.timeout if self.timeout is not None else 4 * self.one_way_delay

    def errors(self) -> list[str]:
        errs = []
        for name in ("one_way_delay", "frame_tx_time"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                errs.append(f"link.{name}: must be an integer >= 1 tick, got {v!r}")
        for name in ("loss_prob", "dup_prob", "reorder_prob", "corrupt_prob"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not 0.0 <= v <= 1.0:
                errs.append(f"link.{name}: must be a probability in [0, 1], got {v!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            errs.append(f"link.seed: must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.timeout is not None and (not isinstance(self.timeout, int) or self.timeout < 1):
            errs.append(f"link.timeout: must be a positive integer or null, got {self.timeout!r}")
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            errs.append(f"link.max_retries: must be a non-negative integer, got {self.max_retries!r}")
        return errs


def pif_condition(p: LinkParams) -> bool:
    """Round trip completes before the frame has finished transmitting."""
    return 2 * p.one_way_delay < p.frame_tx_time


@dataclass
class ScriptEntry:
    at: int
    endpoint: str
    op: str  # "initiate" | "read"
    writes: dict[int, int] = field(default_factory=dict)
    schema_version: int | None = None
    txn: int | None = None


@dataclass
class EndpointSpec:
    schema_version: int = 1
    script: list[ScriptEntry] = field(default_factory=list)


@dataclass
class Scenario:
    name: str = "scenario"
    link: LinkParams = field(default_factory=LinkParams)
    endpoints: dict[str, EndpointSpec] = field(
        default_factory=lambda: {ep: EndpointSpec() for ep in ENDPOINTS}
    )
    horizon: int = 200
    mode: str = "oae"
    idle_circulation: bool = False
    hyperdata_origin: str = "A"

    def __post_init__(self):
        self._number_txns()

    def _number_txns(self) -> None:
        inits = [e for ep in ENDPOINTS for e in self.endpoints[ep].script if e.op == "initiate"]
        inits.sort(key=lambda e: (e.at, e.endpoint))
        for n, e in enumerate(inits, start=1):
            e.txn = n

    @property
    def entries(self) -> list[ScriptEntry]:
        return sorted(
            (e for ep in ENDPOINTS for e in self.endpoints[ep].script),
            key=lambda e: (e.at, e.endpoint, e.op),
        )

    def errors(self) -> list[str]:
        errs = self.link.errors()
        if self.mode not in MODES:
            errs.append(f"mode: must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            errs.append(f"horizon: must be a positive integer, got {self.horizon!r}")
        if self.hyperdata_origin not in ENDPOINTS:
            errs.append(f"hyperdata.origin: must be A or B, got {self.hyperdata_origin!r}")
        if set(self.endpoints) - set(ENDPOINTS):
            errs.append(f"endpoints: undeclared endpoint(s) {sorted(set(self.endpoints) - set(ENDPOINTS))}")
        for ep, spec in self.endpoints.items():
            if spec.schema_version not in (1, 2):
                errs.append(f"endpoints.{ep}.schema_version: must be 1 or 2, got {spec.schema_version!r}")
            for i, e in enumerate(spec.script):
                where = f"endpoints.{ep}.script[{i}]"
                if not isinstance(e.at, int) or e.at < 0:
                    errs.append(f"{where}.at: must be a non-negative tick, got {e.at!r}")
                elif isinstance(self.horizon, int) and e.at >= self.horizon:
                    errs.append(f"{where}.at: tick {e.at} is past the horizon {self.horizon}")
                if e.op not in ("initiate", "read"):
                    errs.append(f"{where}: unknown op {e.op!r}")
                if e.op == "initiate":
                    if not e.writes:
                        errs.append(f"{where}.initiate: needs at least one field write")
                    for k, v in e.writes.items():
                        if not isinstance(k, int) or not 0 <= k <= 255:
                            errs.append(f"{where}.initiate: field id {k!r} must be an integer 0..255")
                        if not isinstance(v, int) or not -(2**63) <= v < 2**63:
                            errs.append(f"{where}.initiate: value for field {k!r} must be a signed 64-bit integer")
                    if e.schema_version not in (None, 1, 2):
                        errs.append(f"{where}.schema_version: must be 1 or 2, got {e.schema_version!r}")
        return errs

    def validate(self) -> "Scenario":
        errs = self.errors()
        if errs:
            raise ScenarioError(errs)
        return self

    # -- file format ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        errs: list[str] = []
        if not isinstance(d, dict):
            raise ScenarioError(["scenario file must be a mapping"])
        known = {"name", "link", "endpoints", "horizon", "mode", "hyperdata"}
        for k in sorted(set(d) - known):
            errs.append(f"{k}: unknown top-level field")
        link_d = d.get("link") or {}
        params = LinkParams()
        for k, v in link_d.items():
            if not hasattr(params, k):
                errs.append(f"link.{k}: unknown field")
            else:
                setattr(params, k, v)
        hyper = d.get("hyperdata") or {}
        for k in sorted(set(hyper) - {"idle_circulation", "origin"}):
            errs.append(f"hyperdata.{k}: unknown field")
        endpoints = {}
        for ep, ed in (d.get("endpoints") or {}).items():
            ed = ed or {}
            spec = EndpointSpec(schema_version=ed.get("schema_version", 1))
            for k in sorted(set(ed) - {"schema_version", "script", "reads"}):
                errs.append(f"endpoints.{ep}.{k}: unknown field")
            for i, item in enumerate(ed.get("script") or []):
                where = f"endpoints.{ep}.script[{i}]"
                if not isinstance(item, dict) or "at" not in item:
                    errs.append(f"{where}: entries need an 'at' tick")
                    continue
                if "initiate" in item:
                    writes = item["initiate"]
                    if not isinstance(writes, dict):
                        errs.append(f"{where}.initiate: must map field id -> value")
                        writes = {}
                    spec.script.append(ScriptEntry(item["at"], ep, "initiate", dict(writes),
                                                   item.get("schema_version")))
                elif item.get("read"):
                    spec.script.append(ScriptEntry(item["at"], ep, "read"))
                else:
                    errs.append(f"{where}: needs 'initiate' or 'read'")
            reads = ed.get("reads")
            if reads:
                every, lo, hi = reads.get("every", 1), reads.get("from", 0), reads.get("until", 0)
                if not all(isinstance(x, int) for x in (every, lo, hi)) or every < 1:
                    errs.append(f"endpoints.{ep}.reads: every/from/until must be integers, every >= 1")
                else:
                    spec.script.extend(ScriptEntry(t, ep, "read") for t in range(lo, hi, every))
            endpoints[ep] = spec
        for ep in ENDPOINTS:
            endpoints.setdefault(ep, EndpointSpec())
        scn = cls(
            name=d.get("name", "scenario"),
            link=params,
            endpoints=endpoints,
            horizon=d.get("horizon", 200),
            mode=d.get("mode", "oae"),
            idle_circulation=bool(hyper.get("idle_circulation", False)),
            hyperdata_origin=hyper.get("origin", "A"),
        )
        errs.extend(scn.errors())
        if errs:
            raise ScenarioError(errs)
        return scn

    @classmethod
    def from_file(cls, path: str | Path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def with_params(self, **changes) -> "Scenario":
        """Copy with link parameters overridden (scripts are shared, read-only)."""
        return replace(self, link=replace(self.link, **changes))


# ---------------------------------------------------------------------------
# protocol models


class LinkModel:
    """State shared by both protocol models: endpoint FSMs, stores, registers, clock."""

    mode = "?"

    def __init__(self, sim: "Simulator"):
        self.sim = sim
        scn = sim.scenario
        self.timeout = scn.link.effective_timeout
        self.fsm = {ep: EndpointFsm(ep) for ep in ENDPOINTS}
        self.store = {ep: VisibleStore() for ep in ENDPOINTS}
        self.epi = {ep: kbp.epi_init(ep) for ep in ENDPOINTS}
        self.ont = kbp.OntRegister()
        self.tc = tc_init()
        self.version = {ep: scn.endpoints[ep].schema_version for ep in ENDPOINTS}
        self.txns: dict[int, Transaction] = {}
        self.pending: dict[str, deque[ScriptEntry]] = {ep: deque() for ep in ENDPOINTS}
        self.hyper = HyperdataLoop(scn.idle_circulation, scn.hyperdata_origin)
        self._last_tc = None

    # -- trace helpers ----------------------------------------------------

    def fsm_step(self, ep: str, ev: LinkEvent) -> tuple:
        f = self.fsm[ep]
        res = step(f, ev)
        txn = ev.txn if ev.txn is not None else (f.current_txn if f.current_txn is not None else f.concluded_txn)
        self.commit_step(ep, txn, res)
        return res

    def commit_step(self, ep: str, txn: int | None, res) -> None:
        self.fsm[ep] = res.fsm
        self.sim.trace.add(self.sim.now, "fsm", ep, txn, **res.record)

    def audit(self, **body) -> None:
        txn = body.pop("txn", None)
        ep = body.pop("endpoint", "-")
        self.sim.trace.add(self.sim.now, "auditor", ep, txn, **body)

    def apply_record(self, ep: str, txn: int, fields: dict[int, int], cause: str, **extra) -> None:
        self.audit(op="apply", endpoint=ep, txn=txn, cause=cause,
                   fields=[[f, fields[f]] for f in sorted(fields)], **extra)

    # -- hooks ------------------------------------------------------------

    def link_up(self) -> None:
        for ep in ENDPOINTS:
            self.fsm_step(ep, LinkEvent(EventKind.LINK_UP, ep, self.sim.now))

    def request(self, entry: ScriptEntry) -> None:
        self.pending[entry.endpoint].append(entry)
        self.try_start(entry.endpoint)

    def try_start(self, ep: str) -> None:
        raise NotImplementedError

    def on_frame(self, ep: str, frame: Frame, intact: bool) -> None:
        raise NotImplementedError

    def on_timer(self, ep: str, kind: str, txn: int | None) -> None:
        raise NotImplementedError

    def end_of_tick(self) -> None:
        now = self.sim.now
        tc = self.tc.as_tuple()
        if tc != self._last_tc:
            self._last_tc = tc
            self.audit(op="tc", c_a=tc[0], c_b=tc[1], d=tc[2])
        self.hyper.both_idle = all(self.fsm[ep].state is LinkState.IDLE for ep in ENDPOINTS)
        eligible = kbp.commit_eligible(self.epi["A"], self.epi["B"]) if self.epi["A"].round == self.epi["B"].round else False
        for ep in ENDPOINTS:
            e = self.epi[ep]
            self.sim.trace.add(
                now, "kbp", ep, None,
                mask=format(e.known_mask, "04b"), known_bits=format(e.known_bits, "02b"),
                fresh=format(e.fresh_mask, "04b"), round=e.round,
                balanced=kbp.knowledge_balance_check(e), eligible=eligible,
                ont_agrees=kbp.agrees_with_ont(e, self.ont),
            )

    def sweep(self) -> None:
        """Horizon reached: abort whatever is still outstanding."""
        for ep in ENDPOINTS:
            f = self.fsm[ep]
            if f.state in OUTSTANDING:
                txn = f.current_txn
                self.fsm_step(ep, LinkEvent(EventKind.TIMEOUT, ep, self.sim.now, txn, reason="horizon"))
                self.rollback(ep, txn)
                self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, self.sim.now))
            elif f.state in (LinkState.COMMITTED, LinkState.ABORTED):
                self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, self.sim.now))
            for entry in self.pending[ep]:
                self.audit(op="not-started", endpoint=ep, txn=entry.txn)
            self.pending[ep].clear()

    def rollback(self, ep: str, txn: int | None) -> None:
        if txn is None:
            return
        abort_rollback(self.store[ep], txn)
        t = self.txns.get(txn)
        if t is not None and not t.completed:
            t.complete(False)
            self.audit(op="abort", txn=txn, endpoint=ep)


class OaeLink(LinkModel):
    mode = "oae"

    def __init__(self, sim: "Simulator"):
        super().__init__(sim)
        self.interpreted: dict[int, int] = {}
        self.seen = {ep: set() for ep in ENDPOINTS}  # txns each endpoint has handled
        self.commit_tick: dict[int, int] = {}

    # -- initiation -------------------------------------------------------

    def try_start(self, ep: str) -> None:
        while self.pending[ep] and self.fsm[ep].state is LinkState.IDLE:
            self._start(ep, self.pending[ep].popleft())

    def _start(self, ep: str, entry: ScriptEntry) -> None:
        now = self.sim.now
        self.tc = tc_on_initiate(self.tc, ep)
        counter = self.tc.c_a if ep == "A" else self.tc.c_b
        version = entry.schema_version or self.version[ep]
        txn = Transaction(entry.txn, ep, dict(entry.writes), version, counter)
        self.txns[txn.txn_id] = txn
        try:
            fsm, frame, rec = initiate(self.fsm[ep], txn, self.store[ep], now, self.timeout)
        except Rejected as exc:  # pragma: no cover - guarded by try_start
            self.sim.trace.add(now, "fsm", ep, txn.txn_id, **exc.record)
            return
        self.fsm[ep] = fsm
        self.sim.trace.add(now, "fsm", ep, txn.txn_id, **rec)
        self.seen[ep].add(txn.txn_id)
        self.audit(op="txn-begin", endpoint=ep, txn=txn.txn_id, version=version,
                   writes=[[f, v] for f, v in sorted(txn.writes.items())],
                   digest=format(txn.digest, "016x"), tiebreak=[ep, counter])
        bit = digest_bit(txn.digest)
        self.ont = self.ont.with_bit(kbp.PROPOSAL_POS[ep], bit)
        self.epi[ep] = kbp.set_own_proposal(kbp.retire(self.epi[ep]), bit, self.tc.d)
        self.sim.emit(ep, frame)
        self.sim.set_timer(ep, fsm.timeout_deadline, "timeout", txn.txn_id)
        self._update_indefinite()

    def _update_indefinite(self) -> None:
        a, b = self.fsm["A"], self.fsm["B"]
        crossed = (
            a.state is LinkState.TENTATIVE and b.state is LinkState.TENTATIVE
            and a.role == "initiator" and b.role == "initiator"
            and self.txns[a.current_txn].phase is Phase.INDEFINITE
            and self.txns[b.current_txn].phase is Phase.INDEFINITE
        )
        if crossed != self.hyper.indefinite:
            self.hyper.indefinite = crossed
            self.audit(op="indefinite-begin" if crossed else "indefinite-end")

    # -- frames -----------------------------------------------------------

    def on_frame(self, ep: str, frame: Frame, intact: bool) -> None:
        handler = {
            FrameKind.TENTATIVE: self._on_tentative,
            FrameKind.REFLECTION: self._on_reflection,
            FrameKind.COMMIT_ACK: self._on_commit_ack,
            FrameKind.ABORT_NOTIFY: self._on_abort_notify,
        }.get(frame.kind)
        if handler is None:
            self.sim.trace.add(self.sim.now, "fsm", ep, frame.txn_id, kind="ignored",
                               **self._noop(ep, "DataArrived", f"unexpected {frame.kind.value} frame"))
            return
        handler(ep, frame, intact)
        self._update_indefinite()
        self.try_start(ep)
        self.try_start(other(ep))

    def _noop(self, ep: str, event: str, reason: str) -> dict:
        s = self.fsm[ep].state.value
        return {"from": s, "event": event, "to": s, "reason": reason}

    def _on_tentative(self, ep: str, frame: Frame, intact: bool) -> None:
        now = self.sim.now
        fsm = self.fsm[ep]
        txn = frame.txn_id
        if txn in self.seen[ep]:
            self.sim.trace.add(now, "fsm", ep, txn, kind="ignored",
                               **self._noop(ep, "DataArrived", "duplicate tentative"))
            return
        if fsm.state is LinkState.TENTATIVE and fsm.role == "initiator" and intact:
            mine = self.txns[fsm.current_txn]
            local = (ep, mine.counter)
            if tiebreak_winner(local, frame.tiebreak) == local:
                mine.resolve(ep)
                self.audit(op="tiebreak", endpoint=ep, txn=mine.txn_id, winner=mine.txn_id, loser=txn)
                self.sim.trace.add(now, "fsm", ep, txn, kind="ignored",
                                   **self._noop(ep, "DataArrived", "crossed initiation: tie-break won"))
                return
            self.audit(op="tiebreak", endpoint=ep, txn=txn, winner=txn, loser=mine.txn_id)
            self.fsm_step(ep, LinkEvent(EventKind.PEER_ABORT, ep, now, mine.txn_id, reason="crossed initiation: tie-break lost"))
            self.rollback(ep, mine.txn_id)
            self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now))
            fsm = self.fsm[ep]
        if fsm.state is not LinkState.IDLE:
            reason = "busy" if intact else "corrupt frame while busy"
            self.sim.trace.add(now, "fsm", ep, txn, kind="ignored", **self._noop(ep, "DataArrived", reason))
            return
        self.seen[ep].add(txn)
        out = reflect(fsm, frame, intact, self.store[ep], self.version[ep], now, self.timeout)
        for rec in out.records:
            self.sim.trace.add(now, "fsm", ep, txn, **rec)
        self.fsm[ep] = out.fsm
        t = self.txns[txn]
        if not intact:
            self.rollback(ep, txn)
            self.sim.emit(ep, out.reply)
            self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now))
            return
        t.resolve(frame.tiebreak[0])
        self.interpreted[txn] = out.digest
        bit = digest_bit(out.digest)
        self.ont = self.ont.with_bit(kbp.PROPOSAL_POS[ep], bit).with_bit(kbp.DIGEST_POS[ep], bit)
        self.epi[ep] = kbp.set_own_proposal(kbp.retire(self.epi[ep]), bit, self.tc.d)
        self.sim.emit(ep, out.reply)
        self.sim.set_timer(ep, out.fsm.timeout_deadline, "timeout", txn)

    def _on_reflection(self, x: str, frame: Frame, intact: bool) -> None:
        now = self.sim.now
        fsm = self.fsm[x]
        txn = frame.txn_id
        if not (fsm.state is LinkState.TENTATIVE and fsm.role == "initiator" and fsm.current_txn == txn):
            self.fsm_step(x, LinkEvent(EventKind.REFLECTION_ARRIVED, x, now, txn))
            return
        if not intact:
            self.fsm_step(x, LinkEvent(EventKind.VALIDATION_FAIL, x, now, txn, reason="integrity check failed"))
            self._abort_local(x, txn)
            return
        self.fsm_step(x, LinkEvent(EventKind.REFLECTION_ARRIVED, x, now, txn))
        y = other(x)
        self.epi[x] = kbp.merge_reflection(self.epi[x], kbp.digest_fragment(y, digest_bit(frame.digest), self.tc.d))
        t = self.txns[txn]
        verdict = validate_reflection(t, frame)
        if not verdict.commit:
            self.fsm_step(x, LinkEvent(EventKind.VALIDATION_FAIL, x, now, txn, reason=verdict.reason))
            self._abort_local(x, txn)
            return
        res = self.fsm_step(x, LinkEvent(EventKind.VALIDATION_OK, x, now, txn))
        for act in res.actions:
            if act.kind == "emit":
                self.sim.emit(x, Frame(FrameKind.COMMIT_ACK, txn, frame.body, frame.tiebreak, t.schema_version, now))
        peer = self.fsm[y]
        if peer.state is LinkState.REFLECTING and peer.current_txn == txn and peer.validated:
            self._complete_round(x, y, t)
        # otherwise the peer already left the round; our own timer will abort us

    def _complete_round(self, x: str, y: str, t: Transaction) -> None:
        """Round completion: the link's d advances and both ends observe it this tick."""
        now = self.sim.now
        txn = t.txn_id
        bit = digest_bit(t.digest)
        self.ont = self.ont.with_bit(kbp.DIGEST_POS[x], bit)
        self.epi[y] = kbp.merge_reflection(self.epi[y], kbp.digest_fragment(x, bit, self.tc.d))
        eligible = kbp.commit_eligible(self.epi["A"], self.epi["B"])
        for ep in (x, y):
            self.fsm_step(ep, LinkEvent(EventKind.COMMIT_ACK, ep, now, txn))
        self.tc = tc_on_round_complete(self.tc)
        t.complete(True)
        self.commit_tick[txn] = now
        for ep in (x, y):
            fields = dict(self.store[ep].tentative_buffer[txn])
            commit_visibility(self.store[ep], txn)
            self.apply_record(ep, txn, fields, "commit")
        self.audit(op="commit", txn=txn, initiator=x, intended=format(t.digest, "016x"),
                   interpreted=format(self.interpreted[txn], "016x"), eligible=eligible)
        self.fsm_step(x, LinkEvent(EventKind.QUIESCE, x, now))
        self.sim.set_timer(y, now + self.timeout, "quiesce", txn)

    def _abort_local(self, ep: str, txn: int) -> None:
        self.rollback(ep, txn)
        self.sim.emit(ep, Frame(FrameKind.ABORT_NOTIFY, txn, bytes(8), (ep, 0), self.version[ep], self.sim.now))
        self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, self.sim.now))

    def _on_commit_ack(self, y: str, frame: Frame, intact: bool) -> None:
        now = self.sim.now
        fsm = self.fsm[y]
        txn = frame.txn_id
        if fsm.state is LinkState.COMMITTED and fsm.concluded_txn == txn and intact:
            self.audit(op="round-closed", endpoint=y, txn=txn, window=now - self.commit_tick[txn])
            self.fsm_step(y, LinkEvent(EventKind.QUIESCE, y, now))
            return
        reason = "corrupt commit-ack" if not intact else "stray commit-ack"
        self.sim.trace.add(now, "fsm", y, txn, kind="ignored", **self._noop(y, "CommitAck", reason))

    def _on_abort_notify(self, ep: str, frame: Frame, intact: bool) -> None:
        now = self.sim.now
        txn = frame.txn_id
        if not intact:
            self.sim.trace.add(now, "fsm", ep, txn, kind="ignored", **self._noop(ep, "PeerAbort", "corrupt abort-notify"))
            return
        res = self.fsm_step(ep, LinkEvent(EventKind.PEER_ABORT, ep, now, txn, reason="peer abort"))
        if res.record["kind"] == "transition":
            self.rollback(ep, txn)
            self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now))

    # -- timers -----------------------------------------------------------

    def on_timer(self, ep: str, kind: str, txn: int | None) -> None:
        now = self.sim.now
        fsm = self.fsm[ep]
        if kind == "timeout":
            if fsm.current_txn != txn or fsm.state not in OUTSTANDING:
                return  # stale timer
            res = on_timeout(fsm, now)
            self.commit_step(ep, txn, res)
            if res.record["kind"] == "transition":
                self.rollback(ep, txn)
                self.sim.emit(ep, Frame(FrameKind.ABORT_NOTIFY, txn, bytes(8), (ep, 0), self.version[ep], now))
                self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now))
        elif kind == "quiesce":
            if fsm.state is LinkState.COMMITTED and fsm.concluded_txn == txn:
                self.audit(op="round-closed", endpoint=ep, txn=txn, window=None)
                self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now, reason="commit-ack not received"))
        self._update_indefinite()
        self.try_start(ep)
        self.try_start(other(ep))


# ---------------------------------------------------------------------------
# event loop


@dataclass
class _InFlight:
    fid: int
    src: str
    frame: Frame
    wire: bytes
    check: int
    arrival: int
    copies: int  # 1 or 2 (duplicated)
    done: int = 0  # copies delivered or dropped
    lost: bool = False


class Simulator:
    def __init__(self, scenario: Scenario, seed: int | None = None, mode: str | None = None):
        scenario.validate()
        self.scenario = scenario
        self.params = scenario.link
        self.seed = self.params.seed if seed is None else seed
        self.mode = mode or scenario.mode
        if self.mode not in MODES:
            raise ScenarioError([f"mode: must be one of {MODES}, got {self.mode!r}"])
        self.horizon = scenario.horizon
        self.trace = Trace({"scenario": scenario.name, "mode": self.mode, "seed": self.seed,
                            "horizon": self.horizon})
        root = SplitMix64(self.seed)
        self._rng = {f"{s}>{other(s)}": root.split(f"{s}>{other(s)}") for s in ENDPOINTS}
        self._q: list[tuple] = []
        self._seq = 0
        self._fid = 0
        self._tx_free = {d: 0 for d in self._rng}
        self._reorder_pending: dict[str, int | None] = {d: None for d in self._rng}
        self.inflight: dict[int, _InFlight] = {}
        self.now = 0
        self._hyper_next = 0
        self.started = False
        self.finished = False
        if self.mode == "oae":
            self.link: LinkModel = OaeLink(self)
        else:
            from .fito_baseline import FitoLink

            self.link = FitoLink(self)

    # -- scheduling -------------------------------------------------------

    def _push(self, tick: int, prio: int, kind: str, data: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._q, (tick, prio, self._seq, kind, data))

    def set_timer(self, ep: str, tick: int, kind: str, txn: int | None) -> None:
        self._push(tick, PRIO_TIMER, "timer", (ep, kind, txn))

    def emit(self, src: str, frame: Frame) -> int:
        p = self.params
        d = f"{src}>{other(src)}"
        r = self._rng[d]
        start = max(self.now, self._tx_free[d])
        self._tx_free[d] = start + p.frame_tx_time
        arrival = start + p.one_way_delay
        # always draw the same five numbers so fault streams stay aligned
        lost = r.chance(p.loss_prob)
        corrupt = r.chance(p.corrupt_prob)
        dup = r.chance(p.dup_prob)
        reorder = r.chance(p.reorder_prob)
        flip = r.next_u64()
        raw = frame.to_bytes()
        check = fcs(raw)
        wire = raw
        if corrupt:
            body_bits = len(frame.body) * 8
            pos = (len(raw) - len(frame.body)) * 8 + flip % body_bits if body_bits else flip % (len(raw) * 8)
            b = bytearray(raw)
            b[pos // 8] ^= 1 << (pos % 8)
            wire = bytes(b)
        self._fid += 1
        fid = self._fid
        self.trace.add(self.now, "wire", src, frame.txn_id, op="emit", frame=fid, frame_kind=frame.kind.value,
                       start=start, arrival=arrival, tx_done=start + p.frame_tx_time - 1,
                       lost=lost, corrupt=corrupt, dup=dup, reorder=reorder, nbytes=len(raw))
        fl = _InFlight(fid, src, frame, wire, check, arrival, 2 if dup and not lost else 1, lost=lost)
        self.inflight[fid] = fl
        # a frame marked for reordering is overtaken by the next frame sent its way
        prev = self._reorder_pending[d]
        if prev is not None and not lost and prev in self.inflight and self.inflight[prev].arrival >= self.now:
            victim = self.inflight[prev]
            victim.arrival = arrival + 1
            self.trace.add(self.now, "wire", victim.src, victim.frame.txn_id, op="reorder",
                           frame=prev, overtaken_by=fid, arrival=victim.arrival)
            self._schedule_delivery(victim)
            self._reorder_pending[d] = None
        if reorder and not lost:
            self._reorder_pending[d] = fid
        self._schedule_delivery(fl)
        return fid

    def _schedule_delivery(self, fl: _InFlight) -> None:
        for copy in range(fl.copies):
            self._push(fl.arrival + copy, PRIO_DELIVER, "frame", (fl.fid, copy, fl.arrival + copy))

    # -- loop -------------------------------------------------------------

    def start(self) -> None:
        self.started = True
        self.now = 0
        self.link.link_up()
        for e in self.scenario.entries:
            self._push(e.at, PRIO_READ if e.op == "read" else PRIO_SCRIPT, e.op, (e,))

    def _hyper_fill(self, upto: int) -> None:
        upto = min(upto, self.horizon)
        while self._hyper_next < upto:
            t = self._hyper_next
            f = circulate_hyperdata(self.link.hyper, t)
            if f is not None:
                src = f.tiebreak[0]
                self.trace.add(t, "wire", src, None, op="hyperdata", frame_kind="Hyperdata",
                               dir=f"{src}>{other(src)}", token=f.body.hex())
            self._hyper_next = t + 1

    def advance(self) -> tuple[int, list] | None:
        if not self.started:
            self.start()
            self.link.end_of_tick()
            self._hyper_fill(1)
            return 0, []
        if self.finished or not self._q or self._q[0][0] >= self.horizon:
            return None
        tick = self._q[0][0]
        self._hyper_fill(tick)
        self.now = tick
        delivered = []
        while self._q and self._q[0][0] == tick:
            _, _, _, kind, data = heapq.heappop(self._q)
            if kind == "frame":
                fid, copy, when = data
                fl = self.inflight.get(fid)
                if fl is None or fl.arrival + copy != when:
                    continue  # superseded by a reorder
                fl.done += 1
                if fl.done >= fl.copies:
                    del self.inflight[fid]
                dst = other(fl.src)
                if fl.lost:
                    self.trace.add(tick, "wire", dst, fl.frame.txn_id, op="drop", frame=fid,
                                   frame_kind=fl.frame.kind.value)
                    continue
                intact = fcs(fl.wire) == fl.check
                self.trace.add(tick, "wire", dst, fl.frame.txn_id, op="deliver", frame=fid, copy=copy,
                               frame_kind=fl.frame.kind.value, intact=intact)
                frame = Frame.from_bytes(fl.wire, fl.frame.emit_tick) if intact else fl.frame.__class__(
                    fl.frame.kind, fl.frame.txn_id, fl.wire[len(fl.wire) - len(fl.frame.body):],
                    fl.frame.tiebreak, fl.frame.schema_version, fl.frame.emit_tick)
                delivered.append((dst, fid, copy, intact))
                self.link.on_frame(dst, frame, intact)
            elif kind == "timer":
                ep, tkind, txn = data
                self.link.on_timer(ep, tkind, txn)
            elif kind == "initiate":
                self.link.request(data[0])
            elif kind == "read":
                e = data[0]
                snap = self.link.store[e.endpoint].read()
                self.trace.add(tick, "observer", e.endpoint, None, op="read",
                               snapshot=[[f, v, w] for f, (v, w) in sorted(snap.items())])
        self.link.end_of_tick()
        self._hyper_fill(tick + 1)
        return tick, delivered

    def finish(self) -> Trace:
        if self.finished:
            return self.trace
        hit_horizon = bool(self._q) and self._q[0][0] >= self.horizon
        if hit_horizon or self.link.hyper.idle_circulation:
            self.now = max(self.now, self.horizon - 1)
            self._hyper_fill(self.horizon)
        self.link.sweep()
        for fid in sorted(self.inflight):
            fl = self.inflight[fid]
            for _ in range(fl.copies - fl.done):
                self.trace.add(self.now, "wire", other(fl.src), fl.frame.txn_id, op="in-flight-at-end",
                               frame=fid, frame_kind=fl.frame.kind.value)
        self.inflight.clear()
        self.trace.header["end_tick"] = self.now
        self.finished = True
        return self.trace

    def run(self) -> Trace:
        while self.advance() is not None:
            pass
        return self.finish()


def run(scn: Scenario, seed: int | None = None, mode: str | None = None) -> Trace:
    return Simulator(scn, seed, mode).run()
