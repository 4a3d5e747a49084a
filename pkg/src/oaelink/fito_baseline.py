"""RDMA-style contrast model: completion on placement, no reflecting phase.

Each field of a write travels in its own frame and becomes observer-visible
at the receiver the tick it is placed. The receiver acknowledges once every
field of the transaction has been placed; the sender treats that ack as
completion without ever learning how the receiver interpreted the bytes.
Lost frames are retried forward (timeout-and-retry) up to ``max_retries``
times, after which the sender fail-stops.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import kbp
from .ilt import tc_on_initiate, tc_on_round_complete
from .link_fsm import EndpointFsm, EventKind, LinkEvent, LinkState, OUTSTANDING, on_timeout
from .netsim import ENDPOINTS, LinkModel, LinkParams, Scenario, ScriptEntry, EndpointSpec, Simulator, other
from .trace import Trace
from .transaction import (
    Frame,
    FrameKind,
    Transaction,
    VisibleStore,
    digest,
    digest_bit,
    encode_payload,
    interpret,
)

_PART = struct.Struct(">BB")  # field index, field count


@dataclass
class FitoEndpoint:
    """Receiver-side placement state; ``store.committed`` is the placement buffer."""

    store: VisibleStore = field(default_factory=VisibleStore)
    completion_log: list[tuple[int, int]] = field(default_factory=list)
    placed: dict[int, dict[int, int]] = field(default_factory=dict)

    @property
    def placement_buffer(self) -> dict[int, tuple[int, int]]:
        return self.store.committed


class FitoLink(LinkModel):
    mode = "fito"

    def __init__(self, sim: Simulator):
        super().__init__(sim)
        self.ends = {ep: FitoEndpoint(self.store[ep]) for ep in ENDPOINTS}
        self.retries: dict[int, int] = {}
        self.interpreted: dict[int, int] = {}

    def try_start(self, ep: str) -> None:
        while self.pending[ep] and self.fsm[ep].state is LinkState.IDLE:
            self._start(ep, self.pending[ep].popleft())

    def _start(self, ep: str, entry: ScriptEntry) -> None:
        now = self.sim.now
        self.tc = tc_on_initiate(self.tc, ep)
        counter = self.tc.c_a if ep == "A" else self.tc.c_b
        version = entry.schema_version or self.version[ep]
        t = Transaction(entry.txn, ep, dict(entry.writes), version, counter)
        self.txns[t.txn_id] = t
        self.retries[t.txn_id] = 0
        self.fsm_step(ep, LinkEvent(EventKind.INITIATE, ep, now, t.txn_id, now + self.timeout))
        self.audit(op="txn-begin", endpoint=ep, txn=t.txn_id, version=version,
                   writes=[[f, v] for f, v in sorted(t.writes.items())],
                   digest=format(t.digest, "016x"), tiebreak=[ep, counter])
        bit = digest_bit(t.digest)
        self.ont = self.ont.with_bit(kbp.PROPOSAL_POS[ep], bit)
        self.epi[ep] = kbp.set_own_proposal(kbp.retire(self.epi[ep]), bit, self.tc.d)
        self._send(ep, t)

    def _send(self, ep: str, t: Transaction) -> None:
        fields = sorted(t.writes)
        for i, f in enumerate(fields):
            body = _PART.pack(i, len(fields)) + encode_payload({f: t.writes[f]}, t.schema_version)
            self.sim.emit(ep, Frame(FrameKind.WRITE, t.txn_id, body, (ep, t.counter), t.schema_version, self.sim.now))
        self.sim.set_timer(ep, self.sim.now + self.timeout, "timeout", t.txn_id)

    # -- receiver: placement ----------------------------------------------

    def on_frame(self, ep: str, frame: Frame, intact: bool) -> None:
        if not intact:
            # the adapter's CRC drops the frame; the sender only learns via timeout
            self.audit(op="crc-drop", endpoint=ep, txn=frame.txn_id)
            return
        if frame.kind is FrameKind.WRITE:
            self._place(ep, frame)
        elif frame.kind is FrameKind.ACK:
            self._complete(ep, frame.txn_id)
        self.try_start(ep)
        self.try_start(other(ep))

    def _place(self, ep: str, frame: Frame) -> None:
        now = self.sim.now
        idx, count = _PART.unpack_from(frame.body)
        fields = interpret(frame.body[_PART.size:], self.version[ep])
        end = self.ends[ep]
        for f, v in fields.items():
            end.store.committed[f] = (v, frame.txn_id)
        self.apply_record(ep, frame.txn_id, fields, "placement", part=[idx, count])
        placed = end.placed.setdefault(frame.txn_id, {})
        placed.update(fields)
        if len(placed) == count:
            d = digest(frame.txn_id, self.version[ep], placed)
            self.interpreted.setdefault(frame.txn_id, d)
            bit = digest_bit(d)
            self.ont = self.ont.with_bit(kbp.PROPOSAL_POS[ep], bit).with_bit(kbp.DIGEST_POS[ep], bit)
            self.epi[ep] = kbp.set_own_proposal(kbp.retire(self.epi[ep]), bit, self.tc.d)
            self.sim.emit(ep, Frame(FrameKind.ACK, frame.txn_id, bytes(8), frame.tiebreak, self.version[ep], now))

    # -- sender: completion on ack ----------------------------------------

    def _complete(self, ep: str, txn: int) -> None:
        now = self.sim.now
        f = self.fsm[ep]
        if f.current_txn != txn or f.state is not LinkState.TENTATIVE:
            self.audit(op="stray-ack", endpoint=ep, txn=txn)
            return
        t = self.txns[txn]
        a, b = self.epi["A"], self.epi["B"]
        eligible = a.round == b.round and kbp.commit_eligible(a, b)
        # completion is not commitment, but it is all this model has
        self.sim.trace.add(now, "fsm", ep, txn, kind="transition", **{
            "from": "TENTATIVE", "event": "CommitAck", "to": "COMMITTED", "reason": "completion on placement"})
        self.fsm[ep] = EndpointFsm(ep, LinkState.COMMITTED, concluded_txn=txn)
        t.resolve(ep)
        t.complete(True)
        self.tc = tc_on_round_complete(self.tc)
        self.ends[ep].completion_log.append((txn, now))
        for fid, v in t.writes.items():
            self.store[ep].committed[fid] = (v, txn)
        self.apply_record(ep, txn, t.writes, "completion")
        self.audit(op="commit", txn=txn, initiator=ep, intended=format(t.digest, "016x"),
                   interpreted=format(self.interpreted[txn], "016x"), eligible=eligible)
        self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now))

    def on_timer(self, ep: str, kind: str, txn: int | None) -> None:
        now = self.sim.now
        f = self.fsm[ep]
        if kind != "timeout" or f.current_txn != txn or f.state not in OUTSTANDING:
            return
        if self.retries[txn] < self.sim.params.max_retries:
            self.retries[txn] += 1
            self.sim.trace.add(now, "fsm", ep, txn, kind="retry", **{
                "from": "TENTATIVE", "event": "Timeout", "to": "TENTATIVE",
                "reason": f"retry {self.retries[txn]}"})
            self.fsm[ep] = EndpointFsm(ep, LinkState.TENTATIVE, txn, now + self.timeout, "initiator")
            self._send(ep, self.txns[txn])
            return
        # retry budget exhausted: detected, unrecoverable; placed fields stay placed
        self.fsm[ep] = EndpointFsm(ep, LinkState.TENTATIVE, txn, now, "initiator")
        self.commit_step(ep, txn, on_timeout(self.fsm[ep], now))
        self.audit(op="fail-stop", endpoint=ep, txn=txn, retries=self.retries[txn])
        self.rollback(ep, txn)
        self.fsm_step(ep, LinkEvent(EventKind.QUIESCE, ep, now))
        self.try_start(ep)


# ---------------------------------------------------------------------------
# convenience entry points


@dataclass(frozen=True)
class CompletionRecord:
    txn_id: int
    completed: bool
    tick: int | None
    retries: int
    trace: Trace


def rdma_write(writes: dict[int, int], params: LinkParams | None = None, *, at: int = 0,
               sender_version: int = 1, receiver_version: int = 1,
               read_ticks: tuple[int, ...] = (), horizon: int = 200) -> CompletionRecord:
    """Run one FITO write from A to B and report how the sender saw it complete."""
    if params is None:
        params = LinkParams(loss_prob=0.0, dup_prob=0.0, reorder_prob=0.0, corrupt_prob=0.0)
    scn = Scenario(
        name="rdma_write",
        link=params,
        endpoints={
            "A": EndpointSpec(sender_version, [ScriptEntry(at, "A", "initiate", dict(writes))]),
            "B": EndpointSpec(receiver_version, [ScriptEntry(t, "B", "read") for t in read_ticks]),
        },
        horizon=horizon,
        mode="fito",
    )
    sim = Simulator(scn)
    trace = sim.run()
    log = sim.link.ends["A"].completion_log
    return CompletionRecord(1, bool(log), log[0][1] if log else None, sim.link.retries.get(1, 0), trace)


def count_violations(trace: Trace) -> dict[str, int]:
    from .analysis import check_invariants

    return dict(check_invariants(trace).counts)
