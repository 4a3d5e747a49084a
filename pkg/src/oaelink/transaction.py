"""Transaction lifecycle pieces: payload schema, digests, frames, visible store.

Payloads are a schema-version byte plus a tagged field list. Version 1
encodes values big-endian, version 2 little-endian, so the same bytes
mean different things to endpoints on different versions while arriving
bit-identical. The reflection digest is computed over the *interpreted*
fields, which is what makes that divergence detectable.
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, field

from . import link_fsm
from .link_fsm import EndpointFsm, EventKind, LinkEvent
from .rng import fnv1a64

SCHEMA_VERSIONS = (1, 2)
_VALUE_FMT = {1: ">q", 2: "<q"}


class TxnFault(Exception):
    """Commit/abort requested in a state that forbids it."""


class StrayFrame(TxnFault):
    pass


# ---------------------------------------------------------------------------
# payload schema


def encode_payload(writes: dict[int, int], version: int) -> bytes:
    fmt = _VALUE_FMT[version]
    out = bytearray([len(writes)])
    for fid in sorted(writes):
        if not 0 <= fid <= 255:
            raise ValueError(f"field id {fid} out of range 0..255")
        out.append(fid)
        out += struct.pack(fmt, writes[fid])
    return bytes(out)


def interpret(body: bytes, version: int) -> dict[int, int]:
    """Decode a payload the way an endpoint on ``version`` reads it."""
    if version not in _VALUE_FMT:
        raise ValueError(f"unknown schema version {version}")
    fmt = _VALUE_FMT[version]
    n = body[0]
    if len(body) != 1 + 9 * n:
        raise ValueError("payload length does not match field count")
    fields = {}
    for i in range(n):
        off = 1 + 9 * i
        fields[body[off]] = struct.unpack_from(fmt, body, off + 1)[0]
    return fields


def digest(txn_id: int, version: int, fields: dict[int, int]) -> int:
    """64-bit FNV-1a over txn id, interpreting version, canonical fields."""
    buf = bytearray(struct.pack(">QB", txn_id, version))
    for fid in sorted(fields):
        buf.append(fid)
        buf += struct.pack(">q", fields[fid])
    return fnv1a64(bytes(buf))


def digest_bit(d: int) -> int:
    return d & 1


# ---------------------------------------------------------------------------
# frames


class FrameKind(enum.Enum):
    TENTATIVE = "Tentative"
    REFLECTION = "Reflection"
    COMMIT_ACK = "CommitAck"
    ABORT_NOTIFY = "AbortNotify"
    HYPERDATA = "Hyperdata"
    WRITE = "Write"  # FITO placement
    ACK = "Ack"  # FITO completion


_KIND_CODE = {k: i + 1 for i, k in enumerate(FrameKind)}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_HEADER = struct.Struct(">BQBQBH")


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    txn_id: int
    body: bytes = b""
    tiebreak: tuple[str, int] = ("A", 0)
    schema_version: int = 1
    emit_tick: int = 0

    def to_bytes(self) -> bytes:
        """kind(1) | txn_id(8) | tiebreak ep(1)+counter(8) | version(1) | length(2) | body"""
        ep, counter = self.tiebreak
        return _HEADER.pack(_KIND_CODE[self.kind], self.txn_id, ord(ep), counter,
                            self.schema_version, len(self.body)) + self.body

    @classmethod
    def from_bytes(cls, raw: bytes, emit_tick: int = 0) -> "Frame":
        code, txn, ep, counter, ver, length = _HEADER.unpack_from(raw)
        body = raw[_HEADER.size:]
        if len(body) != length:
            raise ValueError("frame length field does not match body")
        return cls(_CODE_KIND[code], txn, body, (chr(ep), counter), ver, emit_tick)

    @property
    def digest(self) -> int:
        if self.kind not in (FrameKind.REFLECTION, FrameKind.COMMIT_ACK):
            raise ValueError(f"{self.kind.value} frames carry no digest")
        return struct.unpack(">Q", self.body)[0]


def fcs(raw: bytes) -> int:
    """Link-level frame check sequence."""
    return zlib.crc32(raw)


def digest_frame(kind: FrameKind, txn_id: int, d: int, tiebreak, version: int, tick: int) -> Frame:
    return Frame(kind, txn_id, struct.pack(">Q", d), tiebreak, version, tick)


def tiebreak_winner(local: tuple[str, int], remote: tuple[str, int]) -> tuple[str, int]:
    """Crossed initiations: the lower (endpoint-id, counter) tuple initiates."""
    return min(local, remote)


# ---------------------------------------------------------------------------
# transactions


class Phase(enum.IntEnum):
    INDEFINITE = 0
    RESOLUTION = 1
    COMMITTED = 2
    ABORTED = 3


@dataclass
class Transaction:
    txn_id: int
    initiator: str
    writes: dict[int, int]
    schema_version: int = 1
    counter: int = 0
    phase: Phase = Phase.INDEFINITE
    orientation: str | None = None

    @property
    def payload(self) -> bytes:
        return encode_payload(self.writes, self.schema_version)

    @property
    def digest(self) -> int:
        # the initiator's own interpretation of what it sent
        return digest(self.txn_id, self.schema_version, interpret(self.payload, self.schema_version))

    @property
    def completed(self) -> bool:
        return self.phase >= Phase.COMMITTED

    def resolve(self, orientation: str) -> None:
        if self.phase is not Phase.INDEFINITE:
            return
        self.phase, self.orientation = Phase.RESOLUTION, orientation

    def complete(self, committed: bool) -> None:
        if self.completed:
            raise TxnFault(f"txn {self.txn_id} already completed")
        if committed and self.phase is not Phase.RESOLUTION:
            raise TxnFault(f"txn {self.txn_id} cannot commit without resolution")
        if self.orientation is None:
            self.orientation = self.initiator
        self.phase = Phase.COMMITTED if committed else Phase.ABORTED


@dataclass
class VisibleStore:
    committed: dict[int, tuple[int, int]] = field(default_factory=dict)
    tentative_buffer: dict[int, dict[int, int]] = field(default_factory=dict)
    committed_txns: set[int] = field(default_factory=set)
    aborted_txns: set[int] = field(default_factory=set)

    def stage(self, txn_id: int, writes: dict[int, int]) -> None:
        self.tentative_buffer[txn_id] = dict(writes)

    def read(self) -> dict[int, tuple[int, int]]:
        """Observer view: committed fields only, as field -> (value, writer txn)."""
        return dict(self.committed)


def commit_visibility(store: VisibleStore, txn_id: int) -> VisibleStore:
    if txn_id in store.committed_txns:
        return store
    if txn_id in store.aborted_txns or txn_id not in store.tentative_buffer:
        raise TxnFault(f"commit of unknown or aborted txn {txn_id}")
    for fid, value in store.tentative_buffer.pop(txn_id).items():
        store.committed[fid] = (value, txn_id)
    store.committed_txns.add(txn_id)
    return store


def abort_rollback(store: VisibleStore, txn_id: int) -> VisibleStore:
    if txn_id in store.committed_txns:
        raise TxnFault(f"txn {txn_id} is committed and must not be revoked")
    store.tentative_buffer.pop(txn_id, None)
    store.aborted_txns.add(txn_id)
    return store


# ---------------------------------------------------------------------------
# lifecycle operations on one endpoint


class Rejected(Exception):
    def __init__(self, record: dict):
        super().__init__(record["reason"])
        self.record = record


def initiate(fsm: EndpointFsm, txn: Transaction, store: VisibleStore, now: int,
             timeout: int) -> tuple[EndpointFsm, Frame, dict]:
    res = link_fsm.step(fsm, LinkEvent(EventKind.INITIATE, fsm.endpoint, now, txn.txn_id, now + timeout))
    if res.record["kind"] != "transition":
        raise Rejected(res.record)
    store.stage(txn.txn_id, txn.writes)
    frame = Frame(FrameKind.TENTATIVE, txn.txn_id, txn.payload, (txn.initiator, txn.counter),
                  txn.schema_version, now)
    return res.fsm, frame, res.record


@dataclass(frozen=True)
class ReflectOutcome:
    fsm: EndpointFsm
    records: tuple[dict, ...]
    reply: Frame | None  # Reflection on success, AbortNotify on integrity failure
    interpreted: dict[int, int] | None = None
    digest: int | None = None


def reflect(fsm: EndpointFsm, frame: Frame, intact: bool, store: VisibleStore, version: int,
            now: int, timeout: int) -> ReflectOutcome:
    """Receiver side: stage the payload provisionally and reflect its interpreted digest.

    Never touches the committed part of ``store``.
    """
    if frame.kind is not FrameKind.TENTATIVE:
        raise ValueError("reflect takes a Tentative frame")
    ev = LinkEvent(EventKind.DATA_ARRIVED, fsm.endpoint, now, frame.txn_id, now + timeout)
    res = link_fsm.step(fsm, ev)
    records = [res.record]
    if res.record["kind"] != "transition":
        return ReflectOutcome(fsm, tuple(records), None)
    fsm = res.fsm
    if not intact:
        res = link_fsm.step(fsm, LinkEvent(EventKind.VALIDATION_FAIL, fsm.endpoint, now, frame.txn_id,
                                           reason="integrity check failed"))
        records.append(res.record)
        abort_rollback(store, frame.txn_id)
        notify = Frame(FrameKind.ABORT_NOTIFY, frame.txn_id, bytes(8), frame.tiebreak, version, now)
        return ReflectOutcome(res.fsm, tuple(records), notify)
    fields = interpret(frame.body, version)
    store.stage(frame.txn_id, fields)
    d = digest(frame.txn_id, version, fields)
    res = link_fsm.step(fsm, LinkEvent(EventKind.VALIDATION_OK, fsm.endpoint, now, frame.txn_id))
    records.append(res.record)
    reply = digest_frame(FrameKind.REFLECTION, frame.txn_id, d, frame.tiebreak, version, now)
    return ReflectOutcome(res.fsm, tuple(records), reply, fields, d)


@dataclass(frozen=True)
class Verdict:
    commit: bool
    reason: str = ""


def validate_reflection(txn: Transaction | None, f: Frame) -> Verdict:
    if txn is None:
        raise StrayFrame(f"reflection for unknown txn {f.txn_id}")
    if f.kind is not FrameKind.REFLECTION:
        raise ValueError("validate_reflection takes a Reflection frame")
    if txn.txn_id != f.txn_id:
        raise StrayFrame(f"reflection for txn {f.txn_id} checked against txn {txn.txn_id}")
    if f.digest == txn.digest:
        return Verdict(True)
    return Verdict(False, "semantic-divergence")


def quiesce(fsm: EndpointFsm, now: int) -> link_fsm.StepResult:
    return link_fsm.step(fsm, LinkEvent(EventKind.QUIESCE, fsm.endpoint, now))


# ---------------------------------------------------------------------------
# hyperdata


@dataclass
class HyperdataLoop:
    """Opaque token bouncing on the link while circulation is active.

    Active when idle circulation is enabled and both ends are IDLE, or
    while crossed initiations are unresolved. Frames from here go only to
    the wire channel of the trace, never to a store or an observer.
    """

    idle_circulation: bool = False
    origin: str = "A"
    indefinite: bool = False
    both_idle: bool = False
    _n: int = 0

    @property
    def active(self) -> bool:
        return self.indefinite or (self.idle_circulation and self.both_idle)

    def direction(self) -> str:
        other = "B" if self.origin == "A" else "A"
        return self.origin if self._n % 2 == 0 else other


def circulate_hyperdata(link: HyperdataLoop, tick: int) -> Frame | None:
    if not link.active:
        return None
    src = link.direction()
    link._n += 1
    token = fnv1a64(tick.to_bytes(8, "big") + src.encode())
    return Frame(FrameKind.HYPERDATA, 0, token.to_bytes(8, "big"), (src, link._n), 0, tick)

