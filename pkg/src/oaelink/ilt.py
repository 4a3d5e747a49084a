"""Four-valued causal relations and per-link tensor clocks.

``CausalRelation`` adds ``INDEFINITE`` (order not yet created) to the usual
before / after / concurrent trichotomy. Relations between trace events are
computed by :class:`CausalIndex`, which replays a trace once to build
happened-before clocks and the set of crossed initiations, then answers
``relate`` queries as of any tick.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

from .trace import Record, Trace

U64_MAX = (1 << 64) - 1


class CausalRelation(enum.Enum):
    BEFORE = "before"  # a precedes b
    AFTER = "after"  # b precedes a
    CONCURRENT = "concurrent"
    INDEFINITE = "indefinite"

    @property
    def definite(self) -> bool:
        return self is not CausalRelation.INDEFINITE

    def flipped(self) -> "CausalRelation":
        if self is CausalRelation.BEFORE:
            return CausalRelation.AFTER
        if self is CausalRelation.AFTER:
            return CausalRelation.BEFORE
        return self


_TO_BITS = {
    CausalRelation.BEFORE: 0b01,
    CausalRelation.AFTER: 0b10,
    CausalRelation.CONCURRENT: 0b00,
    CausalRelation.INDEFINITE: 0b11,
}
_FROM_BITS = {v: k for k, v in _TO_BITS.items()}


def encode(rel: CausalRelation) -> int:
    return _TO_BITS[rel]


def decode(bits: int) -> CausalRelation:
    if bits not in _FROM_BITS:
        raise ValueError(f"relation code must be 2 bits, got {bits!r}")
    return _FROM_BITS[bits]


def bitstring(rel: CausalRelation) -> str:
    """Trace form of the 2-bit code, e.g. ``"11"`` for indefinite."""
    return format(encode(rel), "02b")


def from_bitstring(s: str) -> CausalRelation:
    if len(s) != 2 or set(s) - {"0", "1"}:
        raise ValueError(f"bad relation bitstring {s!r}")
    return decode(int(s, 2))


# ---------------------------------------------------------------------------
# tensor clocks


class ClockOverflow(OverflowError):
    """A tensor-clock counter would exceed 64 bits; the scenario ran past its horizon."""


@dataclass(frozen=True)
class TensorClock:
    c_a: int = 0
    c_b: int = 0
    d: int = 0

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.c_a, self.c_b, self.d)

    def __le__(self, other: "TensorClock") -> bool:
        return self.c_a <= other.c_a and self.c_b <= other.c_b and self.d <= other.d


def tc_init() -> TensorClock:
    return TensorClock(0, 0, 0)


def _bump(n: int) -> int:
    if n >= U64_MAX:
        raise ClockOverflow("tensor clock counter overflow")
    return n + 1


def tc_on_initiate(tc: TensorClock, side: str) -> TensorClock:
    if side == "A":
        return TensorClock(_bump(tc.c_a), tc.c_b, tc.d)
    if side == "B":
        return TensorClock(tc.c_a, _bump(tc.c_b), tc.d)
    raise ValueError(f"side must be 'A' or 'B', got {side!r}")


def tc_on_round_complete(tc: TensorClock) -> TensorClock:
    return TensorClock(tc.c_a, tc.c_b, _bump(tc.d))


# ---------------------------------------------------------------------------
# relations over a trace


class UnknownEvent(LookupError):
    pass


@dataclass(frozen=True)
class Event:
    index: int  # position among fsm transitions
    eid: str  # tick-free stable identifier
    tick: int
    endpoint: str
    txn: int | None
    from_state: str
    event: str
    to_state: str
    vc: tuple[int, int]


def _is_initiation(ev: Event) -> bool:
    return ev.event == "Initiate" and ev.to_state == "TENTATIVE"


class CausalIndex:
    """Happened-before plus indefinite-phase bookkeeping for one trace.

    Events are the fsm-channel state transitions. Definite order comes from
    a two-entry vector clock advanced by program order and merged on every
    non-hyperdata frame delivery. Two initiations at opposite endpoints
    that are concurrent under that order are *crossed*: their relation is
    indefinite until the first of the two transactions commits, at which
    point the committed transaction's initiation is ordered first.
    """

    def __init__(self, trace: Trace | Iterable[Record]):
        records = trace.records if isinstance(trace, Trace) else list(trace)
        self.events: list[Event] = []
        self._by_id: dict[str, Event] = {}
        clocks = {"A": [0, 0], "B": [0, 0]}
        slot = {"A": 0, "B": 1}
        frame_vc: dict[int, tuple[int, int]] = {}
        seen: dict[str, int] = {}
        commit_tick: dict[int, int] = {}
        self.end_tick = 0

        for rec in records:
            self.end_tick = max(self.end_tick, rec.tick)
            if rec.channel == "fsm" and rec.body.get("kind") == "transition":
                ep = rec.endpoint
                clocks[ep][slot[ep]] += 1
                base = f"{ep}:{rec.txn}:{rec.body['from']}>{rec.body['to']}"
                k = seen.get(base, 0)
                seen[base] = k + 1
                ev = Event(
                    index=len(self.events),
                    eid=f"{base}#{k}",
                    tick=rec.tick,
                    endpoint=ep,
                    txn=rec.txn,
                    from_state=rec.body["from"],
                    event=rec.body["event"],
                    to_state=rec.body["to"],
                    vc=(clocks[ep][0], clocks[ep][1]),
                )
                self.events.append(ev)
                self._by_id[ev.eid] = ev
                if ev.to_state == "COMMITTED" and ev.txn is not None:
                    commit_tick.setdefault(ev.txn, rec.tick)
            elif rec.channel == "wire" and rec.body.get("frame_kind") != "Hyperdata":
                op = rec.body.get("op")
                fid = rec.body.get("frame")
                if op == "emit":
                    c = clocks[rec.endpoint]
                    frame_vc[fid] = (c[0], c[1])
                elif op == "deliver" and fid in frame_vc:
                    c = clocks[rec.endpoint]
                    fv = frame_vc[fid]
                    c[0] = max(c[0], fv[0])
                    c[1] = max(c[1], fv[1])

        # crossed initiations and their resolution (tick, first-ordered event)
        self._crossed: dict[tuple[int, int], tuple[int | None, int | None]] = {}
        inits = [e for e in self.events if _is_initiation(e)]
        for i, a in enumerate(inits):
            for b in inits[i + 1:]:
                if a.endpoint == b.endpoint or a.txn == b.txn:
                    continue
                if self._hb(a, b) or self._hb(b, a):
                    continue
                ta, tb = commit_tick.get(a.txn), commit_tick.get(b.txn)
                if ta is None and tb is None:
                    res = (None, None)
                elif tb is None or (ta is not None and ta <= tb):
                    res = (ta, a.index)
                else:
                    res = (tb, b.index)
                self._crossed[(a.index, b.index)] = res

    @staticmethod
    def _hb(a: Event, b: Event) -> bool:
        return a.vc[0] <= b.vc[0] and a.vc[1] <= b.vc[1] and a.vc != b.vc

    def event(self, ref: int | str) -> Event:
        try:
            return self.events[ref] if isinstance(ref, int) else self._by_id[ref]
        except (IndexError, KeyError):
            raise UnknownEvent(f"no event {ref!r} in trace") from None

    @property
    def crossed_pairs(self) -> list[tuple[int, int]]:
        return sorted(self._crossed)

    def relate(self, a: int | str, b: int | str, at_tick: int | None = None) -> CausalRelation:
        ea, eb = self.event(a), self.event(b)
        if ea.index == eb.index:
            raise ValueError("an event has no causal relation with itself")
        if at_tick is not None and max(ea.tick, eb.tick) > at_tick:
            raise UnknownEvent(f"pair ({ea.eid}, {eb.eid}) not yet in trace at tick {at_tick}")
        key = (min(ea.index, eb.index), max(ea.index, eb.index))
        if key in self._crossed:
            tick, first = self._crossed[key]
            if tick is None or (at_tick is not None and at_tick < tick):
                return CausalRelation.INDEFINITE
            return CausalRelation.BEFORE if first == ea.index else CausalRelation.AFTER
        if self._hb(ea, eb):
            return CausalRelation.BEFORE
        if self._hb(eb, ea):
            return CausalRelation.AFTER
        return CausalRelation.CONCURRENT


def relate(ev_a: int | str, ev_b: int | str, trace: Trace, at_tick: int | None = None) -> CausalRelation:
    """One-off relation query; build a :class:`CausalIndex` for repeated use."""
    return CausalIndex(trace).relate(ev_a, ev_b, at_tick)
