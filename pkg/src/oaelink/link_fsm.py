"""Six-state link state machine.

``step`` is a pure function from (endpoint state, event) to (new state,
actions, trace record). The only state changes it can produce are the
eight edges in ``TRANSITIONS``; anything else is recorded as ignored or
rejected with a reason and leaves the state untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple


class LinkState(enum.Enum):
    RESET = "RESET"
    IDLE = "IDLE"
    TENTATIVE = "TENTATIVE"
    REFLECTING = "REFLECTING"
    COMMITTED = "COMMITTED"
    ABORTED = "ABORTED"


S = LinkState

TRANSITIONS: dict[LinkState, frozenset[LinkState]] = {
    S.RESET: frozenset({S.IDLE}),
    S.IDLE: frozenset({S.TENTATIVE}),
    S.TENTATIVE: frozenset({S.REFLECTING, S.ABORTED}),
    S.REFLECTING: frozenset({S.COMMITTED, S.ABORTED}),
    S.COMMITTED: frozenset({S.IDLE}),
    S.ABORTED: frozenset({S.IDLE}),
}

OUTSTANDING = frozenset({S.TENTATIVE, S.REFLECTING})


def valid_transitions(s: LinkState) -> frozenset[LinkState]:
    return TRANSITIONS[s]


class EventKind(enum.Enum):
    LINK_UP = "LinkUp"
    INITIATE = "Initiate"
    DATA_ARRIVED = "DataArrived"
    REFLECTION_ARRIVED = "ReflectionArrived"
    VALIDATION_OK = "ValidationOk"
    VALIDATION_FAIL = "ValidationFail"
    TIMEOUT = "Timeout"
    PEER_ABORT = "PeerAbort"
    COMMIT_ACK = "CommitAck"
    QUIESCE = "Quiesce"


E = EventKind
_NEEDS_TXN = frozenset({E.INITIATE, E.DATA_ARRIVED, E.REFLECTION_ARRIVED, E.COMMIT_ACK})


@dataclass(frozen=True)
class LinkEvent:
    kind: EventKind
    endpoint: str
    tick: int
    txn: int | None = None
    deadline: int | None = None  # timer armed when the event opens a transaction
    reason: str = ""


class Action(NamedTuple):
    kind: str  # emit | stage | discard | expose | validate
    frame: str | None = None


@dataclass(frozen=True)
class EndpointFsm:
    endpoint: str
    state: LinkState = S.RESET
    current_txn: int | None = None
    timeout_deadline: int | None = None
    role: str | None = None  # "initiator" | "responder" while a txn is outstanding
    validated: bool = False
    concluded_txn: int | None = None  # set in COMMITTED / ABORTED


class StepResult(NamedTuple):
    fsm: EndpointFsm
    actions: tuple[Action, ...]
    record: dict


def _record(kind: str, old: LinkState, ev: LinkEvent, new: LinkState, reason: str = "") -> dict:
    return {"kind": kind, "from": old.value, "event": ev.kind.value, "to": new.value, "reason": reason}


def _ignore(fsm: EndpointFsm, ev: LinkEvent, reason: str) -> StepResult:
    return StepResult(fsm, (), _record("ignored", fsm.state, ev, fsm.state, reason))


def _move(fsm: EndpointFsm, ev: LinkEvent, new: EndpointFsm, actions=(), reason: str = "") -> StepResult:
    assert new.state in TRANSITIONS[fsm.state], (fsm.state, new.state)
    return StepResult(new, tuple(actions), _record("transition", fsm.state, ev, new.state, reason or ev.reason))


def _abort(fsm: EndpointFsm, ev: LinkEvent, notify: bool, reason: str) -> StepResult:
    new = replace(
        fsm, state=S.ABORTED, current_txn=None, timeout_deadline=None,
        role=None, validated=False, concluded_txn=fsm.current_txn,
    )
    actions = [Action("discard")]
    if notify:
        actions.append(Action("emit", "AbortNotify"))
    return _move(fsm, ev, new, actions, reason)


def step(fsm: EndpointFsm, ev: LinkEvent) -> StepResult:
    if ev.endpoint != fsm.endpoint:
        return StepResult(fsm, (), _record("rejected", fsm.state, ev, fsm.state, "event for other endpoint"))
    if ev.kind in _NEEDS_TXN and ev.txn is None:
        return StepResult(fsm, (), _record("rejected", fsm.state, ev, fsm.state, "event carries no txn id"))

    st, k = fsm.state, ev.kind

    if k is E.INITIATE and st is not S.IDLE:
        return StepResult(fsm, (), _record("rejected", st, ev, st, "initiate requires IDLE"))

    if st is S.RESET:
        if k is E.LINK_UP:
            return _move(fsm, ev, replace(fsm, state=S.IDLE))
        return _ignore(fsm, ev, "link not up")

    if st is S.IDLE:
        if k is E.INITIATE:
            new = replace(fsm, state=S.TENTATIVE, current_txn=ev.txn, timeout_deadline=ev.deadline,
                          role="initiator", validated=False, concluded_txn=None)
            return _move(fsm, ev, new, [Action("stage"), Action("emit", "Tentative")])
        if k is E.DATA_ARRIVED:
            new = replace(fsm, state=S.TENTATIVE, current_txn=ev.txn, timeout_deadline=ev.deadline,
                          role="responder", validated=False, concluded_txn=None)
            return _move(fsm, ev, new, [Action("stage")])
        return _ignore(fsm, ev, {
            E.REFLECTION_ARRIVED: "stray reflection",
            E.COMMIT_ACK: "stray commit-ack",
            E.LINK_UP: "link already up",
            E.QUIESCE: "already quiescent",
        }.get(k, "no outstanding transaction"))

    if st in OUTSTANDING:
        if k is E.TIMEOUT:
            return _abort(fsm, ev, notify=True, reason=ev.reason or "timeout")
        if k is E.VALIDATION_FAIL:
            return _abort(fsm, ev, notify=True, reason=ev.reason or "validation failed")
        if k is E.PEER_ABORT:
            if ev.txn is not None and ev.txn != fsm.current_txn:
                return _ignore(fsm, ev, "abort for another transaction")
            return _abort(fsm, ev, notify=False, reason=ev.reason or "peer abort")
        if k is E.DATA_ARRIVED:
            if ev.txn == fsm.current_txn:
                return _ignore(fsm, ev, "duplicate data")
            return _ignore(fsm, ev, "busy: crossed initiation handled by tie-break")
        if k is E.QUIESCE:
            return _ignore(fsm, ev, "transaction outstanding")
        if k is E.LINK_UP:
            return _ignore(fsm, ev, "link already up")

    if st is S.TENTATIVE:
        if fsm.role == "initiator":
            if k is E.REFLECTION_ARRIVED:
                if ev.txn != fsm.current_txn:
                    return _ignore(fsm, ev, "stray reflection")
                return _move(fsm, ev, replace(fsm, state=S.REFLECTING), [Action("validate")])
            return _ignore(fsm, ev, "reflection required")
        # responder: payload passed the integrity check, reflect its digest
        if k is E.VALIDATION_OK:
            new = replace(fsm, state=S.REFLECTING, validated=True)
            return _move(fsm, ev, new, [Action("emit", "Reflection")])
        if k is E.REFLECTION_ARRIVED:
            return _ignore(fsm, ev, "stray reflection")
        return _ignore(fsm, ev, "reflection required")

    if st is S.REFLECTING:
        if k is E.VALIDATION_OK:
            if fsm.validated:
                return _ignore(fsm, ev, "already validated")
            # initiator latches its decision; commitment waits for CommitAck
            new = replace(fsm, validated=True)
            return StepResult(new, (Action("emit", "CommitAck"),), _record("latched", st, ev, st, "decision: commit"))
        if k is E.COMMIT_ACK:
            if ev.txn != fsm.current_txn:
                return _ignore(fsm, ev, "commit-ack for another transaction")
            if not fsm.validated:
                return _ignore(fsm, ev, "validation required")
            new = replace(fsm, state=S.COMMITTED, current_txn=None, timeout_deadline=None,
                          role=None, validated=False, concluded_txn=fsm.current_txn)
            return _move(fsm, ev, new, [Action("expose")])
        if k is E.REFLECTION_ARRIVED:
            return _ignore(fsm, ev, "duplicate reflection")
        return _ignore(fsm, ev, "awaiting commit-ack")

    # COMMITTED / ABORTED
    if k is E.QUIESCE:
        return _move(fsm, ev, replace(fsm, state=S.IDLE, concluded_txn=None))
    if st is S.COMMITTED and k is E.PEER_ABORT:
        return _ignore(fsm, ev, "committed state must not be revoked")
    return _ignore(fsm, ev, "transaction concluded; awaiting quiescence")


def on_timeout(fsm: EndpointFsm, now: int) -> StepResult:
    ev = LinkEvent(E.TIMEOUT, fsm.endpoint, now, txn=fsm.current_txn)
    if fsm.timeout_deadline is None or fsm.timeout_deadline > now or fsm.state not in OUTSTANDING:
        return StepResult(fsm, (), _record("ignored", fsm.state, ev, fsm.state, "no expired deadline"))
    return step(fsm, ev)
