"""n-process consensus from link transactions and compare-and-swap.

Each process owns one OAE link to a register host. Proposing is one link
transaction carrying ``cas(expected=empty, new=v)``; the CAS executes at
the round-completion step of that transaction, which is also where a
simulator-local sequencer hands out the next sequence number (the
stand-in for a global ordering service). The process then decides the
value the CAS witnessed.

Process steps are ``initiate``, ``commit`` and ``decide``; the host's
``reflect`` and ``timeout`` steps are not charged to any process. A
crashed process stops taking steps; if it crashed with a transaction
open, the host may time that transaction out to quiescence, and nothing
any other process does ever waits on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

from .link_fsm import EndpointFsm, EventKind, LinkEvent, LinkState, OUTSTANDING, step
from .rng import SplitMix64

PROC_STEPS = ("initiate", "commit", "decide")
STEP_BOUND = len(PROC_STEPS)


class ProtocolFault(Exception):
    pass


@dataclass
class DecisionRegister:
    value: int | None = None
    deciding_txn: int | None = None


@dataclass(frozen=True)
class CommitContext:
    """Proof that the caller is inside a committed, sequenced link transaction."""

    txn: int
    seq: int


def cas(reg: DecisionRegister, expected: int | None, new: int,
        ctx: CommitContext | None = None) -> tuple[bool, int | None]:
    """Atomic compare-and-swap; returns (success, value current afterwards)."""
    if not isinstance(ctx, CommitContext):
        raise ProtocolFault("cas issued outside a committed transaction")
    if reg.value != expected:
        return False, reg.value
    if reg.value is not None and reg.value != new:  # pragma: no cover - unreachable with expected=current
        raise ProtocolFault("decision register is immutable once set")
    reg.value, reg.deciding_txn = new, ctx.txn
    return True, new


# ---------------------------------------------------------------------------
# system state


class Proc(NamedTuple):
    phase: str  # start | sent | committed | decided | crashed
    steps: int
    local: EndpointFsm  # process end of its link
    host: EndpointFsm  # host end of the same link
    witnessed: int | None


class State(NamedTuple):
    procs: tuple[Proc, ...]
    register: tuple[int | None, int | None]  # (value, deciding txn)
    seq: int


Action = tuple[str, int]  # (kind, process index)


def _up(ep: str) -> EndpointFsm:
    return step(EndpointFsm(ep), LinkEvent(EventKind.LINK_UP, ep, 0)).fsm


def _must(fsm: EndpointFsm, kind: EventKind, txn: int | None = None, reason: str = "") -> EndpointFsm:
    res = step(fsm, LinkEvent(kind, fsm.endpoint, 0, txn, reason=reason))
    if res.record["kind"] not in ("transition", "latched"):
        raise ProtocolFault(f"{fsm.state.value} rejected {kind.value}: {res.record['reason']}")
    return res.fsm


@dataclass(frozen=True)
class ConsensusScenario:
    n: int
    proposals: tuple[int, ...]
    crash_set: frozenset[int] = frozenset()
    schedule: int | tuple[Action, ...] | None = None  # seed or explicit interleaving

    def __post_init__(self):
        errs = []
        if self.n < 1:
            errs.append("n must be >= 1")
        if len(self.proposals) != self.n:
            errs.append(f"need one proposal per process, got {len(self.proposals)} for n={self.n}")
        bad = [c for c in self.crash_set if not 0 <= c < self.n]
        if bad:
            errs.append(f"crash ids out of range: {sorted(bad)}")
        if errs:
            raise ValueError("; ".join(errs))


class System:
    """Transition system for one scenario: ``enabled`` and ``apply`` on immutable states."""

    def __init__(self, scn: ConsensusScenario):
        self.scn = scn

    def initial(self) -> State:
        procs = tuple(Proc("start", 0, _up("A"), _up("B"), None) for _ in range(self.scn.n))
        return State(procs, (None, None), 0)

    def enabled(self, s: State) -> list[Action]:
        out: list[Action] = []
        for i, p in enumerate(s.procs):
            crashable = i in self.scn.crash_set
            if p.phase == "crashed":
                if p.host.state in OUTSTANDING:
                    out.append(("host_timeout", i))
                continue
            if p.phase == "start":
                out.append(("initiate", i))
            elif p.phase == "sent":
                if p.host.state is LinkState.IDLE:
                    out.append(("host_reflect", i))
                elif p.host.state is LinkState.REFLECTING:
                    out.append(("commit", i))
            elif p.phase == "committed" and not crashable:
                out.append(("decide", i))
            if crashable and p.phase != "decided":
                out.append(("crash", i))
        return out

    def apply(self, s: State, a: Action) -> State:
        kind, i = a
        p = s.procs[i]
        txn = i + 1
        reg, seq = s.register, s.seq
        if kind == "initiate":
            p = p._replace(phase="sent", steps=p.steps + 1, local=_must(p.local, EventKind.INITIATE, txn))
        elif kind == "host_reflect":
            h = _must(p.host, EventKind.DATA_ARRIVED, txn)
            p = p._replace(host=_must(h, EventKind.VALIDATION_OK, txn))
        elif kind == "commit":
            local = _must(p.local, EventKind.REFLECTION_ARRIVED, txn)
            local = _must(local, EventKind.VALIDATION_OK, txn)
            local = _must(local, EventKind.COMMIT_ACK, txn)
            host = _must(p.host, EventKind.COMMIT_ACK, txn)
            seq += 1
            r = DecisionRegister(*reg)
            _ok, witnessed = cas(r, None, self.scn.proposals[i], CommitContext(txn, seq))
            if reg[0] is not None and (r.value, r.deciding_txn) != reg:
                raise ProtocolFault("decision register changed after being set")
            reg = (r.value, r.deciding_txn)
            p = p._replace(phase="committed", steps=p.steps + 1, witnessed=witnessed,
                           local=_must(local, EventKind.QUIESCE), host=_must(host, EventKind.QUIESCE))
        elif kind == "decide":
            p = p._replace(phase="decided", steps=p.steps + 1)
        elif kind == "crash":
            p = p._replace(phase="crashed")
        elif kind == "host_timeout":
            h = _must(p.host, EventKind.TIMEOUT, reason="process crashed")
            p = p._replace(host=_must(h, EventKind.QUIESCE))
        else:
            raise ValueError(f"unknown action {kind!r}")
        procs = s.procs[:i] + (p,) + s.procs[i + 1:]
        return State(procs, reg, seq)


# ---------------------------------------------------------------------------
# outcomes


@dataclass
class Outcome:
    decisions: dict[int, int]
    steps: dict[int, int]
    crashed: frozenset[int]
    register: int | None
    schedule: list[Action] = field(default_factory=list)

    def problems(self, scn: ConsensusScenario) -> list[str]:
        out = []
        vals = set(self.decisions.values())
        if len(vals) > 1:
            out.append(f"agreement: decisions {self.decisions}")
        if vals - set(scn.proposals):
            out.append(f"validity: decided {sorted(vals)} not among proposals")
        live = set(range(scn.n)) - self.crashed
        if live - set(self.decisions):
            out.append(f"termination: live processes {sorted(live - set(self.decisions))} undecided")
        if any(v > STEP_BOUND for v in self.steps.values()):
            out.append(f"steps: {self.steps} exceed bound {STEP_BOUND}")
        return out


def _outcome(s: State, schedule: list[Action] | None = None) -> Outcome:
    return Outcome(
        decisions={i: p.witnessed for i, p in enumerate(s.procs) if p.phase == "decided"},
        steps={i: p.steps for i, p in enumerate(s.procs)},
        crashed=frozenset(i for i, p in enumerate(s.procs) if p.phase == "crashed"),
        register=s.register[0],
        schedule=list(schedule or []),
    )


def run(scn: ConsensusScenario) -> Outcome:
    """Run one schedule: an explicit action list, or a seeded random choice at each step."""
    sysm = System(scn)
    s = sysm.initial()
    taken: list[Action] = []
    explicit = list(scn.schedule) if isinstance(scn.schedule, tuple) else None
    rng = SplitMix64(scn.schedule if isinstance(scn.schedule, int) else 0)
    while True:
        en = sysm.enabled(s)
        if not en:
            break
        if explicit is not None:
            if not explicit:
                break
            a = explicit.pop(0)
            if a not in en:
                raise ProtocolFault(f"action {a} not enabled; enabled: {en}")
        else:
            a = en[rng.below(len(en))]
        s = sysm.apply(s, a)
        taken.append(a)
    return _outcome(s, taken)


def propose(process: int, v: int, scn: ConsensusScenario) -> int | None:
    """Decision reached by ``process`` after proposing ``v``; None if it crashed."""
    props = list(scn.proposals)
    props[process] = v
    out = run(replace(scn, proposals=tuple(props)))
    return out.decisions.get(process)


@dataclass
class ExploreResult:
    states: int = 0
    terminals: int = 0
    interleavings: int = 0  # maximal schedules, counted through the state DAG
    max_steps: int = 0
    decided_values: set[int] = field(default_factory=set)
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def explore(scn: ConsensusScenario, depth: int = 64) -> ExploreResult:
    """Every interleaving of ``scn`` (including every crash point), depth-bounded."""
    sysm = System(scn)
    res = ExploreResult()
    paths: dict[State, int] = {}

    def visit(s: State, d: int) -> int:
        if s in paths:
            return paths[s]
        if d > depth:
            raise RecursionError(f"schedule deeper than bound {depth}")
        res.states += 1
        en = sysm.enabled(s)
        if not en:
            res.terminals += 1
            o = _outcome(s)
            res.max_steps = max(res.max_steps, max(o.steps.values()))
            res.decided_values |= set(o.decisions.values())
            res.problems += o.problems(scn)
            n = 1
        else:
            n = sum(visit(sysm.apply(s, a), d + 1) for a in en)
        paths[s] = n
        return n

    res.interleavings = visit(sysm.initial(), 0)
    return res


def crash_configs(n: int, max_crashes: int) -> Iterable[frozenset[int]]:
    from itertools import combinations

    for k in range(max_crashes + 1):
        for c in combinations(range(n), k):
            yield frozenset(c)


@dataclass
class SweepResult:
    runs: int = 0
    max_steps: int = 0
    problems: list[str] = field(default_factory=list)


def random_sweep(n: int, proposals: tuple[int, ...], seeds: int, max_crashes: int = 2,
                 base_seed: int = 0) -> SweepResult:
    """Random schedules with a seed-chosen crash set of size 0..max_crashes."""
    out = SweepResult()
    for s in range(base_seed, base_seed + seeds):
        rng = SplitMix64(s).split("crashes")
        k = rng.below(max_crashes + 1)
        crash: set[int] = set()
        while len(crash) < k:
            crash.add(rng.below(n))
        scn = ConsensusScenario(n, proposals, frozenset(crash), schedule=s)
        o = run(scn)
        out.runs += 1
        out.max_steps = max(out.max_steps, max(o.steps.values()))
        out.problems += [f"seed {s}: {p}" for p in o.problems(scn)]
    return out
