import pytest

from oaelink import consensus as cs
from oaelink.consensus import CommitContext, ConsensusScenario, DecisionRegister, ProtocolFault, cas


def test_cas_examples():
    reg = DecisionRegister()
    assert cas(reg, None, 5, CommitContext(1, 1)) == (True, 5)
    assert cas(reg, None, 7, CommitContext(2, 2)) == (False, 5)
    assert reg.value == 5 and reg.deciding_txn == 1


def test_cas_outside_commit_is_a_fault():
    with pytest.raises(ProtocolFault):
        cas(DecisionRegister(), None, 5)


def test_concurrent_cas_exactly_one_wins():
    scn = ConsensusScenario(2, (10, 20), schedule=(("initiate", 0), ("initiate", 1), ("host_reflect", 0),
                                                    ("host_reflect", 1), ("commit", 1), ("commit", 0),
                                                    ("decide", 0), ("decide", 1)))
    out = cs.run(scn)
    assert out.decisions == {0: 20, 1: 20} and out.register == 20
    assert out.problems(scn) == []


def test_schedule_must_be_enabled():
    with pytest.raises(ProtocolFault):
        cs.run(ConsensusScenario(1, (3,), schedule=(("commit", 0),)))


def test_single_process_decides_its_own_value():
    assert cs.propose(0, 7, ConsensusScenario(1, (0,))) == 7


def test_crashed_process_decides_nothing():
    scn = ConsensusScenario(2, (1, 2), frozenset({0}), schedule=(("initiate", 0), ("host_reflect", 0), ("crash", 0), ("host_timeout", 0),
                                                                  ("initiate", 1), ("host_reflect", 1),
                                                                  ("commit", 1), ("decide", 1)))
    out = cs.run(scn)
    assert out.decisions == {1: 2} and out.problems(scn) == []


@pytest.mark.parametrize("bad", [dict(n=0, proposals=()), dict(n=2, proposals=(1,)),
                                 dict(n=2, proposals=(1, 2), crash_set=frozenset({5}))])
def test_scenario_validation(bad):
    with pytest.raises(ValueError):
        ConsensusScenario(**bad)


@pytest.mark.parametrize("crash", list(cs.crash_configs(2, 2)))
def test_exhaustive_two_processes(crash):
    res = cs.explore(ConsensusScenario(2, (4, 9), crash))
    assert res.ok and res.max_steps <= cs.STEP_BOUND
    assert res.decided_values <= {4, 9}


def test_problems_detects_disagreement():
    out = cs.Outcome({0: 1, 1: 2}, {0: 4, 1: 3}, frozenset(), 1)
    probs = out.problems(ConsensusScenario(2, (1, 3)))
    assert {p.split(":")[0] for p in probs} == {"agreement", "validity", "steps"}


def test_random_sweep_small():
    res = cs.random_sweep(4, (1, 2, 3, 4), seeds=200)
    assert res.runs == 200 and res.problems == [] and res.max_steps <= cs.STEP_BOUND
