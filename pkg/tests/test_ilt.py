import pytest
from hypothesis import given, strategies as st

from oaelink.ilt import (
    U64_MAX,
    CausalIndex,
    CausalRelation as R,
    ClockOverflow,
    TensorClock,
    UnknownEvent,
    bitstring,
    decode,
    encode,
    from_bitstring,
    relate,
    tc_init,
    tc_on_initiate,
    tc_on_round_complete,
)
from oaelink.netsim import Simulator

from conftest import scenario


@pytest.mark.parametrize("rel,code", [(R.BEFORE, 0b01), (R.AFTER, 0b10), (R.CONCURRENT, 0b00), (R.INDEFINITE, 0b11)])
def test_encoding_table(rel, code):
    assert encode(rel) == code
    assert decode(code) is rel
    assert from_bitstring(bitstring(rel)) is rel


def test_indefinite_is_cell_11():
    assert bitstring(R.INDEFINITE) == "11"


@pytest.mark.parametrize("bad", [4, -1, "01"])
def test_decode_rejects_non_codes(bad):
    with pytest.raises(ValueError):
        decode(bad)


def test_bijection():
    assert {decode(encode(r)) for r in R} == set(R)
    assert sorted(encode(decode(b)) for b in range(4)) == [0, 1, 2, 3]


def test_flipped():
    assert R.BEFORE.flipped() is R.AFTER and R.AFTER.flipped() is R.BEFORE
    assert R.INDEFINITE.flipped() is R.INDEFINITE and R.CONCURRENT.flipped() is R.CONCURRENT


def test_tensor_clock_examples():
    assert tc_init().as_tuple() == (0, 0, 0)
    assert tc_on_initiate(tc_init(), "A").as_tuple() == (1, 0, 0)
    assert tc_on_initiate(TensorClock(3, 5, 2), "B").as_tuple() == (3, 6, 2)
    assert tc_on_initiate(TensorClock(1, 0, 0), "A").as_tuple() == (2, 0, 0)
    assert tc_on_round_complete(TensorClock(1, 0, 0)).as_tuple() == (1, 0, 1)
    assert tc_on_round_complete(TensorClock(2, 3, 4)).as_tuple() == (2, 3, 5)


def test_tensor_clock_overflow_is_a_fault():
    with pytest.raises(ClockOverflow):
        tc_on_initiate(TensorClock(U64_MAX, 0, 0), "A")
    with pytest.raises(ClockOverflow):
        tc_on_round_complete(TensorClock(0, 0, U64_MAX))
    with pytest.raises(ValueError):
        tc_on_initiate(tc_init(), "C")


def test_one_commit_round_from_fresh_link():
    tr = Simulator(scenario([(1, {1: 1})])).run()
    last = [r for r in tr.channel("auditor") if r.body["op"] == "tc"][-1]
    assert (last.body["c_a"], last.body["c_b"], last.body["d"]) == (1, 0, 1)


@given(st.lists(st.sampled_from(["A", "B", "d"]), max_size=40))
def test_clock_monotone_componentwise(ops):
    tc = tc_init()
    for op in ops:
        nxt = tc_on_round_complete(tc) if op == "d" else tc_on_initiate(tc, op)
        assert tc <= nxt and tc != nxt
        tc = nxt


# -- relations over simulated traces --------------------------------------


def crossed_trace():
    return Simulator(scenario([(2, {1: 10})], [(2, {1: 20})], params=None)).run()


def test_crossed_initiations_indefinite_then_resolved():
    tr = crossed_trace()
    idx = CausalIndex(tr)
    a, b = "A:1:IDLE>TENTATIVE#0", "B:2:IDLE>TENTATIVE#0"
    assert idx.crossed_pairs
    commit = min(e.tick for e in idx.events if e.to_state == "COMMITTED")
    assert idx.relate(a, b, at_tick=commit - 1) is R.INDEFINITE
    assert idx.relate(a, b, at_tick=commit) is R.BEFORE
    assert idx.relate(b, a, at_tick=commit) is R.AFTER


def test_send_precedes_commit_of_same_txn():
    tr = Simulator(scenario([(1, {1: 5})])).run()
    assert relate("A:1:IDLE>TENTATIVE#0", "B:1:REFLECTING>COMMITTED#0", tr) is R.BEFORE
    assert relate("B:1:TENTATIVE>REFLECTING#0", "A:1:IDLE>TENTATIVE#0", tr) is R.AFTER


def test_independent_endpoints_are_concurrent():
    tr = Simulator(scenario()).run()
    assert relate("A:None:RESET>IDLE#0", "B:None:RESET>IDLE#0", tr) is R.CONCURRENT


def test_relate_errors():
    tr = Simulator(scenario([(1, {1: 5})])).run()
    idx = CausalIndex(tr)
    with pytest.raises(ValueError):
        idx.relate(0, 0)
    with pytest.raises(UnknownEvent):
        idx.relate("A:9:IDLE>TENTATIVE#0", 0)
    with pytest.raises(UnknownEvent):
        idx.relate("A:1:IDLE>TENTATIVE#0", "B:1:REFLECTING>COMMITTED#0", at_tick=0)


def test_committed_txn_initiation_and_reflection_never_indefinite():
    tr = crossed_trace()
    idx = CausalIndex(tr)
    end = tr.end_tick
    for e in idx.events:
        if e.to_state == "COMMITTED":
            init = next(x for x in idx.events if x.txn == e.txn and x.event == "Initiate")
            refl = next(x for x in idx.events if x.txn == e.txn and x.to_state == "REFLECTING")
            assert idx.relate(init.index, refl.index, end).definite
