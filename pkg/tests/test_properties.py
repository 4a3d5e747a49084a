from hypothesis import given, strategies as st

from conftest import clean_params, scenario
from oaelink import analysis
from oaelink.netsim import LinkParams, pif_condition, run

writes = st.dictionaries(st.integers(0, 7), st.integers(-5, 5), min_size=1, max_size=3)
script = st.lists(st.tuples(st.integers(0, 60), st.one_of(st.none(), writes)), max_size=6)
prob = st.sampled_from([0.0, 0.01, 0.1, 0.3])
params = st.builds(LinkParams, one_way_delay=st.integers(1, 6), frame_tx_time=st.integers(1, 4),
                   loss_prob=prob, dup_prob=prob, reorder_prob=prob, corrupt_prob=prob)
scenarios = st.builds(lambda a, b, p, v: scenario(a, b, params=p, horizon=120, versions=v),
                      script, script, params, st.sampled_from([(1, 1), (1, 2), (2, 2)]))


@given(scenarios, st.integers(0, 2**32))
def test_oae_never_violates_an_invariant(scn, seed):
    tr = run(scn, seed)
    rep = analysis.check_invariants(tr)
    assert rep.clean, rep.violations[:3]
    audit = analysis.kbp_audit(tr)
    assert audit.balance_violations == 0 and audit.ineligible == []
    assert analysis.resolution_audit(tr, "commits").problems == []


@given(scenarios, st.integers(0, 2**32), st.sampled_from(["oae", "fito"]))
def test_runs_are_deterministic_and_conserve_frames(scn, seed, mode):
    tr = run(scn, seed, mode)
    assert tr.dumps() == run(scn, seed, mode).dumps()
    sent, accounted = analysis.frame_conservation(tr)
    assert sent == accounted


@given(scenarios, st.integers(0, 2**32))
def test_tensor_clock_is_monotone_and_bounded(scn, seed):
    prev = (0, 0, 0)
    for r in run(scn, seed).channel("auditor"):
        if r.body.get("op") != "tc":
            continue
        cur = (r.body["c_a"], r.body["c_b"], r.body["d"])
        assert all(x <= y for x, y in zip(prev, cur))
        assert cur[2] <= cur[0] + cur[1]
        prev = cur


@given(st.integers(1, 12), st.integers(1, 30))
def test_commit_before_transmission_ends_iff_pif(d, tx):
    p = clean_params(one_way_delay=d, frame_tx_time=tx)
    tr = run(scenario([(1, {1: 1})], params=p, horizon=200))
    (_, commit, done), = analysis.pif_ticks(tr)
    assert (commit <= done) == pif_condition(p)
