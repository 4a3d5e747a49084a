import pytest
import yaml

from conftest import clean_params, scenario
from oaelink import analysis
from oaelink.suite import STANDARD_SUITE
from oaelink.netsim import LinkParams, Scenario, ScenarioError, Simulator, pif_condition, run


def _emits(tr, kind):
    return [r for r in tr.channel("wire") if r.body.get("op") == "emit" and r.body["frame_kind"] == kind]


def test_delay_arithmetic():
    tr = run(scenario([(1, {1: 1})], params=clean_params(one_way_delay=5)))
    tent = _emits(tr, "Tentative")[0]
    assert tent.body["start"] == 1 and tent.body["arrival"] == 6
    deliver = [r for r in tr.channel("wire") if r.body.get("op") == "deliver"][0]
    assert deliver.tick == 6 and deliver.endpoint == "B"


def test_empty_script_only_brings_the_link_up():
    tr = run(scenario(horizon=20))
    fsm = tr.channel("fsm")
    assert [(r.endpoint, r.body["from"], r.body["to"]) for r in fsm] == [("A", "RESET", "IDLE"), ("B", "RESET", "IDLE")]
    assert tr.channel("wire") == []


def test_single_commit_commits_once_at_each_end():
    tr = run(scenario([(1, {1: 42})]))
    commits = [r for r in tr.channel("fsm") if r.body.get("to") == "COMMITTED"]
    assert sorted(r.endpoint for r in commits) == ["A", "B"]
    assert commits[0].tick == commits[1].tick
    assert analysis.txn_outcomes(tr) == {1: "COMMITTED"}
    assert analysis.check_invariants(tr).clean


def test_total_loss_aborts_everything():
    tr = run(scenario([(1, {1: 1}), (3, {2: 2})], [(2, {3: 3})], params=clean_params(loss_prob=1.0), horizon=120))
    assert set(analysis.txn_outcomes(tr).values()) == {"ABORTED"}
    assert analysis.check_invariants(tr).clean


def test_multi_field_reader_sees_nothing_until_commit():
    tr = run(scenario([(1, {1: 1, 2: 2, 3: 3})], [(t, None) for t in range(12)], horizon=30))
    commit = min(r.tick for r in tr.channel("fsm") if r.body.get("to") == "COMMITTED")
    for r in tr.channel("observer"):
        snap = r.body["snapshot"]
        assert (snap == []) if r.tick < commit else len(snap) == 3


def test_crossed_initiations_resolve_to_one_winner():
    tr = run(scenario([(2, {1: 1})], [(2, {2: 2})]))
    out = analysis.txn_outcomes(tr)
    assert sorted(out.values()) == ["ABORTED", "COMMITTED"]
    assert analysis.check_invariants(tr).clean


def test_schema_skew_aborts_under_oae():
    tr = run(scenario([(1, {1: 1000})], versions=(1, 2)))
    assert analysis.txn_outcomes(tr) == {1: "ABORTED"}
    assert analysis.check_invariants(tr).clean


def test_validation_enumerates_every_bad_field():
    bad = {
        "name": "bad",
        "horizon": 10,
        "mode": "warp",
        "link": {"one_way_delay": 0, "loss_prob": 2.0, "frame_tx_time": 1.5},
        "endpoints": {"A": {"schema_version": 3, "script": [{"at": 50, "initiate": {999: 1}}]}, "C": {}},
    }
    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(bad)
    text = "\n".join(exc.value.errors)
    for needle in ("one_way_delay", "frame_tx_time", "loss_prob", "mode", "schema_version",
                   "past the horizon", "999", "C"):
        assert needle in text


def test_from_file_round_trip(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump({"name": "x", "link": {"loss_prob": 0},
                                 "endpoints": {"A": {"script": [{"at": 1, "initiate": {1: 2}}]},
                                               "B": {"reads": {"every": 2, "from": 0, "until": 6}}}}))
    scn = Scenario.from_file(p)
    assert scn.link.loss_prob == 0 and scn.link.one_way_delay == 3
    assert [e.at for e in scn.endpoints["B"].script] == [0, 2, 4]  # until is exclusive
    assert scn.endpoints["A"].script[0].txn == 1


@pytest.mark.parametrize("seed", [0, 1, 7, 12345])
def test_same_seed_same_bytes(seed):
    scn = Scenario.from_file(STANDARD_SUITE[4])
    assert run(scn, seed).dumps() == run(scn, seed).dumps()


def test_seed_changes_faults():
    scn = scenario([(t, {t: t}) for t in range(1, 60, 6)], params=LinkParams(loss_prob=0.3), horizon=150)
    assert run(scn, 1).dumps() != run(scn, 2).dumps()


def test_frames_are_conserved_under_faults():
    scn = scenario([(t, {t: t}) for t in range(1, 60, 5)], [(t, {100 + t: t}) for t in range(3, 60, 7)],
                   params=LinkParams(loss_prob=0.2, dup_prob=0.2, reorder_prob=0.2, corrupt_prob=0.1), horizon=150)
    for seed in range(20):
        sent, accounted = analysis.frame_conservation(run(scn, seed))
        assert sent == accounted


@pytest.mark.parametrize("d,tx,expect", [(2, 10, True), (5, 10, False), (4, 9, True), (10, 4, False)])
def test_pif_condition(d, tx, expect):
    assert pif_condition(LinkParams(one_way_delay=d, frame_tx_time=tx)) is expect


def test_step_api_matches_run():
    scn = scenario([(1, {1: 1})], horizon=30)
    sim = Simulator(scn)
    ticks = []
    while (step := sim.advance()) is not None:
        ticks.append(step[0])
    assert ticks == sorted(ticks)
    assert sim.finish().dumps() == run(scn).dumps()


def test_timeout_defaults_to_four_delays():
    assert LinkParams(one_way_delay=5).effective_timeout == 20
    assert LinkParams(one_way_delay=5, timeout=7).effective_timeout == 7
