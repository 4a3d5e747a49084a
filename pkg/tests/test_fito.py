from conftest import clean_params, scenario
from oaelink import analysis
from oaelink.fito_baseline import count_violations, rdma_write
from oaelink.netsim import Scenario, Simulator, run
from oaelink.suite import SCENARIOS


def test_rdma_write_completes_on_placement():
    rec = rdma_write({1: 5, 2: 6}, read_ticks=(30,))
    assert rec.completed and rec.retries == 0
    # second field leaves at tick 1, lands at 4, the ack lands at 7
    assert rec.tick == 1 + 3 + 3
    snaps = [r.body["snapshot"] for r in rec.trace.channel("observer")]
    assert snaps == [[[1, 5, 1], [2, 6, 1]]]


def test_placement_is_visible_before_completion():
    rec = rdma_write({1: 5, 2: 6, 3: 7}, clean_params(frame_tx_time=2), read_ticks=tuple(range(12)))
    partial = [r for r in rec.trace.channel("observer") if 0 < len(r.body["snapshot"]) < 3]
    assert partial, "a reader should catch a half-placed write"
    counts = count_violations(rec.trace)
    assert counts["A3"] > 0 and counts["N1"] > 0


def test_schema_skew_completes_with_wrong_meaning():
    rec = rdma_write({1: 1000}, sender_version=1, receiver_version=2)
    assert rec.completed
    assert count_violations(rec.trace)["A2"] == 1
    assert analysis.kbp_audit(rec.trace).ineligible


def test_total_loss_retries_then_fail_stops():
    scn = Scenario.from_file(SCENARIOS / "lossy.yaml")
    tr = run(scn, 0, "fito")
    assert analysis.retries(tr) == {1: 3, 2: 3, 3: 3}
    assert set(analysis.txn_outcomes(tr).values()) == {"ABORTED"}
    assert any(r.body.get("op") == "fail-stop" for r in tr.channel("auditor"))


def test_oae_same_lossy_scenario_never_retries():
    tr = run(Scenario.from_file(SCENARIOS / "lossy.yaml"), 0, "oae")
    assert set(analysis.retries(tr).values()) == {0}


def test_fito_exposes_placement_buffer():
    sim = Simulator(scenario([(1, {1: 1})], mode="fito", horizon=4))
    sim.run()
    assert sim.link.ends["B"].placement_buffer == {}
    sim = Simulator(scenario([(1, {1: 1})], mode="fito", horizon=30))
    sim.run()
    assert sim.link.ends["B"].placement_buffer == {1: (1, 1)}
