import json
from pathlib import Path

import pytest

from conftest import scenario
from oaelink import analysis
from oaelink.ilt import CausalRelation, bitstring
from oaelink.netsim import run
from oaelink.trace import Record, Trace, TraceFormatError

GOLDEN = Path(__file__).parent / "golden"


def golden(name) -> Trace:
    return Trace.read(GOLDEN / f"{name}.trace")


def mutate(tr: Trace, fn) -> Trace:
    """Copy of ``tr`` with ``fn`` applied to its record list."""
    recs = [Record(r.tick, r.channel, r.endpoint, r.txn, json.loads(json.dumps(r.body))) for r in tr]
    return Trace(dict(tr.header), fn(recs) or recs)


def find(recs, channel, **match):
    for i, r in enumerate(recs):
        if r.channel == channel and all(r.body.get(k) == v for k, v in match.items()):
            return i
    raise LookupError(match)


@pytest.mark.parametrize("name", sorted(p.stem for p in GOLDEN.glob("*.trace")))
def test_golden_traces_are_clean(name):
    assert analysis.check_invariants(golden(name)).clean


# Each mutation breaks one guarantee of the single-commit golden trace.


def _early_read(recs):
    i = find(recs, "fsm", event="CommitAck")
    recs.insert(i, Record(recs[i].tick, "observer", "B", None, {"op": "read", "snapshot": [[1, 42, 1]]}))


def _skewed_commit(recs):
    recs[find(recs, "auditor", op="commit")].body["interpreted"] = "0000000000000000"


def _drop_peer_commit(recs):
    i = find(recs, "fsm", event="CommitAck")
    del recs[i + 1]


def _commit_from_tentative(recs):
    i = find(recs, "fsm", event="CommitAck")
    recs[i + 1].body["from"] = "TENTATIVE"


def _lost_payload(recs):
    del recs[find(recs, "wire", op="deliver", frame_kind="Tentative")]


def _timeout_without_abort(recs):
    i = find(recs, "wire", op="deliver", frame_kind="Reflection")
    recs.insert(i, Record(recs[i].tick, "fsm", "A", 1, {"event": "Timeout", "from": "TENTATIVE", "kind": "transition",
                                                         "reason": "", "to": "TENTATIVE"}))


@pytest.mark.parametrize("inv,fn", [
    ("A1", _early_read),
    ("A2", _skewed_commit),
    ("N1", _drop_peer_commit),
    ("N2", _commit_from_tentative),
    ("N3", _lost_payload),
    ("N4", _timeout_without_abort),
])
def test_mutation_is_flagged(inv, fn):
    rep = analysis.check_invariants(mutate(golden("single_commit"), fn))
    assert rep.counts[inv] > 0, rep.table()
    assert any(v.invariant == inv for v in rep.violations)


def test_torn_read_is_flagged_as_mixed_era():
    def torn(recs):
        i = max(i for i, r in enumerate(recs) if r.channel == "observer" and len(r.body["snapshot"]) == 3)
        recs[i].body["snapshot"] = recs[i].body["snapshot"][:2]

    rep = analysis.check_invariants(mutate(golden("multi_field"), torn))
    assert rep.counts["A3"] == 1 and rep.total == 1


def test_double_apply_is_flagged():
    def twice(recs):
        i = find(recs, "auditor", op="apply")
        recs.insert(i + 1, recs[i])

    assert analysis.check_invariants(mutate(golden("single_commit"), twice)).counts["N3"] == 1


def test_unknown_trace_version_is_refused():
    tr = golden("empty")
    tr.header["version"] = 99
    with pytest.raises(TraceFormatError):
        analysis.check_invariants(tr)


def test_report_serializes_verbatim_records():
    rep = analysis.check_invariants(mutate(golden("single_commit"), _skewed_commit))
    lines = [json.loads(x) for x in rep.to_jsonl().splitlines()]
    assert lines[0]["counts"]["A2"] == 1 and lines[0]["traces"] == 1
    assert lines[1]["invariant"] == "A2" and lines[1]["evidence"][0][2] == "-"
    other = analysis.check_invariants(golden("crossed"))
    assert rep.merge(other).traces == 2


def test_single_initiator_has_empty_loss_set():
    proj = analysis.dco_project(golden("single_commit"))
    assert proj.loss_set == ()
    assert all(r is not CausalRelation.INDEFINITE for r in proj.relations.values())


def test_crossed_pair_is_indefinite_until_resolved():
    tr = golden("crossed")
    idx = analysis.CausalIndex(tr)
    (i, j), = idx.crossed_pairs
    a, b = idx.events[i], idx.events[j]
    born = max(a.tick, b.tick)
    assert bitstring(analysis.relation_matrix(idx, born)[(a.eid, b.eid)]) == "11"
    final = analysis.relation_matrix(idx, tr.end_tick)
    assert final[(a.eid, b.eid)].definite or final[(a.eid, b.eid)] is CausalRelation.INDEFINITE
    assert all(x != y for x, y in final)
    assert analysis.dco_project(idx).loss_set == ((a.eid, b.eid),)


def test_resolution_audit_on_canonical_traces():
    for name in ("single_commit", "crossed", "multi_field", "schema_skew"):
        res = analysis.resolution_audit(golden(name))
        assert res.problems == [] and res.pairs > 0
    assert analysis.resolution_audit(golden("crossed")).indefinite_pairs >= 1
    with pytest.raises(ValueError):
        analysis.resolution_audit(golden("empty"), "every")


def test_kbp_audit_covers_every_tick():
    tr = golden("multi_field")
    audit = analysis.kbp_audit(tr)
    assert audit.balance_violations == 0 and audit.ineligible == []
    assert audit.ticks_covered == 2 * (tr.end_tick + 1)
    assert audit.commits == 1


def test_pif_ticks_and_outcomes():
    tr = run(scenario([(1, {1: 1})]))
    (txn, commit, done), = analysis.pif_ticks(tr)
    assert txn == 1 and done == 1 and commit == 7
    assert analysis.retries(tr) == {1: 0}


def test_compare_table_marks_columns():
    oae = analysis.ViolationReport()
    fito = analysis.check_invariants(mutate(golden("single_commit"), _skewed_commit))
    text = analysis.compare_table(oae, fito)
    assert "OAE [sim]" in text and "NVLink [cited]" in text and "--- (1)" in text
