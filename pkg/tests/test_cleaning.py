from datetime import date

import pytest

from facelab.cleaning import (
    UnresolvedSubjects,
    adjudication_queue,
    audit,
    clean,
    emit_versions,
    item_id,
    mean_dob,
    resolve_dob,
    resolve_gender,
    resolve_race,
)
from facelab.records import Record, group_by_subject
from facelab.synthgen import GenSpec, generate


def make_subject(sid, genders=None, races=None, dobs=None, n=None):
    n = n or max(len(x) for x in (genders or [], races or [], dobs or []) if x)
    genders = genders or ["M"] * n
    races = races or ["B"] * n
    dobs = dobs or [date(1980, 1, 1)] * n
    return [
        Record(f"{sid}_{i:02d}", sid, dobs[i], date(2004, 1, 1), genders[i], races[i])
        for i in range(n)
    ]


def ledger_of(records):
    (led,) = group_by_subject(records)
    return led


def test_audit_all_consistent():
    report = audit(group_by_subject(make_subject("s1", n=4)))
    assert report.summary == {"gender": 0, "race": 0, "dob": 0}


def test_audit_flags_gender_conflict():
    report = audit(group_by_subject(make_subject("s1", genders=list("FMFFF"))))
    assert set(report.gender_conflicts) == {"s1"}
    assert report.gender_conflicts["s1"] == {"F": 4, "M": 1}


def test_audit_counts_match_injections():
    spec = GenSpec(subject_count=500, rate_gender_flip=0.01, rate_race_flip=0.03,
                   rate_dob_small=0.10, rate_dob_large=0.03, master_seed=11)
    records, _, truth = generate(spec)
    report = audit(group_by_subject(records))
    by_attr = {"gender": 0, "race": 0, "dob": 0}
    for inj in truth.injections.values():
        by_attr[inj["attribute"]] += 1
    assert report.summary == by_attr


def test_resolve_gender_majority():
    led = ledger_of(make_subject("s1", genders=list("FMFFF")))
    res = resolve_gender(led)
    assert res.rule == "majority" and res.resolved_value == "F"


def test_resolve_gender_tie_pends():
    led = ledger_of(make_subject("s1", genders=list("MF")))
    assert resolve_gender(led) is None
    items = adjudication_queue([led])
    assert [i.kind for i in items] == ["gender_tie"]


def test_resolve_gender_strict_majority_three():
    led = ledger_of(make_subject("s1", genders=list("MMF")))
    assert resolve_gender(led).resolved_value == "M"


def test_resolve_race_majority_24_to_1():
    led = ledger_of(make_subject("s1", races=["W"] * 24 + ["B"]))
    res = resolve_race(led)
    assert res.rule == "majority" and res.resolved_value == "W"


def test_resolve_race_tie_with_other_decision():
    led = ledger_of(make_subject("s1", races=list("WWBB")))
    decisions = {item_id("s1", "race_no_majority"): "O"}
    res = resolve_race(led, decisions)
    assert res.rule == "adjudicated" and res.resolved_value == "O"
    result = clean(led.records, decisions)
    assert all(r.race == "O" for r in result.records)
    assert all(r.corrected == 6 for r in result.records)


def test_resolve_race_tie_with_white_decision():
    led = ledger_of(make_subject("s1", races=list("WWBB")))
    decisions = {item_id("s1", "race_no_majority"): "W"}
    result = clean(led.records, decisions)
    assert all(r.race == "W" for r in result.records)
    # only the relabeled records carry the perception indicator
    assert [r.corrected for r in result.records] == [0, 0, 5, 5]


def test_resolve_dob_majority():
    dobs = [date(1970, 1, 1)] * 3 + [date(1970, 1, 2)]
    res = resolve_dob(ledger_of(make_subject("s1", dobs=dobs)))
    assert res.rule == "majority" and res.resolved_value == date(1970, 1, 1)


def test_resolve_dob_mean_100_day_gap():
    dobs = [date(2000, 1, 1), date(2000, 4, 10)]
    res = resolve_dob(ledger_of(make_subject("s1", dobs=dobs)))
    assert res.rule == "mean_dob"
    assert res.resolved_value == date(2000, 2, 20)


def test_resolve_dob_uncorrectable_32_years():
    dobs = [date(1970, 1, 1), date(2002, 1, 1)]
    res = resolve_dob(ledger_of(make_subject("s1", dobs=dobs)))
    assert res.rule == "uncorrectable"
    result = clean(ledger_of(make_subject("s1", dobs=dobs)).records)
    assert all(r.corrected == 3 for r in result.records)


def test_mean_dob_rounds_half_up():
    assert mean_dob([date(2000, 1, 1), date(2000, 1, 2)]) == date(2000, 1, 2)


def test_indicator_seven_for_double_change():
    # one record wrong in both gender and race
    records = make_subject("s1", genders=list("FFFM")[:4], races=list("WWWB"))
    result = clean(records)
    assert result.records[3].corrected == 7
    assert result.records[3].gender == "F" and result.records[3].race == "W"
    assert all(r.corrected == 0 for r in result.records[:3])


def test_clean_conserves_and_is_idempotent():
    spec = GenSpec(subject_count=200, rate_gender_flip=0.02, rate_race_flip=0.03,
                   rate_dob_small=0.10, rate_dob_large=0.03, master_seed=3)
    records, _, truth = generate(spec)
    decisions = {item_id(sid, kind): val for kind, sid, val in truth.required_decisions()}
    result = clean(records, decisions)
    assert len(result.records) == len(records)
    assert not result.pending
    report2 = audit(group_by_subject(result.records))
    assert report2.summary["gender"] == 0 and report2.summary["race"] == 0
    # only uncorrectable subjects may still disagree on dob
    uncorrectable = {s for s, inj in truth.injections.items()
                     if inj["mode"] == "uncorrectable"}
    assert set(report2.dob_conflicts) == uncorrectable


def test_emit_versions_partition():
    spec = GenSpec(subject_count=150, rate_dob_large=0.05, master_seed=9)
    records, _, _ = generate(spec)
    result = clean(records)
    versions = emit_versions(result)
    v2, go, hold = (versions[k][0] for k in ("cleaned_v2", "go_for_age", "holdout_for_age"))
    assert len(go) + len(hold) == len(v2)
    assert {r.image_id for r in go} | {r.image_id for r in hold} == {r.image_id for r in v2}
    assert not ({r.image_id for r in go} & {r.image_id for r in hold})
    assert all(r.corrected == 3 for r in hold)


def test_emit_versions_zero_conflicts():
    records, _, _ = generate(GenSpec(subject_count=40, master_seed=1))
    versions = emit_versions(clean(records))
    assert versions["holdout_for_age"][0] == []
    assert versions["go_for_age"][0] == versions["cleaned_v2"][0]


def test_emit_versions_strict_raises_on_pending():
    records = make_subject("s1", genders=list("MF"))
    result = clean(records)
    assert result.pending_subjects == ["s1"]
    with pytest.raises(UnresolvedSubjects):
        emit_versions(result, strict=True)


def test_dob_gap_histogram_data():
    records = (make_subject("a", dobs=[date(2000, 1, 1), date(2000, 1, 11)])
               + make_subject("b", dobs=[date(2000, 1, 1), date(2000, 1, 11)])
               + make_subject("c", dobs=[date(2000, 1, 1), date(2002, 1, 1)]))
    report = audit(group_by_subject(records))
    assert report.dob_gap_histogram() == [(10, 2), (731, 1)]
    cum = report.dob_gap_cumulative()
    assert cum[0] == (10, pytest.approx(2 / 3))
    assert cum[-1] == (731, pytest.approx(1.0))
