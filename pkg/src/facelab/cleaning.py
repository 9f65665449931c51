"""Per-subject inconsistency audit and the resolution rules that fix them.

Gender, race, and birthdate disagreements inside a subject's ledger are
resolved by, in order: strict majority, attribute-specific fallbacks
(mean birthdate within a one-year span), and a human adjudication queue.
Every modified record gets a ``corrected`` indicator code recomputed from
the raw-vs-cleaned diff.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date

from .records import (
    IND_DOB_AVERAGED,
    IND_DOB_MAJORITY,
    IND_DOB_UNCORRECTABLE,
    IND_GENDER,
    IND_MULTIPLE,
    IND_NO_CHANGE,
    IND_RACE_MAJORITY,
    IND_RACE_OTHER,
    IND_RACE_PERCEPTION,
    Record,
    SubjectLedger,
    group_by_subject,
    make_manifest,
)

MAX_MEAN_DOB_GAP_DAYS = 366  # inclusive; spans past this are uncorrectable


class UnresolvedSubjects(RuntimeError):
    def __init__(self, subject_ids):
        super().__init__(f"{len(subject_ids)} subjects await adjudication")
        self.subject_ids = list(subject_ids)


@dataclass(frozen=True)
class Resolution:
    subject_id: str
    attribute: str  # gender | race | dob
    rule: str  # majority | mean_dob | uncorrectable | adjudicated
    resolved_value: object
    source: str = "auto"  # auto | human


@dataclass(frozen=True)
class AdjudicationItem:
    item_id: str
    subject_id: str
    kind: str  # race_no_majority | gender_tie | dob_review
    evidence: dict


@dataclass
class InconsistencyReport:
    gender_conflicts: dict = field(default_factory=dict)
    race_conflicts: dict = field(default_factory=dict)
    dob_conflicts: dict = field(default_factory=dict)
    dob_range_days: dict = field(default_factory=dict)

    @property
    def summary(self):
        return {
            "gender": len(self.gender_conflicts),
            "race": len(self.race_conflicts),
            "dob": len(self.dob_conflicts),
        }

    def dob_gap_histogram(self):
        """(gap_days, count) pairs, ascending by gap."""
        counts: dict[int, int] = {}
        for gap in self.dob_range_days.values():
            counts[gap] = counts.get(gap, 0) + 1
        return sorted(counts.items())

    def dob_gap_cumulative(self):
        """(gap_days, cumulative proportion of dob-conflicted subjects)."""
        hist = self.dob_gap_histogram()
        total = sum(c for _, c in hist)
        out, acc = [], 0
        for gap, c in hist:
            acc += c
            out.append((gap, acc / total))
        return out


def _dob_range_days(ledger: SubjectLedger) -> int:
    ords = [d.toordinal() for d in ledger.dob_values]
    return max(ords) - min(ords)


def audit(ledgers) -> InconsistencyReport:
    """List every subject whose ledger disagrees on gender, race, or dob."""
    report = InconsistencyReport()
    for led in ledgers:
        if not led.consistent("gender"):
            report.gender_conflicts[led.subject_id] = dict(led.gender_values)
        if not led.consistent("race"):
            report.race_conflicts[led.subject_id] = dict(led.race_values)
        if not led.consistent("dob"):
            report.dob_conflicts[led.subject_id] = {
                d.isoformat(): c for d, c in led.dob_values.items()
            }
            report.dob_range_days[led.subject_id] = _dob_range_days(led)
    return report


def _strict_majority(counts: dict):
    total = sum(counts.values())
    for value, n in counts.items():
        if n * 2 > total:
            return value
    return None


def resolve_gender(ledger: SubjectLedger, decisions=None):
    """Majority gender wins; an exact tie goes to the adjudication queue."""
    winner = _strict_majority(ledger.gender_values)
    if winner is not None:
        return Resolution(ledger.subject_id, "gender", "majority", winner)
    decided = (decisions or {}).get(item_id(ledger.subject_id, "gender_tie"))
    if decided is not None:
        return Resolution(ledger.subject_id, "gender", "adjudicated", decided, "human")
    return None


def resolve_race(ledger: SubjectLedger, decisions=None):
    """Majority race wins; otherwise a logged human decision is applied.

    A decision of "O" means the annotator found the race unclear or mixed,
    which maps to the Other category (indicator 6 rather than 5).
    """
    winner = _strict_majority(ledger.race_values)
    if winner is not None:
        return Resolution(ledger.subject_id, "race", "majority", winner)
    decided = (decisions or {}).get(item_id(ledger.subject_id, "race_no_majority"))
    if decided is not None:
        return Resolution(ledger.subject_id, "race", "adjudicated", decided, "human")
    return None


def mean_dob(dobs) -> date:
    """Mean of per-record birthdates as day numbers, rounded half-up."""
    ords = [d.toordinal() for d in dobs]
    mean = sum(ords) / len(ords)
    return date.fromordinal(int(mean + 0.5))


def resolve_dob(ledger: SubjectLedger):
    winner = _strict_majority(ledger.dob_values)
    if winner is not None:
        return Resolution(ledger.subject_id, "dob", "majority", winner)
    if _dob_range_days(ledger) <= MAX_MEAN_DOB_GAP_DAYS:
        value = mean_dob([r.dob for r in ledger.records])
        return Resolution(ledger.subject_id, "dob", "mean_dob", value)
    return Resolution(ledger.subject_id, "dob", "uncorrectable", None)


def item_id(subject_id: str, kind: str) -> str:
    return f"{kind}:{subject_id}"


def adjudication_queue(ledgers, decisions=None) -> list[AdjudicationItem]:
    """Pending human-review items for ties the auto rules cannot settle."""
    items = []
    for led in ledgers:
        evidence = {
            "records": [
                {
                    "image_id": r.image_id,
                    "arrest_date": r.arrest_date.isoformat(),
                    "gender": r.gender,
                    "race": r.race,
                    "dob": r.dob.isoformat(),
                    "image_path": r.image_path,
                }
                for r in led.records
            ],
        }
        if not led.consistent("gender") and resolve_gender(led, decisions) is None:
            items.append(
                AdjudicationItem(
                    item_id(led.subject_id, "gender_tie"),
                    led.subject_id,
                    "gender_tie",
                    {**evidence, "counts": dict(led.gender_values)},
                )
            )
        if not led.consistent("race") and resolve_race(led, decisions) is None:
            items.append(
                AdjudicationItem(
                    item_id(led.subject_id, "race_no_majority"),
                    led.subject_id,
                    "race_no_majority",
                    {**evidence, "counts": dict(led.race_values)},
                )
            )
    return items


def _indicator(changed: set[str], race_rule: str | None, race_value, uncorrectable: bool,
               dob_rule: str | None) -> int:
    if len(changed) >= 2:
        return IND_MULTIPLE
    if "gender" in changed:
        return IND_GENDER
    if "race" in changed:
        if race_rule == "majority":
            return IND_RACE_MAJORITY
        return IND_RACE_OTHER if race_value == "O" else IND_RACE_PERCEPTION
    if "dob" in changed:
        return IND_DOB_MAJORITY if dob_rule == "majority" else IND_DOB_AVERAGED
    if uncorrectable:
        return IND_DOB_UNCORRECTABLE
    return IND_NO_CHANGE


@dataclass
class CleanResult:
    records: list  # cleaned records, input order preserved
    resolutions: list
    pending: list  # AdjudicationItem for undecidable subjects
    report: InconsistencyReport

    @property
    def pending_subjects(self):
        return sorted({item.subject_id for item in self.pending})


def clean(records, decisions=None) -> CleanResult:
    """Apply the resolution rules to every conflicted subject.

    Subjects whose ties lack a logged human decision stay pending; their
    records pass through unchanged (and without indicators) so callers can
    exclude them until decided.
    """
    ledgers = group_by_subject(records)
    report = audit(ledgers)
    pending = adjudication_queue(ledgers, decisions)
    pending_subjects = {item.subject_id for item in pending}

    resolutions = []
    plan: dict[str, dict] = {}
    for led in ledgers:
        if led.subject_id in pending_subjects:
            continue
        entry: dict = {}
        if not led.consistent("gender"):
            entry["gender"] = resolve_gender(led, decisions)
        if not led.consistent("race"):
            entry["race"] = resolve_race(led, decisions)
        if not led.consistent("dob"):
            entry["dob"] = resolve_dob(led)
        if entry:
            plan[led.subject_id] = entry
            resolutions.extend(entry.values())

    cleaned = []
    for r in records:
        if r.subject_id in pending_subjects:
            cleaned.append(r)
            continue
        entry = plan.get(r.subject_id, {})
        changed: set[str] = set()
        gender, race, dob = r.gender, r.race, r.dob
        uncorrectable = False
        res = entry.get("gender")
        if res and res.resolved_value != gender:
            gender = res.resolved_value
            changed.add("gender")
        res = entry.get("race")
        if res and res.resolved_value != race:
            race = res.resolved_value
            changed.add("race")
        dob_res = entry.get("dob")
        if dob_res:
            if dob_res.rule == "uncorrectable":
                uncorrectable = True
            elif dob_res.resolved_value != dob:
                dob = dob_res.resolved_value
                changed.add("dob")
        race_res = entry.get("race")
        indicator = _indicator(
            changed,
            race_res.rule if race_res else None,
            race_res.resolved_value if race_res else None,
            uncorrectable,
            dob_res.rule if dob_res else None,
        )
        cleaned.append(
            replace(r, gender=gender, race=race, dob=dob, corrected=indicator).with_age()
        )
    return CleanResult(cleaned, resolutions, pending, report)


def emit_versions(result: CleanResult, name: str = "dataset", strict: bool = False):
    """Split cleaned records into the three dataset versions.

    Returns ``{version: (records, manifest)}`` for cleaned_v2, go_for_age,
    and holdout_for_age.  Pending subjects are always excluded; in strict
    mode their presence is an error instead of a warning count.
    """
    if strict and result.pending:
        raise UnresolvedSubjects(result.pending_subjects)
    pending = set(result.pending_subjects)
    cleaned_v2 = [r for r in result.records if r.subject_id not in pending]
    go = [r for r in cleaned_v2 if r.corrected != IND_DOB_UNCORRECTABLE]
    holdout = [r for r in cleaned_v2 if r.corrected == IND_DOB_UNCORRECTABLE]
    return {
        "cleaned_v2": (cleaned_v2, make_manifest(name, "cleaned_v2", cleaned_v2)),
        "go_for_age": (go, make_manifest(name, "go_for_age", go)),
        "holdout_for_age": (holdout, make_manifest(name, "holdout_for_age", holdout)),
    }
