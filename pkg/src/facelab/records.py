"""Canonical record types and table I/O shared by every pipeline stage.

A dataset is a delimited text table with one row per image.  Records are
immutable after construction; all downstream stages treat them as values.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path

DAYS_PER_YEAR = 365.25

GENDERS = ("M", "F")
RACES = ("B", "W", "A", "H", "O")

#: corrected-indicator codes
IND_NO_CHANGE = 0
IND_DOB_MAJORITY = 1
IND_DOB_AVERAGED = 2
IND_DOB_UNCORRECTABLE = 3
IND_RACE_MAJORITY = 4
IND_RACE_PERCEPTION = 5
IND_RACE_OTHER = 6
IND_MULTIPLE = 7
IND_GENDER = 8

DEFAULT_SCHEMA = {
    "subject_id": "id_num",
    "image_id": "picture",
    "dob": "dob",
    "arrest_date": "date_of_arrest",
    "race": "race",
    "gender": "gender",
}


class RecordError(ValueError):
    """Base class for dataset loading/validation errors."""


class MissingColumn(RecordError):
    def __init__(self, column):
        super().__init__(f"required column missing: {column}")
        self.column = column


class UnparseableDate(RecordError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: unparseable date {value!r}")
        self.row = row


class UnknownRaceCode(RecordError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: unknown race code {value!r}")
        self.row = row


class UnknownGenderCode(RecordError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: unknown gender code {value!r}")
        self.row = row


class NegativeAge(RecordError):
    def __init__(self, dob, arrest_date):
        super().__init__(f"arrest date {arrest_date} precedes birthdate {dob}")


def compute_age_dec(dob: date, arrest_date: date) -> float:
    """Decimal age in 365.25-day years between birthdate and arrest date."""
    if arrest_date < dob:
        raise NegativeAge(dob, arrest_date)
    return (arrest_date.toordinal() - dob.toordinal()) / DAYS_PER_YEAR


@dataclass(frozen=True)
class Record:
    image_id: str
    subject_id: str
    dob: date
    arrest_date: date
    gender: str
    race: str
    image_path: str = ""
    corrected: int | None = None
    age_dec: float | None = None

    def __post_init__(self):
        if self.arrest_date < self.dob:
            raise NegativeAge(self.dob, self.arrest_date)
        if self.corrected is not None and not 0 <= self.corrected <= 8:
            raise RecordError(f"corrected indicator out of range: {self.corrected}")

    def with_age(self) -> "Record":
        return replace(self, age_dec=compute_age_dec(self.dob, self.arrest_date))


@dataclass(frozen=True)
class SubjectLedger:
    """All records of one subject, ordered by arrest date."""

    subject_id: str
    records: tuple[Record, ...]

    def _counts(self, attr):
        out: dict = {}
        for r in self.records:
            v = getattr(r, attr)
            out[v] = out.get(v, 0) + 1
        return out

    @property
    def gender_values(self):
        return self._counts("gender")

    @property
    def race_values(self):
        return self._counts("race")

    @property
    def dob_values(self):
        return self._counts("dob")

    def consistent(self, attr: str) -> bool:
        return len(self._counts(attr)) == 1


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    version: str
    record_count: int
    subject_count: int
    checksum: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))


def _parse_date(value, row):
    try:
        return date.fromisoformat(value.strip())
    except ValueError:
        raise UnparseableDate(row, value) from None


def load_records(path, schema: dict | None = None) -> list[Record]:
    """Load a delimited record table, validating codes and dates per row.

    ``schema`` remaps logical field names to column names; defaults follow
    the conventional headers (id_num, picture, dob, date_of_arrest, ...).
    """
    colmap = dict(DEFAULT_SCHEMA)
    if schema:
        colmap.update(schema)
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for logical, col in colmap.items():
            if col not in header:
                raise MissingColumn(col)
        for i, row in enumerate(reader, start=1):
            race = row[colmap["race"]].strip()
            if race not in RACES:
                raise UnknownRaceCode(i, race)
            gender = row[colmap["gender"]].strip()
            if gender not in GENDERS:
                raise UnknownGenderCode(i, gender)
            corrected = row.get("corrected")
            age_dec = row.get("age_dec")
            records.append(
                Record(
                    image_id=row[colmap["image_id"]].strip(),
                    subject_id=row[colmap["subject_id"]].strip(),
                    dob=_parse_date(row[colmap["dob"]], i),
                    arrest_date=_parse_date(row[colmap["arrest_date"]], i),
                    gender=gender,
                    race=race,
                    image_path=row.get("image_path", "") or "",
                    corrected=int(corrected) if corrected not in (None, "") else None,
                    age_dec=float(age_dec) if age_dec not in (None, "") else None,
                )
            )
    return records


OUTPUT_COLUMNS = [
    "id_num",
    "picture",
    "dob",
    "date_of_arrest",
    "race",
    "gender",
    "image_path",
    "corrected",
    "age_dec",
]


def _record_row(r: Record) -> list[str]:
    return [
        r.subject_id,
        r.image_id,
        r.dob.isoformat(),
        r.arrest_date.isoformat(),
        r.race,
        r.gender,
        r.image_path,
        "" if r.corrected is None else str(r.corrected),
        "" if r.age_dec is None else repr(r.age_dec),
    ]


def save_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OUTPUT_COLUMNS)
        for r in records:
            writer.writerow(_record_row(r))


def table_checksum(records) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update("\x1f".join(_record_row(r)).encode())
        h.update(b"\n")
    return h.hexdigest()


def make_manifest(name: str, version: str, records) -> DatasetManifest:
    return DatasetManifest(
        name=name,
        version=version,
        record_count=len(records),
        subject_count=len({r.subject_id for r in records}),
        checksum=table_checksum(records),
    )


def group_by_subject(records) -> list[SubjectLedger]:
    """Partition records into one ledger per subject.

    Within a ledger, records are sorted by arrest date (ties by image id);
    ledgers come out sorted by subject id.
    """
    by_subject: dict[str, list[Record]] = {}
    for r in records:
        by_subject.setdefault(r.subject_id, []).append(r)
    ledgers = []
    for sid in sorted(by_subject):
        recs = sorted(by_subject[sid], key=lambda r: (r.arrest_date, r.image_id))
        ledgers.append(SubjectLedger(subject_id=sid, records=tuple(recs)))
    return ledgers


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(manifest.to_json() + "\n")
