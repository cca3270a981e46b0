"""Case-table ingestion and the study timeline.

Everything in this module is calendar bookkeeping: reading the raw line-list
table, classifying whether a case could have been infected outside Wuhan,
applying the cohort inclusion rules, and converting calendar dates to the
integer epoch-day scale used by the rest of the package (day 0 = November 30,
2019, so the travel quarantine of January 23, 2020 falls on day 54).

Continuous event times carry fixed sub-day offsets so that recorded same-day
events stay strictly ordered: begin-of-stay sits at three quarters of a day
before the end of its recorded day, end-of-stay at one quarter, and symptom
onset at half.  A begin-of-stay recorded as 0 means "Wuhan resident" and is
kept at exactly 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field, asdict
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

__all__ = [
    "EPOCH_ORIGIN",
    "QUARANTINE_DAY",
    "INFINITY",
    "CaseTableError",
    "RawCase",
    "CaseRecord",
    "CohortRules",
    "ExclusionReport",
    "to_epoch",
    "from_epoch",
    "parse_date",
    "parse_case_table",
    "build_cluster_context",
    "classify_outside",
    "build_cohort",
    "write_cohort_csv",
    "read_cohort_csv",
    "write_cohort_json",
    "write_json",
    "atomic_write_text",
]

#: Day 0 of the epoch-day scale.
EPOCH_ORIGIN = date(2019, 11, 30)

#: Epoch day of the Wuhan travel quarantine (January 23, 2020); the horizon L.
QUARANTINE_DAY = 54

#: Sentinel for events that never happen (never left, never infected, ...).
INFINITY = math.inf


class CaseTableError(ValueError):
    """Raised for unusable raw tables: bad headers or broken mandatory fields."""


def to_epoch(d: date) -> int:
    """Convert a calendar date to an epoch day (2019-11-30 -> 0).

    Raises ValueError for dates before the origin.
    """
    n = (d - EPOCH_ORIGIN).days
    if n < 0:
        raise ValueError(f"date {d.isoformat()} is before the epoch origin {EPOCH_ORIGIN.isoformat()}")
    return n


def from_epoch(n: int) -> date:
    """Inverse of :func:`to_epoch`."""
    if n < 0:
        raise ValueError(f"epoch day must be >= 0, got {n}")
    return EPOCH_ORIGIN + timedelta(days=int(n))


_MONTHS = {
    "jan": 1, "feb": 2, "mar": 3, "apr": 4, "may": 5, "jun": 6,
    "jul": 7, "aug": 8, "sep": 9, "oct": 10, "nov": 11, "dec": 12,
}
_DAY_MON = re.compile(r"^(\d{1,2})[-/ ]([A-Za-z]{3,})$")
_MISSING = {"", "na", "n/a", "nan", "none", "-", "?", "unknown"}


def parse_date(text: str | None) -> date | None:
    """Parse a date in ISO-8601 or day-month form ("22-Jan", "9-Feb").

    Day-month strings have their year inferred from the month: November and
    December belong to 2019, every other month to 2020.  Missing markers
    (empty, "NA", "-", ...) map to None; anything else unparseable raises
    ValueError.
    """
    if text is None:
        return None
    text = text.strip()
    if text.lower() in _MISSING:
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        pass
    m = _DAY_MON.match(text)
    if m:
        day = int(m.group(1))
        mon = _MONTHS.get(m.group(2)[:3].lower())
        if mon is not None:
            year = 2019 if mon in (11, 12) else 2020
            return date(year, mon, day)
    raise ValueError(f"unparseable date: {text!r}")


@dataclass(frozen=True)
class RawCase:
    """One row of the raw line-list table, lightly normalized."""

    case_id: str
    residence: str = ""
    gender: str = "unknown"
    age: int | None = None
    known_contact: bool = False
    cluster: str | None = None
    outside: str = "no"
    begin_wuhan: date | None = None
    end_wuhan: date | None = None
    arrived: date | None = None
    symptom: date | None = None
    initial: date | None = None
    confirmed: date | None = None
    location: str | None = None  # reporting location; optional column


# Header-name normalization: lowercase, non-alphanumerics collapsed.
def _norm_header(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


_COLUMN_ALIASES = {
    "case_id": "case_id",
    "case": "case_id",
    "id": "case_id",
    "residence": "residence",
    "gender": "gender",
    "sex": "gender",
    "age": "age",
    "known_contact": "known_contact",
    "contact": "known_contact",
    "cluster": "cluster",
    "outside": "outside",
    "begin_wuhan": "begin_wuhan",
    "begin_of_stay_in_wuhan": "begin_wuhan",
    "end_wuhan": "end_wuhan",
    "end_of_stay_in_wuhan": "end_wuhan",
    "arrived": "arrived",
    "arrival": "arrived",
    "symptom": "symptom",
    "symptom_onset": "symptom",
    "initial": "initial",
    "initial_symptom": "initial",
    "confirmed": "confirmed",
    "confirmation": "confirmed",
    "location": "location",
    "province": "location",
    "city": "location",
    "reported_in": "location",
}

_REQUIRED_COLUMNS = [
    "case_id", "residence", "gender", "age", "known_contact", "cluster",
    "outside", "begin_wuhan", "end_wuhan", "arrived", "symptom", "initial",
    "confirmed",
]

_TRUE_STRINGS = {"yes", "y", "true", "1"}
_FALSE_STRINGS = {"no", "n", "false", "0"} | _MISSING


def _parse_gender(text: str) -> str:
    t = text.strip().lower()
    if t in ("male", "m"):
        return "male"
    if t in ("female", "f"):
        return "female"
    return "unknown"


def _parse_outside(text: str) -> str:
    t = text.strip().lower()
    if t in ("yes", "likely", "no"):
        return t
    return "no" if t in _MISSING else t


def parse_case_table(stream, delimiter: str = ",") -> list[RawCase]:
    """Read a raw case table into RawCase rows.

    Parameters
    ----------
    stream : file-like or str
        Text stream (or a string) holding a delimited table whose header
        contains at least the canonical columns (case-insensitive; spaces and
        underscores interchangeable).
    delimiter : str
        Field delimiter, default comma.

    Raises
    ------
    CaseTableError
        If a required column is missing, or a mandatory field (case_id,
        confirmed) of some row cannot be parsed; row errors carry the
        1-based data-row number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise CaseTableError("empty table: no header row") from None

    col_of: dict[str, int] = {}
    for i, name in enumerate(header):
        canon = _COLUMN_ALIASES.get(_norm_header(name))
        if canon is not None and canon not in col_of:
            col_of[canon] = i
    missing = [c for c in _REQUIRED_COLUMNS if c not in col_of]
    if missing:
        raise CaseTableError(f"missing column: {missing[0]}")

    def cell(row: Sequence[str], name: str) -> str:
        i = col_of.get(name)
        return row[i].strip() if i is not None and i < len(row) else ""

    cases: list[RawCase] = []
    for rownum, row in enumerate(reader, start=1):
        if not any(f.strip() for f in row):
            continue
        case_id = cell(row, "case_id")
        if not case_id:
            raise CaseTableError(f"row {rownum}: missing case_id")
        try:
            confirmed = parse_date(cell(row, "confirmed"))
        except ValueError as exc:
            raise CaseTableError(f"row {rownum}: bad confirmed date: {exc}") from None
        if confirmed is None:
            raise CaseTableError(f"row {rownum}: missing confirmed date")

        def maybe_date(name: str) -> date | None:
            try:
                return parse_date(cell(row, name))
            except ValueError:
                return None  # unparseable optional fields become absent

        age_text = cell(row, "age")
        try:
            age = int(float(age_text)) if age_text.lower() not in _MISSING else None
        except ValueError:
            age = None

        cases.append(RawCase(
            case_id=case_id,
            residence=cell(row, "residence"),
            gender=_parse_gender(cell(row, "gender")),
            age=age,
            known_contact=cell(row, "known_contact").lower() in _TRUE_STRINGS,
            cluster=cell(row, "cluster") or None,
            outside=_parse_outside(cell(row, "outside")),
            begin_wuhan=maybe_date("begin_wuhan"),
            end_wuhan=maybe_date("end_wuhan"),
            arrived=maybe_date("arrived"),
            symptom=maybe_date("symptom"),
            initial=maybe_date("initial"),
            confirmed=confirmed,
            location=cell(row, "location") or None,
        ))
    return cases


# ---------------------------------------------------------------------------
# Outside-infection classification
# ---------------------------------------------------------------------------

_EXPOSURE_WINDOW = (date(2019, 12, 1), date(2020, 1, 23))


def _wuhan_stay(case: RawCase) -> tuple[date, date] | None:
    """Recorded (begin, end) of the Wuhan stay, with the standard imputations.

    Returns None when the row records no stay at all.
    """
    is_resident = case.residence.strip().lower() == "wuhan"
    if case.begin_wuhan is None and case.end_wuhan is None and not is_resident:
        return None
    begin = case.begin_wuhan if case.begin_wuhan is not None else EPOCH_ORIGIN
    end = case.end_wuhan if case.end_wuhan is not None else _EXPOSURE_WINDOW[1]
    return begin, end


def build_cluster_context(cases: Iterable[RawCase]) -> dict[str, date]:
    """Map each cluster id to the earliest recorded symptom onset among members."""
    earliest: dict[str, date] = {}
    for c in cases:
        if c.cluster and c.symptom is not None:
            cur = earliest.get(c.cluster)
            if cur is None or c.symptom < cur:
                earliest[c.cluster] = c.symptom
    return earliest


def classify_outside(case: RawCase, cluster_context: Mapping[str, date]) -> str:
    """Classify whether the case was likely infected outside Wuhan.

    "yes": no recorded Wuhan stay intersecting Dec 1, 2019 - Jan 23, 2020.
    "likely": Wuhan-exposed but symptom-free during the stay, with a recorded
    contact in a cluster whose earliest onset precedes this case's onset.
    "no": everything else (insufficient information defaults here).
    """
    stay = _wuhan_stay(case)
    lo, hi = _EXPOSURE_WINDOW
    if stay is None or stay[1] < lo or stay[0] > hi:
        return "yes"
    symptoms_during_stay = case.symptom is not None and case.symptom <= stay[1]
    if symptoms_during_stay:
        return "no"
    if case.known_contact and case.cluster and case.symptom is not None:
        first = cluster_context.get(case.cluster)
        if first is not None and first < case.symptom:
            return "likely"
    return "no"


# ---------------------------------------------------------------------------
# Cohort construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseRecord:
    """A cohort member on the epoch-day scale.

    B_int/E_int/S_int are the recorded (or imputed) integer epoch days of
    begin-of-stay, end-of-stay, and symptom onset; B/E/S carry the sub-day
    offsets that keep same-day events strictly ordered.  B_int == 0 marks a
    Wuhan resident and keeps B = 0 exactly.
    """

    case_id: str
    B_int: int
    E_int: int
    S_int: int
    B: float
    E: float
    S: float
    gender: str = "unknown"
    age_group: str = "unknown"
    confirmed_int: int | None = None
    location: str | None = None

    @classmethod
    def from_ints(cls, case_id: str, b_int: int, e_int: int, s_int: int,
                  gender: str = "unknown", age_group: str = "unknown",
                  confirmed_int: int | None = None, location: str | None = None,
                  horizon: int = QUARANTINE_DAY) -> "CaseRecord":
        """Build a record from integer days, applying the sub-day offsets."""
        if not 0 <= b_int <= e_int <= horizon:
            raise ValueError(
                f"case {case_id}: need 0 <= B_int <= E_int <= {horizon}, got ({b_int}, {e_int})")
        b = 0.0 if b_int == 0 else b_int - 0.75
        e = e_int - 0.25
        s = s_int - 0.5
        if not b < e:
            raise ValueError(f"case {case_id}: empty exposure interval (B={b}, E={e})")
        if not s > b:
            raise ValueError(f"case {case_id}: symptom onset S={s} not after exposure start B={b}")
        return cls(case_id=case_id, B_int=b_int, E_int=e_int, S_int=s_int,
                   B=b, E=e, S=s, gender=gender, age_group=age_group,
                   confirmed_int=confirmed_int, location=location)

    @property
    def is_resident(self) -> bool:
        return self.B_int == 0


def _age_group(age: int | None, cut: int = 50) -> str:
    if age is None:
        return "unknown"
    return "under50" if age < cut else "over50"


@dataclass(frozen=True)
class CohortRules:
    """Inclusion rules applied by :func:`build_cohort`, in order."""

    keep_outside: str = "no"
    arrival_cutoff: date = date(2020, 1, 23)
    impute_end_to: date = date(2020, 1, 23)
    require_symptom: bool = True
    reclassify_outside: bool = False  # recompute `outside` from the three rules


@dataclass
class ExclusionReport:
    """Why raw rows did not make it into the cohort."""

    n_input: int = 0
    n_kept: int = 0
    excluded: dict[str, int] = field(default_factory=dict)
    missing_symptom_fraction: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


_EXCLUSION_ORDER = [
    "outside_not_kept",
    "arrived_after_cutoff",
    "missing_symptom",
    "unknown_exposure_start",
    "invalid_interval",
]


def build_cohort(cases: Sequence[RawCase],
                 rules: CohortRules | None = None) -> tuple[list[CaseRecord], ExclusionReport]:
    """Apply the inclusion rules and convert survivors to CaseRecords.

    Exclusion order: outside-filter, arrival-filter, symptom-filter, then
    conversion (unknown begin-of-stay for non-residents and ill-formed
    intervals).  Exclusions are counted, never raised.
    """
    rules = rules or CohortRules()
    report = ExclusionReport(n_input=len(cases))
    counts = {k: 0 for k in _EXCLUSION_ORDER}
    cohort: list[CaseRecord] = []

    context = build_cluster_context(cases) if rules.reclassify_outside else {}
    n_after_outside = 0
    n_missing_symptom = 0
    for case in cases:
        outside = classify_outside(case, context) if rules.reclassify_outside else case.outside
        if outside != rules.keep_outside:
            counts["outside_not_kept"] += 1
            continue
        n_after_outside += 1
        if case.arrived is not None and case.arrived > rules.arrival_cutoff:
            counts["arrived_after_cutoff"] += 1
            continue
        if case.symptom is None:
            n_missing_symptom += 1
            if rules.require_symptom:
                counts["missing_symptom"] += 1
                continue

        is_resident = case.residence.strip().lower() == "wuhan"
        if case.begin_wuhan is not None:
            b_int = to_epoch(case.begin_wuhan) if case.begin_wuhan >= EPOCH_ORIGIN else 0
        elif is_resident:
            b_int = 0  # resident with unrecorded begin: exposed from the start
        else:
            counts["unknown_exposure_start"] += 1
            continue
        end = case.end_wuhan if case.end_wuhan is not None else rules.impute_end_to
        try:
            e_int = to_epoch(end)
            s_int = to_epoch(case.symptom) if case.symptom is not None else None
            if s_int is None:
                raise ValueError("missing symptom")
            record = CaseRecord.from_ints(
                case.case_id, b_int, e_int, s_int,
                gender=case.gender, age_group=_age_group(case.age),
                confirmed_int=to_epoch(case.confirmed) if case.confirmed else None,
                location=case.location)
        except ValueError:
            counts["invalid_interval"] += 1
            continue
        cohort.append(record)

    report.excluded = {k: v for k, v in counts.items() if v > 0}
    report.n_kept = len(cohort)
    if n_after_outside:
        report.missing_symptom_fraction = n_missing_symptom / n_after_outside
    return cohort, report


# ---------------------------------------------------------------------------
# Cohort I/O
# ---------------------------------------------------------------------------

_COHORT_FIELDS = ["case_id", "B_int", "E_int", "S_int", "B", "E", "S",
                  "gender", "age_group", "confirmed_int", "location"]


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write text to path atomically (temp file + rename)."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | os.PathLike, obj) -> None:
    """Serialize obj to JSON deterministically (sorted keys) and atomically."""
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _record_row(rec: CaseRecord) -> list[str]:
    vals = {
        "case_id": rec.case_id, "B_int": rec.B_int, "E_int": rec.E_int,
        "S_int": rec.S_int, "B": repr(rec.B), "E": repr(rec.E), "S": repr(rec.S),
        "gender": rec.gender, "age_group": rec.age_group,
        "confirmed_int": "" if rec.confirmed_int is None else rec.confirmed_int,
        "location": rec.location or "",
    }
    return [str(vals[k]) for k in _COHORT_FIELDS]


def write_cohort_csv(records: Sequence[CaseRecord], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COHORT_FIELDS)
    for rec in records:
        w.writerow(_record_row(rec))
    atomic_write_text(path, buf.getvalue())


def read_cohort_csv(path: str | os.PathLike) -> list[CaseRecord]:
    """Read a cohort table written by :func:`write_cohort_csv`.

    Continuous B/E/S are recomputed from the integer days, so the offsets are
    always consistent regardless of how the file was produced.
    """
    records: list[CaseRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"case_id", "B_int", "E_int", "S_int"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise CaseTableError(f"cohort file {path} lacks columns {sorted(need)}")
        for rownum, row in enumerate(reader, start=1):
            try:
                confirmed = row.get("confirmed_int") or None
                records.append(CaseRecord.from_ints(
                    row["case_id"], int(row["B_int"]), int(row["E_int"]), int(row["S_int"]),
                    gender=row.get("gender") or "unknown",
                    age_group=row.get("age_group") or "unknown",
                    confirmed_int=int(confirmed) if confirmed is not None else None,
                    location=row.get("location") or None))
            except ValueError as exc:
                raise CaseTableError(f"cohort row {rownum}: {exc}") from None
    return records


def write_cohort_json(records: Sequence[CaseRecord], path: str | os.PathLike) -> None:
    write_json(path, [asdict(r) for r in records])
