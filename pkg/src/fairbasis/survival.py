"""Actuarial exposure, Balducci-corrected mortality rates and the yearly
pseudo-table expansion of survival records.

Time is measured in years. Survival months are converted with exact
rational arithmetic so that exposures such as ``25/12 - 2 = 1/12`` carry no
rounding error until they are written out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DegenerateExposure, DomainError, FormatError, InternalConsistency, SchemaError
from .undefined import UNDEFINED

CAUSE_RULES = ("cause_specific", "all_cause", "by_metastatic")
PSEUDO_COLUMNS = ("id", "j", "DURATION", "AGE", "YEAR", "death", "EXPO")

DEFAULT_FIELDS = {
    "id": "id",
    "age": "age_dx",
    "year": "yr_dx",
    "months": "survival_months",
    "death": "death",
    "cause": "death_cause",
    "metastatic": "metastatic",
}


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


@dataclass(frozen=True)
class SurvivalRecord:
    id: str
    age_at_diagnosis: int
    year_of_diagnosis: int
    survival_months: int
    death_flag: int
    death_cause_matches: int | None = None
    metastatic: str = "M0"
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.survival_months < 0:
            raise DomainError(f"record {self.id}: survival_months must be non-negative")
        if self.death_flag not in (0, 1):
            raise DomainError(f"record {self.id}: death_flag must be 0 or 1")
        cause = self.death_flag if self.death_cause_matches is None else self.death_cause_matches
        if cause not in (0, 1) or cause > self.death_flag:
            raise DomainError(f"record {self.id}: cause-specific death requires a death")
        object.__setattr__(self, "death_cause_matches", cause)

    @property
    def survival_years(self) -> Fraction:
        return _exact(self.survival_months) / 12

    def died(self, cause_rule: str = "cause_specific") -> bool:
        if cause_rule == "all_cause":
            return bool(self.death_flag)
        if cause_rule == "cause_specific":
            return bool(self.death_cause_matches)
        if cause_rule == "by_metastatic":
            return bool(self.death_flag if self.metastatic == "M1" else self.death_cause_matches)
        raise SchemaError(f"unknown cause rule {cause_rule!r}; expected one of {CAUSE_RULES}")


@dataclass(frozen=True)
class PseudoRow:
    id: str
    j: int
    duration: int
    age: int
    year: int
    death: int
    exposure: Fraction
    covariates: dict = field(default_factory=dict)


def initial_exposure(survival_years, j: int, max_duration: int, died: bool) -> Fraction:
    """Fraction of year ``j`` (1-based) during which the individual is at risk.

    It is 1 for every year before the last, 1 in the last year when the
    individual dies there, and the part of the year survived otherwise.
    """
    if not 1 <= j <= max_duration:
        raise DomainError(f"interval {j} outside 1..{max_duration}")
    if j < max_duration or died:
        return Fraction(1)
    e = _exact(survival_years) - (j - 1)
    if e <= 0:
        raise InternalConsistency(f"survival of {survival_years} years does not reach interval {j}")
    return min(e, Fraction(1))


def balducci_rate(deaths, alive_at_start, withdrawal_fractions: Sequence[float] = ()) -> float:
    """Mortality rate ``d / (l - w + sum(c))`` under the Balducci assumption.

    ``withdrawal_fractions`` holds, for each of the ``w`` withdrawals, the
    fraction of the interval spent under observation before leaving.
    """
    if alive_at_start <= 0:
        raise DomainError("alive_at_start must be positive")
    if deaths < 0:
        raise DomainError("deaths must be non-negative")
    c = [float(x) for x in withdrawal_fractions]
    if any(not 0.0 < x < 1.0 for x in c):
        raise DomainError("withdrawal fractions must lie in (0, 1)")
    exposure = alive_at_start - len(c) + math.fsum(c)
    if exposure <= 0:
        raise DegenerateExposure(f"central exposure is {exposure}")
    return deaths / exposure


def five_year_rate(records: Iterable[SurvivalRecord], cause_rule: str = "cause_specific"):
    """Five-year mortality rate ``sum(d) / sum(e)`` over a cohort.

    A death counts when it matches ``cause_rule`` and occurs before five
    years. Exposure is 1 for anyone who died (of any cause) or survived five
    years, and survival/5 for the others.
    """
    records = list(records)
    if not records:
        return UNDEFINED
    states = {r.metastatic for r in records if r.metastatic is not None}
    if len(states) > 1 and cause_rule == "by_metastatic":
        raise FormatError(f"cohort mixes metastatic states {sorted(states)}")
    five = Fraction(5)
    deaths = Fraction(0)
    exposure = Fraction(0)
    for r in records:
        s = r.survival_years
        if r.died(cause_rule) and s < five:
            deaths += 1
        exposure += 1 if (r.death_flag or s >= five) else s / five
    if exposure == 0:
        return UNDEFINED
    return float(deaths / exposure)


def max_duration(record: SurvivalRecord) -> int:
    return math.ceil(record.survival_years)


def expand_record(record: SurvivalRecord, cause_rule: str = "cause_specific") -> list:
    """Yearly rows of one individual.

    A death at diagnosis (0 months) yields a single row with exposure 1. An
    individual censored at 0 months was never at risk and yields no rows.
    """
    died = record.died(cause_rule)
    m = max_duration(record)
    if m == 0:
        if not died:
            return []
        m = 1
    rows = []
    for j in range(1, m + 1):
        rows.append(PseudoRow(
            id=record.id,
            j=j,
            duration=j - 1,
            age=record.age_at_diagnosis + j - 1,
            year=record.year_of_diagnosis + j - 1,
            death=int(died and j == m),
            exposure=initial_exposure(record.survival_years, j, m, died),
            covariates=dict(record.covariates),
        ))
    return rows


def build_pseudo_table(records: Iterable[SurvivalRecord], cause_rule: str = "cause_specific") -> list:
    out = []
    for r in records:
        out.extend(expand_record(r, cause_rule))
    return out


def format_exposure(e: Fraction, decimals: int | None = None) -> str:
    """Exposure as text; with ``decimals`` the value is rounded and trailing zeros removed."""
    if e == int(e):
        return str(int(e))
    if decimals is None:
        return repr(float(e))
    text = f"{float(e):.{decimals}f}".rstrip("0").rstrip(".")
    return text


def _parse_int(cell: str, what: str, line: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise FormatError(f"{what} {cell!r} is not a number", row=line) from None
    if not value.is_integer():
        raise FormatError(f"{what} {cell!r} is not an integer", row=line)
    return int(value)


def read_survival_csv(path, fields: dict | None = None) -> list:
    """Survival records from a CSV file; unmapped columns pass through as covariates."""
    fields = {**DEFAULT_FIELDS, **(fields or {})}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("file is empty; a header row is required") from None
        required = ("id", "age", "year", "months", "death")
        missing = [fields[k] for k in required if fields[k] not in header]
        if missing:
            raise SchemaError(f"survival file lacks column(s): {', '.join(missing)}")
        pos = {k: header.index(v) for k, v in fields.items() if v in header}
        mapped = set(pos.values())
        extra = [(i, h) for i, h in enumerate(header) if i not in mapped]
        records = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(row)}", row=line)
            months = _parse_int(row[pos["months"]], "survival_months", line)
            if months < 0:
                raise FormatError(f"negative survival_months {months}", row=line)
            death = _parse_int(row[pos["death"]], "death flag", line)
            cause = _parse_int(row[pos["cause"]], "cause flag", line) if "cause" in pos else None
            try:
                records.append(SurvivalRecord(
                    id=row[pos["id"]],
                    age_at_diagnosis=_parse_int(row[pos["age"]], "age", line),
                    year_of_diagnosis=_parse_int(row[pos["year"]], "year", line),
                    survival_months=months,
                    death_flag=death,
                    death_cause_matches=cause,
                    metastatic=row[pos["metastatic"]] if "metastatic" in pos else "M0",
                    covariates={h: row[i] for i, h in extra},
                ))
            except DomainError as exc:
                raise FormatError(str(exc), row=line) from None
    return records


def write_pseudo_csv(rows: Sequence[PseudoRow], path, covariate_names: Sequence[str] = (),
                     decimals: int | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*PSEUDO_COLUMNS, *covariate_names])
        for r in rows:
            writer.writerow([r.id, r.j, r.duration, r.age, r.year, r.death,
                             format_exposure(r.exposure, decimals),
                             *(r.covariates.get(c, "") for c in covariate_names)])
