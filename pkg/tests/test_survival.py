import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairbasis.errors import DegenerateExposure, DomainError, FormatError, InternalConsistency, SchemaError
from fairbasis.glm import fit_weighted_logistic
from fairbasis.survival import (
    SurvivalRecord,
    balducci_rate,
    build_pseudo_table,
    expand_record,
    five_year_rate,
    format_exposure,
    initial_exposure,
    read_survival_csv,
    write_pseudo_csv,
)
from fairbasis.undefined import is_undefined

DATA = Path(__file__).parent / "data"
RAW_CSV = (DATA / "raw_survival.csv").read_text()
PSEUDO_CSV = (DATA / "pseudo_expected.csv").read_text()

records = st.builds(
    lambda i, months, death, cause: SurvivalRecord(str(i), 40, 2000, months, death, cause * death),
    st.integers(0, 10**6), st.integers(0, 240), st.integers(0, 1), st.integers(0, 1),
)


def rec(months, death=0, cause=None, metastatic="M0"):
    return SurvivalRecord("x", 50, 2000, months, death, cause, metastatic)


class TestInitialExposure:
    def test_died(self):
        assert initial_exposure(Fraction(4, 12), 1, 1, True) == 1

    def test_partial_last_year(self):
        e = initial_exposure(Fraction(25, 12), 3, 3, False)
        assert e == Fraction(1, 12)
        assert round(float(e), 2) == 0.08

    def test_full_interval(self):
        assert initial_exposure(Fraction(36, 12), 3, 3, False) == 1
        assert initial_exposure(Fraction(25, 12), 1, 3, False) == 1

    def test_inconsistent(self):
        with pytest.raises(InternalConsistency):
            initial_exposure(Fraction(2), 3, 3, False)
        with pytest.raises(DomainError):
            initial_exposure(Fraction(2), 0, 3, False)


class TestBalducci:
    def test_hand_value(self):
        assert balducci_rate(1, 10, (0.5, 0.5)) == pytest.approx(1 / 9, abs=1e-15)

    def test_no_withdrawals(self):
        assert balducci_rate(3, 12) == 0.25

    def test_no_deaths(self):
        assert balducci_rate(0, 5, (0.2,)) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateExposure):
            balducci_rate(0, 1, (0.5, 0.4))
        with pytest.raises(DomainError):
            balducci_rate(1, 0)
        with pytest.raises(DomainError):
            balducci_rate(1, 5, (1.0,))

    @given(st.integers(0, 50), st.integers(1, 200),
           st.lists(st.floats(0.01, 0.99), max_size=30))
    def test_actuarial_oracle(self, d, l, c):
        if len(c) >= l:
            return
        exposure = l
        for x in c:
            exposure -= 1 - x
        assert balducci_rate(d, l, c) == pytest.approx(d / exposure, rel=1e-12)


class TestFiveYear:
    def test_dead_at_three_years(self):
        assert five_year_rate([rec(36, 1, 1)]) == 1.0

    def test_censored_at_two_and_a_half(self):
        assert five_year_rate([rec(30)]) == 0.0

    def test_half_exposure(self):
        # one death (e=1) plus one censored at 2.5 years (e=0.5)
        assert five_year_rate([rec(36, 1, 1), rec(30)]) == pytest.approx(1 / 1.5)

    def test_death_after_five_years_not_counted(self):
        assert five_year_rate([rec(70, 1, 1), rec(12, 1, 1)]) == 0.5

    def test_cause_rules(self):
        other_cause = rec(24, 1, 0, "M1")
        assert five_year_rate([other_cause], "cause_specific") == 0.0
        assert five_year_rate([other_cause], "all_cause") == 1.0
        assert five_year_rate([other_cause], "by_metastatic") == 1.0
        assert five_year_rate([rec(24, 1, 0, "M0")], "by_metastatic") == 0.0

    def test_mixed_cohort_rejected(self):
        with pytest.raises(FormatError):
            five_year_rate([rec(1, metastatic="M0"), rec(1, metastatic="M1")], "by_metastatic")

    def test_empty(self):
        assert is_undefined(five_year_rate([]))
        assert is_undefined(five_year_rate([rec(0)]))

    def test_unknown_rule(self):
        with pytest.raises(SchemaError):
            five_year_rate([rec(5, 1)], "sometimes")


class TestPseudoTable:
    def test_individual_one(self):
        rows = expand_record(SurvivalRecord("1", 25, 2002, 25, 0))
        assert [(r.age, r.year, r.death) for r in rows] == [(25, 2002, 0), (26, 2003, 0), (27, 2004, 0)]
        assert [format_exposure(r.exposure, 2) for r in rows] == ["1", "1", "0.08"]

    def test_individual_two(self):
        rows = expand_record(SurvivalRecord("2", 37, 2004, 4, 1))
        assert len(rows) == 1 and rows[0].death == 1 and rows[0].exposure == 1

    def test_individual_three(self):
        rows = expand_record(SurvivalRecord("3", 56, 2010, 58, 1))
        assert len(rows) == 5
        assert [r.duration for r in rows] == [0, 1, 2, 3, 4]
        assert rows[-1].death == 1 and rows[-1].exposure == 1
        assert sum(r.death for r in rows) == 1

    def test_zero_months(self):
        (row,) = expand_record(rec(0, 1))
        assert (row.death, row.exposure) == (1, 1)
        assert expand_record(rec(0, 0)) == []

    def test_other_cause_death_is_censoring(self):
        rows = expand_record(rec(30, 1, 0))
        assert rows[-1].death == 0
        assert rows[-1].exposure == Fraction(1, 2)

    def test_csv_round(self, tmp_path):
        src = tmp_path / "raw.csv"
        src.write_text(RAW_CSV)
        rows = build_pseudo_table(read_survival_csv(src))
        write_pseudo_csv(rows, tmp_path / "p.csv", decimals=2)
        assert (tmp_path / "p.csv").read_text() == PSEUDO_CSV

    def test_exact_exposures_by_default(self):
        assert format_exposure(Fraction(1, 12)) == repr(1 / 12)
        assert format_exposure(Fraction(1, 2), 2) == "0.5"

    @given(st.lists(records, max_size=20))
    def test_exposure_sums(self, recs):
        for r in recs:
            mine = expand_record(r)
            if not mine:
                assert r.survival_months == 0 and not r.died()
                continue
            total = sum(p.exposure for p in mine)
            deaths = sum(p.death for p in mine)
            assert deaths <= 1
            if r.died():
                assert total == max(1, math.ceil(r.survival_years))
                assert mine[-1].death == 1
            else:
                assert total == r.survival_years
            for p in mine[:-1]:
                assert p.exposure == 1 and p.death == 0
            assert all(0 < p.exposure <= 1 for p in mine)


class TestReadCsv:
    def test_covariates_pass_through(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("id,age_dx,yr_dx,survival_months,death,sex\n7,60,2001,13,0,F\n")
        (r,) = read_survival_csv(p)
        assert r.covariates == {"sex": "F"}
        rows = build_pseudo_table([r])
        write_pseudo_csv(rows, tmp_path / "o.csv", ["sex"], decimals=2)
        assert (tmp_path / "o.csv").read_text().splitlines()[-1] == "7,2,1,61,2002,0,0.08,F"

    def test_field_mapping(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("pid,age,year,months,dead\n1,60,2001,13,1\n")
        (r,) = read_survival_csv(p, {"id": "pid", "age": "age", "year": "year", "months": "months", "death": "dead"})
        assert r.death_flag == 1 and r.survival_months == 13

    def test_errors(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("id,age_dx,yr_dx,survival_months,death\n1,60,2001,-2,0\n")
        with pytest.raises(FormatError) as info:
            read_survival_csv(p)
        assert info.value.row == 2
        p.write_text("id,age_dx,survival_months,death\n")
        with pytest.raises(SchemaError):
            read_survival_csv(p)
        p.write_text("")
        with pytest.raises(FormatError):
            read_survival_csv(p)
        p.write_text("id,age_dx,yr_dx,survival_months,death,death_cause\n1,60,2001,5,0,1\n")
        with pytest.raises(FormatError):
            read_survival_csv(p)


class TestGlmCrossOracle:
    @given(st.lists(records, min_size=1, max_size=30))
    def test_intercept_only_recovers_ratio(self, recs):
        rows = [r for r in build_pseudo_table(recs) if r.j == 1]
        d = np.array([r.death for r in rows], dtype=float)
        e = np.array([float(r.exposure) for r in rows])
        if not rows or d.sum() == 0 or d.sum() == e.sum():
            return
        model = fit_weighted_logistic(np.empty((len(rows), 0)), d, e)
        q = 1 / (1 + math.exp(-model.coefficients[0]))
        assert q == pytest.approx(d.sum() / e.sum(), abs=1e-10)
