"""Feature pipeline: definitions recomputed by independent scans, invariants."""

from datetime import date

import numpy as np
import pytest

import edubart.entities as entities
from edubart.entities import (
    ActivityAttempt,
    AssignedActivity,
    ClassInfo,
    EntitySet,
    MessageDay,
    Student,
    resolve_enrollment,
)
from edubart.errors import InvalidInputError
from edubart.features import build_features, read_features, write_features


def _tiny_entities():
    students = [
        Student("s1", "S1", "Montevideo", "Urban", 3),
        Student("s2", "S1", "Montevideo", "Urban", 3),
        Student("s3", "S2", "Salto", "Rural", 1),  # no attempts: filtered out
    ]
    classes = [ClassInfo("c1", "S1"), ClassInfo("c2", "S2")]
    attempts = [
        # s1: 4 activity records in March, 6 in April
        *[
            ActivityAttempt("s1", "c1", f"a{i}", date(2021, 3, 2 + i), 2, 5, 4, 10.0, 20.0)
            for i in range(4)
        ],
        *[
            ActivityAttempt("s1", "c1", f"b{i}", date(2021, 4, 1 + i), 1, 5, 4, 15.0, 15.0)
            for i in range(6)
        ],
        # s2: one March record with 10 questions, 7 correct
        ActivityAttempt("s2", "c1", "z1", date(2021, 3, 10), 3, 10, 7, 30.0, 60.0),
    ]
    assigned = [
        AssignedActivity("c1", "a0", date(2021, 3, 1)),
        AssignedActivity("c1", "b9", date(2021, 4, 2)),
        AssignedActivity("c1", "q5", date(2021, 9, 1)),
    ]
    messages = [
        MessageDay("s1", date(2021, 3, 4), 2, 1, 1),
        MessageDay("s1", date(2021, 5, 6), 0, 3, 1),
    ]
    tests = [
        entities.TestResult("s1", date(2021, 11, 20), 520.0),
        entities.TestResult("s2", date(2021, 11, 21), 430.0),
        entities.TestResult("s3", date(2021, 11, 21), 470.0),
    ]
    return EntitySet(
        students, classes, attempts, assigned, messages, tests,
        resolve_enrollment(attempts, classes),
    )


def _col(fm, name):
    return fm.X[:, fm.columns.index(name)]


def _row(fm, sid):
    return fm.student_ids.index(sid)


class TestBuildFeatures:
    def test_filters_students_without_activity(self):
        fm = build_features(_tiny_entities(), 5)
        assert fm.student_ids == ["s1", "s2"]

    def test_cumulative_activities(self):
        fm = build_features(_tiny_entities(), 4)
        r = _row(fm, "s1")
        assert _col(fm, "cum_act_3")[r] == 4
        assert _col(fm, "cum_act_4")[r] == 10

    def test_accuracy_from_independent_scan(self):
        entities = _tiny_entities()
        fm = build_features(entities, 3)
        r = _row(fm, "s2")
        # independent recomputation from the raw event log
        qs = sum(a.questions for a in entities.attempts
                 if a.student_id == "s2" and a.date.month == 3)
        ok = sum(a.correct for a in entities.attempts
                 if a.student_id == "s2" and a.date.month == 3)
        assert qs == 10 and ok == 7
        assert _col(fm, "acc_3")[r] == pytest.approx(0.7)

    def test_month_blocks_limited_to_cutoff(self):
        fm = build_features(_tiny_entities(), 5)
        months = {
            int(c.rsplit("_", 1)[1])
            for c in fm.columns
            if c.rsplit("_", 1)[-1].isdigit()
        }
        assert months == {3, 4, 5}

    def test_empty_month_ratios_are_missing(self):
        fm = build_features(_tiny_entities(), 5)
        r = _row(fm, "s2")  # s2 only active in March
        for name in ("att_prom_5", "activ_prom_5", "qs_prom_5", "acc_5",
                     "pts_min_5", "pts_max_5"):
            assert np.isnan(_col(fm, name)[r])
        # cumulative columns stay defined
        assert _col(fm, "cum_act_5")[r] == 1

    def test_ratio_definitions(self):
        entities = _tiny_entities()
        fm = build_features(entities, 3)
        r = _row(fm, "s1")
        march = [a for a in entities.attempts
                 if a.student_id == "s1" and a.date.month == 3]
        assert _col(fm, "att_prom_3")[r] == pytest.approx(
            sum(a.times_completed for a in march) / len(march)
        )
        assert _col(fm, "activ_prom_3")[r] == pytest.approx(
            len(march) / len({a.date for a in march})
        )
        assert _col(fm, "pts_max_3")[r] == pytest.approx(
            sum(a.pts_max for a in march) / len(march)
        )

    def test_perc_act_done_zero_when_nothing_assigned(self):
        entities = _tiny_entities()
        entities = EntitySet(
            entities.students, entities.classes, entities.attempts, [],
            entities.messages, entities.tests, entities.assignments,
        )
        fm = build_features(entities, 3)
        assert (_col(fm, "perc_act_done_3") == 0.0).all()

    def test_message_cumulatives(self):
        fm = build_features(_tiny_entities(), 5)
        r = _row(fm, "s1")
        assert _col(fm, "cum_mess_send_3")[r] == 2
        assert _col(fm, "cum_mess_rec_5")[r] == 4
        assert _col(fm, "cum_mess_thr_5")[r] == 2

    def test_response(self):
        fm = build_features(_tiny_entities(), 3)
        assert fm.y[_row(fm, "s1")] == 1  # 520 reaches the benchmark
        assert fm.y[_row(fm, "s2")] == 0

    def test_invalid_month_rejected(self):
        for bad in (2, 12, 0):
            with pytest.raises(InvalidInputError):
                build_features(_tiny_entities(), bad)


class TestInvariants:
    def test_cumulative_non_decreasing(self, small_features):
        fm = small_features
        for name in ("cum_act", "cum_qs", "cum_correct", "cum_days",
                     "cum_attempts", "cum_assign_act", "cum_mess_send"):
            prev = None
            for mm in range(3, fm.month + 1):
                cur = _col(fm, f"{name}_{mm}")
                if prev is not None:
                    assert (cur >= prev).all(), name
                prev = cur

    def test_smaller_cutoff_is_column_subset(self, small_dataset):
        entities, _ = small_dataset
        fm3 = build_features(entities, 3)
        fm5 = build_features(entities, 5)
        assert set(fm3.columns) < set(fm5.columns)
        assert fm3.student_ids == fm5.student_ids
        for i, c in enumerate(fm3.columns):
            j = fm5.columns.index(c)
            a, b = fm3.X[:, i], fm5.X[:, j]
            assert np.array_equal(a, b, equal_nan=True), c

    def test_deterministic(self, small_dataset):
        entities, _ = small_dataset
        a = build_features(entities, 4)
        b = build_features(entities, 4)
        assert np.array_equal(a.X, b.X, equal_nan=True)
        assert a.columns == b.columns and a.student_ids == b.student_ids

    def test_block_width(self, small_features):
        fm = small_features
        n_months = fm.month - 2
        assert len(fm.columns) == 3 + 17 * n_months

    def test_acc_bounds(self, small_features):
        acc_cols = [c for c in small_features.columns if c.startswith("acc_")]
        for c in acc_cols:
            v = _col(small_features, c)
            v = v[~np.isnan(v)]
            assert ((v >= 0) & (v <= 1)).all()


def test_csv_sidecar_round_trip(tmp_path, small_features):
    path = str(tmp_path / "features.csv")
    write_features(path, small_features)
    back = read_features(path)
    assert back.columns == small_features.columns
    assert back.student_ids == small_features.student_ids
    assert np.array_equal(back.X, small_features.X, equal_nan=True)
    assert np.array_equal(back.y, small_features.y)
    assert np.array_equal(back.group_codes, small_features.group_codes)
    assert back.month == small_features.month
    assert back.col_kind == small_features.col_kind
