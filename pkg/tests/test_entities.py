"""Entity cleaning rules: level mapping, test dedup, enrollment intervals."""

from datetime import date

import pytest

import edubart.entities as entities
from edubart.entities import (
    ActivityAttempt,
    ClassInfo,
    Level,
    Student,
    dedup_tests,
    make_response,
    map_score_to_level,
    read_entities,
    resolve_enrollment,
    write_entities,
)
from edubart.errors import InvalidInputError


class TestLevelMapping:
    @pytest.mark.parametrize(
        "score,level",
        [
            (500.0, Level.A2_1),
            (225.21, Level.PRE_A1),
            (900.0, Level.B1),
            (372.9, Level.A1_1),
            (444.4, Level.A1_2),
            (495.5, Level.A2_1),
            (527.9, Level.A2_2),
            (599.4, Level.B1),
            (372.8999, Level.PRE_A1),
            (599.3999, Level.A2_2),
        ],
    )
    def test_cut_points(self, score, level):
        assert map_score_to_level(score) == level

    def test_monotone(self):
        scores = [200.0 + 2.5 * i for i in range(300)]
        levels = [map_score_to_level(s) for s in scores]
        assert levels == sorted(levels)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            map_score_to_level(bad)

    def test_consistent_with_response(self):
        for score in [300.0, 495.4999, 495.5, 500.0, 599.4, 890.0]:
            t = entities.TestResult("s", date(2021, 11, 20), score)
            assert make_response(t) == (1 if map_score_to_level(score) >= Level.A2_1 else 0)


class TestDedup:
    def test_single_record(self):
        t = entities.TestResult("a", date(2021, 11, 1), 510.0)
        assert dedup_tests([t])["a"] is t

    def test_same_day_lowest_score(self):
        t1 = entities.TestResult("a", date(2021, 11, 1), 510.0)
        t2 = entities.TestResult("a", date(2021, 11, 1), 480.0)
        assert dedup_tests([t1, t2])["a"].score == 480.0

    def test_earliest_date_wins(self):
        t1 = entities.TestResult("a", date(2021, 11, 3), 600.0)
        t2 = entities.TestResult("a", date(2021, 11, 1), 510.0)
        assert dedup_tests([t1, t2])["a"].score == 510.0

    def test_one_row_per_student(self):
        tests = [
            entities.TestResult("a", date(2021, 11, 1), 510.0),
            entities.TestResult("b", date(2021, 11, 2), 430.0),
            entities.TestResult("a", date(2021, 11, 2), 520.0),
        ]
        out = dedup_tests(tests)
        assert sorted(out) == ["a", "b"]


def _attempt(student, cls, aid, when):
    return ActivityAttempt(student, cls, aid, when, 1, 5, 3, 50.0, 50.0)


class TestEnrollment:
    def test_single_class_open_ended(self):
        atts = [_attempt("s", "c1", "a1", date(2021, 3, 5))]
        (a,) = resolve_enrollment(atts)
        assert a.enroll_date == date(2021, 3, 5)
        assert a.unenroll_date is None

    def test_switch_day_before(self):
        atts = [
            _attempt("s", "c1", "a1", date(2021, 3, 5)),
            _attempt("s", "c2", "a2", date(2021, 6, 10)),
        ]
        first, second = resolve_enrollment(atts)
        assert first.class_id == "c1"
        assert first.unenroll_date == date(2021, 6, 9)
        assert second.enroll_date == date(2021, 6, 10)
        assert second.unenroll_date is None

    def test_interleaved_dates_first_activity_decides(self):
        # brute force over the date-sorted events: first activity per class
        atts = [
            _attempt("s", "c2", "a3", date(2021, 5, 2)),
            _attempt("s", "c1", "a1", date(2021, 3, 4)),
            _attempt("s", "c1", "a2", date(2021, 7, 1)),  # later work in old class
            _attempt("s", "c2", "a4", date(2021, 4, 20)),
        ]
        firsts = {}
        for a in sorted(atts, key=lambda a: a.date):
            firsts.setdefault(a.class_id, a.date)
        expected_order = sorted(firsts, key=firsts.get)
        got = resolve_enrollment(atts)
        assert [a.class_id for a in got] == expected_order
        assert got[0].unenroll_date == date(2021, 4, 19)

    def test_intervals_disjoint(self):
        atts = [
            _attempt("s", c, a, d)
            for c, a, d in [
                ("c1", "a1", date(2021, 3, 1)),
                ("c2", "a2", date(2021, 5, 1)),
                ("c3", "a3", date(2021, 9, 1)),
            ]
        ]
        out = resolve_enrollment(atts)
        for prev, nxt in zip(out, out[1:]):
            assert prev.unenroll_date < nxt.enroll_date

    def test_unknown_class_rejected(self):
        atts = [_attempt("s", "ghost", "a1", date(2021, 3, 5))]
        with pytest.raises(InvalidInputError):
            resolve_enrollment(atts, [ClassInfo("c1", "S1")])


class TestEntityValidation:
    def test_quintile_range(self):
        with pytest.raises(InvalidInputError):
            Student("s", "S1", "Montevideo", "Urban", 6)

    def test_correct_bounded_by_questions(self):
        with pytest.raises(InvalidInputError):
            ActivityAttempt("s", "c", "a", date(2021, 4, 1), 1, 5, 6, 10.0, 10.0)

    def test_single_attempt_equal_points(self):
        with pytest.raises(InvalidInputError):
            ActivityAttempt("s", "c", "a", date(2021, 4, 1), 1, 5, 3, 10.0, 20.0)

    def test_level_must_match_score(self):
        with pytest.raises(InvalidInputError):
            entities.TestResult("s", date(2021, 11, 1), 500.0, Level.B1)

    def test_score_range(self):
        with pytest.raises(InvalidInputError):
            entities.TestResult("s", date(2021, 11, 1), 100.0)


def test_entity_files_round_trip(tmp_path, small_dataset):
    entities, _ = small_dataset
    write_entities(tmp_path, entities)
    back = read_entities(tmp_path)
    assert len(back.students) == len(entities.students)
    assert len(back.attempts) == len(entities.attempts)
    assert len(back.tests) == len(entities.tests)
    assert len(back.assignments) == len(entities.assignments)
    a0 = sorted((a.student_id, a.class_id, a.enroll_date) for a in entities.assignments)
    a1 = sorted((a.student_id, a.class_id, a.enroll_date) for a in back.assignments)
    assert a0 == a1
