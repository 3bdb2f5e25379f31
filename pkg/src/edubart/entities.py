"""Entity schema for the LMS data, cleaning rules, and the six-file text layout.

Entities mirror the platform's export: students, classes, per-activity
attempt records (carrying the class the student worked in), class-level
activity assignments, daily message aggregates, and adaptive English test
results. Class membership is never given directly; it is reconstructed from
the first activity record per class (`resolve_enrollment`).
"""

import csv
import math
import os
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, timedelta
from enum import IntEnum

from .errors import InvalidInputError

DEPARTMENTS = (
    "Artigas",
    "Canelones",
    "Cerro Largo",
    "Colonia",
    "Durazno",
    "Flores",
    "Florida",
    "Lavalleja",
    "Maldonado",
    "Montevideo",
    "Paysandú",
    "Río Negro",
    "Rivera",
    "Rocha",
    "Salto",
    "San José",
    "Soriano",
    "Tacuarembó",
    "Treinta y Tres",
)

SCORE_MIN = 225.21
SCORE_MAX = 900.0

# lower-inclusive cut points: level i covers [cuts[i-1], cuts[i])
LEVEL_CUTS = (372.9, 444.4, 495.5, 527.9, 599.4)
PASS_SCORE = 495.5  # reaching this score or better counts as reaching A2.1


class Level(IntEnum):
    PRE_A1 = 0
    A1_1 = 1
    A1_2 = 2
    A2_1 = 3
    A2_2 = 4
    B1 = 5

    @property
    def label(self):
        return _LEVEL_LABELS[self]


_LEVEL_LABELS = {
    Level.PRE_A1: "Pre-A1",
    Level.A1_1: "A1.1",
    Level.A1_2: "A1.2",
    Level.A2_1: "A2.1",
    Level.A2_2: "A2.2",
    Level.B1: "B1",
}
_LABEL_TO_LEVEL = {v: k for k, v in _LEVEL_LABELS.items()}


def map_score_to_level(score):
    """Map a test score to its proficiency level (lower-inclusive intervals)."""
    if not isinstance(score, (int, float)) or not math.isfinite(score):
        raise InvalidInputError(f"test score must be finite, got {score!r}")
    return Level(bisect_right(LEVEL_CUTS, score))


@dataclass(slots=True)
class Student:
    id: str
    school_id: str
    department: str
    zone: str  # "Rural" | "Urban"
    quintile: int

    def __post_init__(self):
        if self.quintile not in (1, 2, 3, 4, 5):
            raise InvalidInputError(
                f"student {self.id}: quintile must be 1..5, got {self.quintile}"
            )
        if self.department not in DEPARTMENTS:
            raise InvalidInputError(
                f"student {self.id}: unknown department {self.department!r}"
            )
        if self.zone not in ("Rural", "Urban"):
            raise InvalidInputError(
                f"student {self.id}: zone must be Rural or Urban, got {self.zone!r}"
            )


@dataclass(slots=True)
class ClassInfo:
    class_id: str
    school_id: str


@dataclass(slots=True)
class TestResult:
    student_id: str
    date: date
    score: float
    level: Level | None = None

    def __post_init__(self):
        expected = map_score_to_level(self.score)
        if self.level is None:
            self.level = expected
        elif self.level != expected:
            raise InvalidInputError(
                f"test for {self.student_id}: level {self.level.label} does not "
                f"match score {self.score} (expected {expected.label})"
            )
        if not SCORE_MIN <= self.score <= SCORE_MAX:
            raise InvalidInputError(
                f"test for {self.student_id}: score {self.score} outside "
                f"[{SCORE_MIN}, {SCORE_MAX}]"
            )


@dataclass(slots=True)
class ActivityAttempt:
    student_id: str
    class_id: str
    activity_id: str
    date: date
    times_completed: int
    questions: int
    correct: int
    pts_min: float
    pts_max: float

    def __post_init__(self):
        if self.correct > self.questions:
            raise InvalidInputError(
                f"attempt {self.student_id}/{self.activity_id}: "
                f"correct {self.correct} > questions {self.questions}"
            )
        if self.pts_min > self.pts_max:
            raise InvalidInputError(
                f"attempt {self.student_id}/{self.activity_id}: "
                f"pts_min {self.pts_min} > pts_max {self.pts_max}"
            )
        if self.times_completed == 1 and self.pts_min != self.pts_max:
            raise InvalidInputError(
                f"attempt {self.student_id}/{self.activity_id}: single attempt "
                "must have pts_min == pts_max"
            )


@dataclass(slots=True)
class MessageDay:
    student_id: str
    date: date
    sent: int
    received: int
    threads: int

    def __post_init__(self):
        if min(self.sent, self.received, self.threads) < 0:
            raise InvalidInputError(
                f"messages for {self.student_id} on {self.date}: negative count"
            )


@dataclass(slots=True)
class AssignedActivity:
    class_id: str
    activity_id: str
    date: date


@dataclass(slots=True)
class ClassAssignment:
    student_id: str
    class_id: str
    enroll_date: date
    unenroll_date: date | None = None  # None = still enrolled


@dataclass(slots=True)
class EntitySet:
    students: list
    classes: list
    attempts: list
    assigned: list
    messages: list
    tests: list
    assignments: list  # derived by resolve_enrollment


def dedup_tests(results):
    """Keep one test per student: earliest date, lowest score on ties.

    Returns a dict keyed by student id.
    """
    best = {}
    for r in results:
        cur = best.get(r.student_id)
        if cur is None or (r.date, r.score) < (cur.date, cur.score):
            best[r.student_id] = r
    return best


def make_response(test):
    """Binary outcome: 1 iff the deduped test reaches A2.1 or higher."""
    return 1 if test.score >= PASS_SCORE else 0


def resolve_enrollment(attempts, known_classes=None):
    """Reconstruct class membership intervals from activity records.

    A student joins a class on the date of their first activity in it; the
    previous class ends the day before. The most recent class stays open.
    Classes with an earlier first-activity date come first; a later activity
    in an already-left class does not reopen it.
    """
    if known_classes is not None:
        known = {c.class_id for c in known_classes}
        for a in attempts:
            if a.class_id not in known:
                raise InvalidInputError(
                    f"attempt for {a.student_id}: unknown class {a.class_id!r}"
                )
    first_date = {}
    for a in attempts:
        key = (a.student_id, a.class_id)
        if key not in first_date or a.date < first_date[key]:
            first_date[key] = a.date
    per_student = {}
    for (student_id, class_id), d in first_date.items():
        per_student.setdefault(student_id, []).append((d, class_id))
    assignments = []
    for student_id in sorted(per_student):
        entries = sorted(per_student[student_id])
        for i, (d, class_id) in enumerate(entries):
            end = entries[i + 1][0] - timedelta(days=1) if i + 1 < len(entries) else None
            assignments.append(ClassAssignment(student_id, class_id, d, end))
    return assignments


def class_active_on(assignments, when):
    """Class id active on a date, or None. `assignments` is one student's list."""
    for a in assignments:
        if a.enroll_date <= when and (a.unenroll_date is None or when <= a.unenroll_date):
            return a.class_id
    return None


# --- six-file text layout -------------------------------------------------

_FILES = {
    "students": ("students.csv", ["id", "school_id", "department", "zone", "quintile"]),
    "classes": ("classes.csv", ["class_id", "school_id"]),
    "attempts": (
        "activity_attempts.csv",
        [
            "student_id",
            "class_id",
            "activity_id",
            "date",
            "times_completed",
            "questions",
            "correct",
            "pts_min",
            "pts_max",
        ],
    ),
    "assigned": ("assigned_activities.csv", ["class_id", "activity_id", "date"]),
    "messages": ("messages.csv", ["student_id", "date", "sent", "received", "threads"]),
    "tests": ("tests.csv", ["student_id", "date", "score", "level"]),
}


def _fmt(value):
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_entities(out_dir, entities):
    """Write the six entity files (sorted by natural key) into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    e = entities
    _write_rows(
        os.path.join(out_dir, _FILES["students"][0]),
        _FILES["students"][1],
        sorted(
            (s.id, s.school_id, s.department, s.zone, s.quintile) for s in e.students
        ),
    )
    _write_rows(
        os.path.join(out_dir, _FILES["classes"][0]),
        _FILES["classes"][1],
        sorted((c.class_id, c.school_id) for c in e.classes),
    )
    _write_rows(
        os.path.join(out_dir, _FILES["attempts"][0]),
        _FILES["attempts"][1],
        sorted(
            (
                a.student_id,
                a.class_id,
                a.activity_id,
                a.date,
                a.times_completed,
                a.questions,
                a.correct,
                a.pts_min,
                a.pts_max,
            )
            for a in e.attempts
        ),
    )
    _write_rows(
        os.path.join(out_dir, _FILES["assigned"][0]),
        _FILES["assigned"][1],
        sorted((x.class_id, x.activity_id, x.date) for x in e.assigned),
    )
    _write_rows(
        os.path.join(out_dir, _FILES["messages"][0]),
        _FILES["messages"][1],
        sorted(
            (m.student_id, m.date, m.sent, m.received, m.threads) for m in e.messages
        ),
    )
    _write_rows(
        os.path.join(out_dir, _FILES["tests"][0]),
        _FILES["tests"][1],
        sorted((t.student_id, t.date, t.score, t.level.label) for t in e.tests),
    )


def _read_rows(path, expected_header):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != expected_header:
            raise InvalidInputError(
                f"{path}: expected columns {expected_header}, got {header}"
            )
        return list(reader)


def read_entities(data_dir):
    """Read the six entity files, validate them, and derive class assignments."""

    def path_of(key):
        return os.path.join(data_dir, _FILES[key][0])

    students = [
        Student(r[0], r[1], r[2], r[3], int(r[4]))
        for r in _read_rows(path_of("students"), _FILES["students"][1])
    ]
    classes = [
        ClassInfo(r[0], r[1]) for r in _read_rows(path_of("classes"), _FILES["classes"][1])
    ]
    attempts = [
        ActivityAttempt(
            r[0],
            r[1],
            r[2],
            date.fromisoformat(r[3]),
            int(r[4]),
            int(r[5]),
            int(r[6]),
            float(r[7]),
            float(r[8]),
        )
        for r in _read_rows(path_of("attempts"), _FILES["attempts"][1])
    ]
    assigned = [
        AssignedActivity(r[0], r[1], date.fromisoformat(r[2]))
        for r in _read_rows(path_of("assigned"), _FILES["assigned"][1])
    ]
    messages = [
        MessageDay(r[0], date.fromisoformat(r[1]), int(r[2]), int(r[3]), int(r[4]))
        for r in _read_rows(path_of("messages"), _FILES["messages"][1])
    ]
    tests = [
        TestResult(r[0], date.fromisoformat(r[1]), float(r[2]), _LABEL_TO_LEVEL[r[3]])
        for r in _read_rows(path_of("tests"), _FILES["tests"][1])
    ]
    assignments = resolve_enrollment(attempts, classes)
    return EntitySet(students, classes, attempts, assigned, messages, tests, assignments)
