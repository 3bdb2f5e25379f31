"""Monthly-cumulative feature matrix built from the entity collections.

One row per retained student (has a test result, at least one activity, and a
reconstructed class). For a cutoff month m, the matrix carries three static
predictors plus one 17-column block per month mm in 3..m. Cumulative columns
sum events dated up to the end of mm; within-month ratio columns are missing
(NaN) for months without activity and tree models route missing values
explicitly. Categorical predictors are integer-coded with dictionaries frozen
at build time and stored in the JSON sidecar next to the matrix.
"""

import csv
import json
from calendar import monthrange
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .entities import (
    DEPARTMENTS,
    class_active_on,
    dedup_tests,
    make_response,
    resolve_enrollment,
)
from .errors import InvalidInputError

MONTH_LO = 3
MONTH_HI = 11

# per-month block layout: (name, kind); `class_lb` is the only categorical
BLOCK_COLUMNS = (
    ("cum_act", "num"),
    ("cum_qs", "num"),
    ("cum_correct", "num"),
    ("att_prom", "num"),
    ("activ_prom", "num"),
    ("qs_prom", "num"),
    ("pts_min", "num"),
    ("pts_max", "num"),
    ("acc", "num"),
    ("cum_days", "num"),
    ("cum_attempts", "num"),
    ("cum_assign_act", "num"),
    ("perc_act_done", "num"),
    ("cum_mess_send", "num"),
    ("cum_mess_rec", "num"),
    ("cum_mess_thr", "num"),
    ("class_lb", "cat"),
)

STATIC_COLUMNS = (("department", "cat"), ("zone", "num"), ("quintile", "num"))


@dataclass
class FeatureMatrix:
    """Numeric predictor matrix plus schema, grouping, and response."""

    X: np.ndarray  # float64 (n, p), NaN = missing
    columns: list
    col_kind: list  # "num" | "cat" per column
    usage_cols: list  # bool per column: numeric monthly-block column
    cat_maps: dict  # column -> {label: code}
    y: np.ndarray  # int8 (n,)
    group_codes: np.ndarray  # int64 (n,) index into group_labels
    group_labels: list  # school ids
    student_ids: list
    month: int
    extra: dict = field(default_factory=dict)

    @property
    def cat_feature_idx(self):
        return [i for i, k in enumerate(self.col_kind) if k == "cat"]

    def schema(self):
        return {"columns": list(self.columns), "col_kind": list(self.col_kind)}


def _month_of(d):
    return d.month


def _month_end(year, mm):
    return date(year, mm, monthrange(year, mm)[1])


def build_features(entities, cutoff_month):
    """Build one FeatureRow per retained student, blocks for mm in 3..cutoff."""
    if not MONTH_LO <= cutoff_month <= MONTH_HI:
        raise InvalidInputError(
            f"cutoff month must be in [{MONTH_LO}, {MONTH_HI}], got {cutoff_month}"
        )
    months = range(MONTH_LO, cutoff_month + 1)

    tests = dedup_tests(entities.tests)
    assignments = entities.assignments or resolve_enrollment(
        entities.attempts, entities.classes
    )
    assign_by_student = {}
    for a in assignments:
        assign_by_student.setdefault(a.student_id, []).append(a)

    attempts_by_student = {}
    for a in entities.attempts:
        attempts_by_student.setdefault(a.student_id, []).append(a)
    messages_by_student = {}
    for m in entities.messages:
        messages_by_student.setdefault(m.student_id, []).append(m)
    assigned_by_class = {}
    for x in entities.assigned:
        assigned_by_class.setdefault(x.class_id, []).append(x)

    retained = sorted(
        s.id
        for s in entities.students
        if s.id in tests and s.id in attempts_by_student and s.id in assign_by_student
    )
    students = {s.id: s for s in entities.students}
    if retained:
        year = min(a.date for a in entities.attempts).year
    else:
        year = date.today().year

    dept_map = {name: i for i, name in enumerate(DEPARTMENTS)}
    class_ids = sorted({c.class_id for c in entities.classes})
    class_map = {cid: i for i, cid in enumerate(class_ids)}

    columns = [name for name, _ in STATIC_COLUMNS]
    col_kind = [kind for _, kind in STATIC_COLUMNS]
    usage = [False] * len(STATIC_COLUMNS)
    for mm in months:
        for name, kind in BLOCK_COLUMNS:
            columns.append(f"{name}_{mm}")
            col_kind.append(kind)
            usage.append(kind == "num")

    group_labels = sorted({students[sid].school_id for sid in retained})
    group_map = {g: i for i, g in enumerate(group_labels)}

    n = len(retained)
    X = np.full((n, len(columns)), np.nan)
    y = np.zeros(n, dtype=np.int8)
    group_codes = np.zeros(n, dtype=np.int64)

    for row, sid in enumerate(retained):
        s = students[sid]
        y[row] = make_response(tests[sid])
        group_codes[row] = group_map[s.school_id]
        X[row, 0] = dept_map[s.department]
        X[row, 1] = 1.0 if s.zone == "Urban" else 0.0
        X[row, 2] = float(s.quintile)

        col = len(STATIC_COLUMNS)
        atts = attempts_by_student[sid]
        msgs = messages_by_student.get(sid, [])
        own = assign_by_student[sid]

        # assignments that reached the student: dated inside an enrollment interval
        reached = []
        for a in own:
            for x in assigned_by_class.get(a.class_id, []):
                if a.enroll_date <= x.date and (
                    a.unenroll_date is None or x.date <= a.unenroll_date
                ):
                    reached.append(x.date)

        for mm in months:
            end = _month_end(year, mm)
            upto = [a for a in atts if a.date <= end]
            inm = [a for a in atts if _month_of(a.date) == mm]
            cum_act = len(upto)
            cum_qs = sum(a.questions for a in upto)
            cum_correct = sum(a.correct for a in upto)
            cum_days = len({a.date for a in upto})
            cum_attempts = sum(a.times_completed for a in upto)
            cum_assign = sum(1 for d in reached if d <= end)
            if inm:
                n_rows = len(inm)
                att_prom = sum(a.times_completed for a in inm) / n_rows
                activ_prom = n_rows / len({a.date for a in inm})
                qs_in = sum(a.questions for a in inm)
                qs_prom = qs_in / n_rows
                pts_min = sum(a.pts_min for a in inm) / n_rows
                pts_max = sum(a.pts_max for a in inm) / n_rows
                acc = sum(a.correct for a in inm) / qs_in if qs_in else np.nan
            else:
                att_prom = activ_prom = qs_prom = pts_min = pts_max = acc = np.nan
            perc_done = cum_act / cum_assign if cum_assign else 0.0
            mess_send = sum(m.sent for m in msgs if m.date <= end)
            mess_rec = sum(m.received for m in msgs if m.date <= end)
            mess_thr = sum(m.threads for m in msgs if m.date <= end)
            active = class_active_on(own, end)
            class_code = float(class_map[active]) if active is not None else np.nan

            X[row, col : col + 17] = [
                cum_act,
                cum_qs,
                cum_correct,
                att_prom,
                activ_prom,
                qs_prom,
                pts_min,
                pts_max,
                acc,
                cum_days,
                cum_attempts,
                cum_assign,
                perc_done,
                mess_send,
                mess_rec,
                mess_thr,
                class_code,
            ]
            col += 17

    cat_maps = {"department": dept_map}
    for mm in months:
        cat_maps[f"class_lb_{mm}"] = class_map
    return FeatureMatrix(
        X=X,
        columns=columns,
        col_kind=col_kind,
        usage_cols=usage,
        cat_maps=cat_maps,
        y=y,
        group_codes=group_codes,
        group_labels=group_labels,
        student_ids=list(retained),
        month=cutoff_month,
    )


# --- text + sidecar round trip ---------------------------------------------


def _fmt_cell(v):
    if np.isnan(v):
        return ""
    return repr(float(v))


def write_features(csv_path, fm):
    """Write the matrix as CSV plus a JSON sidecar at `<csv_path>.json`."""
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["student_id", "school_id"] + list(fm.columns) + ["reachA2_1"])
        for i, sid in enumerate(fm.student_ids):
            row = [sid, fm.group_labels[fm.group_codes[i]]]
            row += [_fmt_cell(v) for v in fm.X[i]]
            row.append(str(int(fm.y[i])))
            writer.writerow(row)
    sidecar = {
        "columns": list(fm.columns),
        "col_kind": list(fm.col_kind),
        "usage_cols": list(fm.usage_cols),
        "cat_maps": fm.cat_maps,
        "month": fm.month,
        "group_labels": list(fm.group_labels),
        "response": "reachA2_1",
        "extra": fm.extra,
    }
    with open(f"{csv_path}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_features(csv_path):
    """Read a matrix written by `write_features`."""
    with open(f"{csv_path}.json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    columns = sidecar["columns"]
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["student_id", "school_id"] + columns + ["reachA2_1"]:
            raise InvalidInputError(f"{csv_path}: header does not match sidecar")
        student_ids, schools, rows, ys = [], [], [], []
        for rec in reader:
            student_ids.append(rec[0])
            schools.append(rec[1])
            rows.append([float(c) if c else np.nan for c in rec[2:-1]])
            ys.append(int(rec[-1]))
    group_labels = sidecar["group_labels"]
    group_map = {g: i for i, g in enumerate(group_labels)}
    group_codes = np.array([group_map[s] for s in schools], dtype=np.int64)
    return FeatureMatrix(
        X=np.asarray(rows, dtype=np.float64).reshape(len(rows), len(columns)),
        columns=columns,
        col_kind=sidecar["col_kind"],
        usage_cols=sidecar["usage_cols"],
        cat_maps=sidecar["cat_maps"],
        y=np.asarray(ys, dtype=np.int8),
        group_codes=group_codes,
        group_labels=group_labels,
        student_ids=student_ids,
        month=sidecar["month"],
        extra=sidecar.get("extra", {}),
    )
