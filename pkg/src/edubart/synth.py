"""Synthetic LMS entity generator with known ground truth.

Produces the same six-file layout the feature pipeline reads, driven by a
small number of effect knobs: a per-school random intercept, additive
quintile effects, and a usage effect acting on each student's latent
activity intensity. Ground truth (school effects, latent intensities) is
returned so recovery can be checked downstream.

Each student draws from an independent RNG substream keyed by
``(seed, student index)``, so output is reproducible record for record.
"""

import json
import math
import os
from calendar import monthrange
from dataclasses import dataclass
from datetime import date

import numpy as np

from .entities import (
    SCORE_MAX,
    SCORE_MIN,
    DEPARTMENTS,
    ActivityAttempt,
    AssignedActivity,
    ClassInfo,
    EntitySet,
    MessageDay,
    Student,
    TestResult,
    resolve_enrollment,
    write_entities,
)
from .errors import InvalidInputError

BASE_SCORE = 512.0  # centers the default mix near a 40% below-benchmark share
YEAR = 2021
ACTIVITY_POOL = 1000

# mean monthly activity count multiplier; mild bumps echo the school calendar
SEASON = {3: 0.9, 4: 1.15, 5: 1.0, 6: 0.95, 7: 0.8, 8: 1.15, 9: 1.0, 10: 1.0, 11: 0.85}


@dataclass
class SynthConfig:
    n_students: int = 5000
    n_schools: int = 100
    quintile_mix: tuple = (0.2, 0.2, 0.2, 0.2, 0.2)
    months: int = 11  # generate activity for months 3..months
    sigma_u: float = 15.0
    usage_effect: float = 25.0
    quintile_effects: tuple = (-18.0, -9.0, 0.0, 9.0, 18.0)
    noise_sd: float = 60.0
    seed: int = 20210301

    def validate(self):
        if abs(sum(self.quintile_mix) - 1.0) > 1e-9 or len(self.quintile_mix) != 5:
            raise InvalidInputError("quintile_mix must be 5 proportions summing to 1")
        if self.n_schools < 2:
            raise InvalidInputError("need at least 2 schools")
        if self.noise_sd <= 0:
            raise InvalidInputError("noise_sd must be positive")
        if self.n_students < self.n_schools:
            raise InvalidInputError(
                f"degenerate config: {self.n_students} students < "
                f"{self.n_schools} schools"
            )
        if not 3 <= self.months <= 11:
            raise InvalidInputError("months must be in 3..11")
        if len(self.quintile_effects) != 5:
            raise InvalidInputError("quintile_effects must have 5 entries")
        if self.sigma_u < 0:
            raise InvalidInputError("sigma_u must be >= 0")


@dataclass
class GroundTruth:
    school_effects: dict  # school id -> u_g (score points)
    intensities: dict  # student id -> latent mean monthly activity count
    config: SynthConfig

    def to_json(self):
        return {
            "school_effects": self.school_effects,
            "intensities": self.intensities,
            "config": {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in self.config.__dict__.items()
            },
        }


def _rng(*key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def generate(config):
    """Generate an entity set plus its ground truth."""
    config.validate()
    n, g = config.n_students, config.n_schools
    rng = _rng(config.seed, 0)

    # schools: quintile blocks by mix, random department/zone, u_g ~ N(0, sigma_u^2)
    school_ids = [f"S{i:04d}" for i in range(g)]
    counts = _proportional_counts(g, config.quintile_mix)
    school_quintile = []
    for q, c in enumerate(counts, start=1):
        school_quintile += [q] * c
    school_dept = rng.choice(len(DEPARTMENTS), size=g)
    school_zone = rng.random(g) < 0.75
    u = rng.normal(0.0, config.sigma_u, size=g) if config.sigma_u > 0 else np.zeros(g)

    # students spread as evenly as possible over schools
    per_school = [n // g + (1 if i < n % g else 0) for i in range(g)]
    student_school = []
    for si, c in enumerate(per_school):
        student_school += [si] * c

    # two classes per school (one if tiny), teacher assignments per class
    classes = []
    class_ids_by_school = []
    for si, sid in enumerate(school_ids):
        k = 2 if per_school[si] >= 10 else 1
        ids = [f"{sid}-C{j + 1}" for j in range(k)]
        class_ids_by_school.append(ids)
        classes += [ClassInfo(cid, sid) for cid in ids]

    assigned = []
    assigned_by_class = {}
    pool = [f"A{i:04d}" for i in range(ACTIVITY_POOL)]
    for ci, cls in enumerate(classes):
        crng = _rng(config.seed, 1, ci)
        seen = set()
        items = []
        for mm in range(3, config.months + 1):
            n_assign = 2 + crng.poisson(5)
            days = monthrange(YEAR, mm)[1]
            for _ in range(n_assign):
                aid = pool[int(crng.integers(ACTIVITY_POOL))]
                if aid in seen:
                    continue
                seen.add(aid)
                d = date(YEAR, mm, int(crng.integers(1, days + 1)))
                items.append(AssignedActivity(cls.class_id, aid, d))
        items.sort(key=lambda x: (x.date, x.activity_id))
        assigned += items
        assigned_by_class[cls.class_id] = items

    # phase 1: latent intensities (first draw of each student's substream)
    student_rngs = [_rng(config.seed, 2, i) for i in range(n)]
    log_lam = np.empty(n)
    for i, srng in enumerate(student_rngs):
        q = school_quintile[student_school[i]]
        log_lam[i] = srng.normal(math.log(5.0) + 0.20 * (q - 3), 0.55)
    lam = np.exp(log_lam)
    spread = lam.std()
    z_usage = (lam - lam.mean()) / spread if spread > 0 else np.zeros(n)

    students, attempts, messages, tests = [], [], [], []
    for i, srng in enumerate(student_rngs):
        si = student_school[i]
        sid = f"P{i:05d}"
        q = school_quintile[si]
        students.append(
            Student(
                sid,
                school_ids[si],
                DEPARTMENTS[school_dept[si]],
                "Urban" if school_zone[si] else "Rural",
                q,
            )
        )

        class_choices = class_ids_by_school[si]
        cls = class_choices[int(srng.integers(len(class_choices)))]
        switch_month = None
        if len(class_choices) > 1 and srng.random() < 0.08:
            switch_month = int(srng.integers(5, 10))
            other = [c for c in class_choices if c != cls]
            cls_after = other[int(srng.integers(len(other)))]
        acc_p = srng.uniform(0.40, 0.90)
        used = set()

        for mm in range(3, config.months + 1):
            month_cls = cls
            if switch_month is not None and mm >= switch_month:
                month_cls = cls_after
            days = monthrange(YEAR, mm)[1]
            mean_act = lam[i] * SEASON[mm]
            n_act = int(srng.poisson(srng.gamma(3.0, mean_act / 3.0)))
            month_end = date(YEAR, mm, days)
            avail = [
                x.activity_id
                for x in assigned_by_class[month_cls]
                if x.date <= month_end and x.activity_id not in used
            ]
            for _ in range(n_act):
                if avail:
                    aid = avail.pop(int(srng.integers(len(avail))))
                else:
                    aid = pool[int(srng.integers(ACTIVITY_POOL))]
                    if aid in used:
                        continue
                used.add(aid)
                d = date(YEAR, mm, int(srng.integers(1, days + 1)))
                times = int(srng.geometric(0.6))
                questions = int(srng.integers(3, 13))
                correct = int(srng.binomial(questions, acc_p))
                pts_max = round(float(srng.uniform(40.0, 100.0)), 1)
                pts_min = (
                    pts_max
                    if times == 1
                    else round(float(srng.uniform(20.0, pts_max)), 1)
                )
                attempts.append(
                    ActivityAttempt(
                        sid, month_cls, aid, d, times, questions, correct, pts_min, pts_max
                    )
                )

            n_msg_days = min(int(srng.poisson(0.35 * mean_act)), days)
            msg_days = sorted(
                int(dd) for dd in srng.choice(days, size=n_msg_days, replace=False)
            )
            for dd in msg_days:
                sent = int(srng.poisson(1.2))
                received = int(srng.poisson(1.5))
                threads = int(srng.poisson(0.7))
                if sent + received + threads == 0:
                    continue
                messages.append(
                    MessageDay(sid, date(YEAR, mm, dd + 1), sent, received, threads)
                )

        score = float(
            BASE_SCORE
            + config.quintile_effects[q - 1]
            + config.usage_effect * z_usage[i]
            + u[si]
            + srng.normal(0.0, config.noise_sd)
        )
        score = min(max(round(score, 2), SCORE_MIN), SCORE_MAX)
        test_day = date(YEAR, 11, int(srng.integers(15, 31)))
        tests.append(TestResult(sid, test_day, score))

    entities = EntitySet(
        students=students,
        classes=classes,
        attempts=attempts,
        assigned=assigned,
        messages=messages,
        tests=tests,
        assignments=resolve_enrollment(attempts, classes),
    )
    truth = GroundTruth(
        school_effects={school_ids[si]: float(u[si]) for si in range(g)},
        intensities={f"P{i:05d}": float(lam[i]) for i in range(n)},
        config=config,
    )
    return entities, truth


def _proportional_counts(total, proportions):
    """Largest-remainder apportionment of `total` into len(proportions) bins."""
    raw = [total * p for p in proportions]
    counts = [int(x) for x in raw]
    rem = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:rem]:
        counts[i] += 1
    return counts


def write_dataset(out_dir, entities, truth):
    """Write the six entity files plus ground_truth.json."""
    os.makedirs(out_dir, exist_ok=True)
    write_entities(out_dir, entities)
    with open(os.path.join(out_dir, "ground_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, sort_keys=True, indent=1)
        fh.write("\n")
