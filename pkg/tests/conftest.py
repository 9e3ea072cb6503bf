from __future__ import annotations

import random

import pytest

from securexam import exam_model, sealing, scheduling
from securexam.center import ExamCenter
from securexam.clock import ManualClock, utc
from securexam.stores import StoreLayout

EXAM_START = utc(2016, 7, 1, 9, 0)


def objective_question(i: int, correct: str = "B", n_options: int = 4,
                       prompt: str | None = None) -> dict:
    labels = "ABCDEF"[:n_options]
    return {
        "id": f"q{i:02d}",
        "kind": "objective",
        "prompt": prompt or f"Objective question number {i}?",
        "options": [{"label": lab, "text": f"choice {lab} for {i}"}
                    for lab in labels],
        "correct_option": correct,
    }


def essay_question(i: int, max_marks: int = 10) -> dict:
    return {
        "id": f"e{i:02d}",
        "kind": "essay",
        "prompt": f"Discuss topic number {i} in detail.",
        "max_marks": max_marks,
    }


def exam_draft(exam_id: str = "ENG101-2016", course_code: str = "ENG101",
               n_objective: int = 20, n_essay: int = 0,
               duration_minutes: int = 30, rng: random.Random | None = None,
               design: str = "paper-replacement") -> dict:
    rng = rng or random.Random(0)
    questions = [objective_question(i, correct=rng.choice("ABCD"))
                 for i in range(1, n_objective + 1)]
    questions += [essay_question(i, max_marks=rng.randint(5, 20))
                  for i in range(1, n_essay + 1)]
    return {
        "exam_id": exam_id,
        "title": f"{course_code} examination",
        "course_code": course_code,
        "duration_minutes": duration_minutes,
        "design": design,
        "questions": questions,
        "resources": [],
    }


def roster_csv(n: int, course_code: str = "ENG101", base_score: int = 150,
               score_step: int = 1) -> str:
    rows = ["reg_no,identity_no,full_name,course_code,eligibility_score"]
    for i in range(n):
        rows.append(f"2016/1/{i:05d}PA,ID{i:05d},Candidate Number {i},"
                    f"{course_code},{base_score + (i % 120) * score_step}")
    return "\n".join(rows) + "\n"


@pytest.fixture(scope="session")
def author_keys():
    return sealing.generate_keypair("lecturer")


@pytest.fixture(scope="session")
def center_keys():
    return sealing.generate_keypair("center")


@pytest.fixture
def clock():
    # an hour before the canonical 09:00 start so sittings can be opened
    return ManualClock(utc(2016, 7, 1, 8, 0))


@pytest.fixture
def stores(tmp_path):
    return StoreLayout.at(tmp_path / "questions", tmp_path / "candidates")


@pytest.fixture
def center(stores, center_keys, author_keys, clock):
    c = ExamCenter(stores, center_keys, clock)
    c.register_author_key("dvc-office", author_keys)
    return c


def sealed_blob(draft: dict, author, center_pub) -> bytes:
    exam = exam_model.validate_exam(draft)
    return sealing.seal_exam(exam, author, [center_pub]).to_bytes()


def stage_sitting(center: ExamCenter, author_keys, *, draft: dict | None = None,
                  n_candidates: int = 5, capacity: int = 500,
                  cutoff: int = 0, first_start=EXAM_START):
    """Upload + roster + schedule + open; returns (exam, sitting_id, ready)."""
    draft = draft or exam_draft()
    exam = exam_model.validate_exam(draft)
    blob = sealing.seal_exam(exam, author_keys,
                             [center._center_keys.public_only()]).to_bytes()
    center.upload_package(blob)
    center.ingest_roster(roster_csv(n_candidates,
                                    course_code=exam.course_code))
    eligible = scheduling.filter_eligible(center.roster, cutoff)
    schedule = scheduling.plan_sittings(
        eligible, exam.exam_id, capacity, days_available=30,
        sittings_per_day=3, first_start=first_start)
    center.set_schedule(schedule)
    sitting_id = schedule.sittings[0].sitting_id
    ready = center.open_sitting(sitting_id)
    return exam, sitting_id, ready
