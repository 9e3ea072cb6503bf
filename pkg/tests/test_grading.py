"""Objective grading, essay marking, scratch cards and result checking."""

import json
import random
import threading
from datetime import timedelta

import pytest

from securexam.exam_model import validate_exam
from securexam.grading import (
    PIN_DIGITS,
    STATUS_FINAL,
    STATUS_PARTIAL,
    AlreadyFinalized,
    BadCredentials,
    BadPin,
    CardAlreadyIssued,
    CardUsed,
    EmbargoActive,
    ExamMismatch,
    MarkOutOfRange,
    NoScriptOnRecord,
    NoSuchCard,
    NotAnEssayQuestion,
    ResultNotFinal,
    ResultsDesk,
    Score,
    ScratchCard,
    grade_objective,
    record_essay_mark,
)
from securexam.scheduling import Sitting, load_roster
from securexam.sessions import AnswerScript

from conftest import EXAM_START, exam_draft, roster_csv


class FakeRng:
    """secrets-shaped deterministic source for reproducible issuance."""

    def __init__(self, seed=0):
        self._r = random.Random(seed)

    def randbelow(self, bound):
        return self._r.randrange(bound)

    def token_bytes(self, n):
        return self._r.randbytes(n)

    def token_hex(self, n):
        return self.token_bytes(n).hex()


def make_exam(n_objective=10, n_essay=0):
    return validate_exam(exam_draft(n_objective=n_objective, n_essay=n_essay))


def script_for(exam, reg_no, answers, at=None):
    base = {q.id: "" for q in exam.questions}
    base.update(answers)
    return AnswerScript(reg_no=reg_no, exam_id=exam.exam_id,
                        sitting_id=f"{exam.exam_id}-s000", answers=base,
                        submitted_at=at or EXAM_START + timedelta(minutes=20),
                        termination="candidate-submitted")


def make_desk(exam, n=5, embargo_hours=24):
    records = load_roster(roster_csv(n))
    by_reg = {r.reg_no: r for r in records}
    desk = ResultsDesk(embargo_hours=embargo_hours,
                       roster_lookup=by_reg.get)
    desk.register_exam(exam)
    return desk, records


def make_sitting(exam):
    return Sitting(sitting_id=f"{exam.exam_id}-s000", exam_id=exam.exam_id,
                   course_code=exam.course_code, day_index=0,
                   start_time=EXAM_START, capacity=500, assigned=[])


# ---------------------------------------------------------------------------
# Objective grading
# ---------------------------------------------------------------------------

def brute_force_marks(exam, answers):
    marks = 0
    for q in exam.questions:
        if q.kind == "objective" and answers.get(q.id) == q.correct_option:
            marks += 1
    return marks


def test_all_correct_scores_full_marks():
    exam = make_exam(10)
    answers = {q.id: q.correct_option for q in exam.questions}
    score = grade_objective(script_for(exam, "r1", answers), exam)
    assert score.objective_marks == 10
    assert score.total == 10
    assert score.max_total == 10
    assert score.status == STATUS_FINAL


def test_blanks_and_wrong_labels_score_zero():
    exam = make_exam(4)
    q = exam.questions
    answers = {q[0].id: q[0].correct_option, q[1].id: "", q[2].id: "Z"}
    score = grade_objective(script_for(exam, "r1", answers), exam)
    assert score.objective_marks == 1


def test_one_mark_per_objective_question():
    exam = make_exam(6)
    for i, q in enumerate(exam.questions):
        answers = {q.id: q.correct_option}
        score = grade_objective(script_for(exam, "r1", answers), exam)
        assert score.objective_marks == 1


def test_grading_matches_brute_force_oracle():
    rng = random.Random(500)
    exam = make_exam(20)
    ids = [q.id for q in exam.questions]
    for trial in range(100):
        answers = {}
        for qid in rng.sample(ids, rng.randint(0, 20)):
            answers[qid] = rng.choice(["A", "B", "C", "D", "E", "", "x"])
        score = grade_objective(script_for(exam, f"r{trial}", answers), exam)
        assert score.objective_marks == brute_force_marks(exam, answers)


def test_script_for_another_exam_rejected():
    exam = make_exam(4)
    other = validate_exam(exam_draft(exam_id="PHY102-2016",
                                     course_code="PHY102"))
    with pytest.raises(ExamMismatch):
        grade_objective(script_for(other, "r1", {}), exam)


def test_status_is_partial_while_essays_await_marking():
    exam = make_exam(5, n_essay=2)
    score = grade_objective(script_for(exam, "r1", {}), exam)
    assert score.status == STATUS_PARTIAL
    assert score.essay_marks == {}


def test_score_round_trips_through_json():
    exam = make_exam(5, n_essay=1)
    score = grade_objective(script_for(exam, "r1", {}), exam)
    record_essay_mark(score, exam, "e01", 3, "marker-1", at=EXAM_START)
    back = Score.from_json(score.to_json())
    assert back.to_json() == score.to_json()
    assert back.total == score.total


# ---------------------------------------------------------------------------
# Essay marking
# ---------------------------------------------------------------------------

def test_essay_marks_accumulate_into_the_total():
    exam = make_exam(5, n_essay=2)
    score = grade_objective(
        script_for(exam, "r1",
                   {q.id: q.correct_option for q in exam.questions
                    if q.kind == "objective"}), exam)
    essays = [q for q in exam.questions if q.kind == "essay"]
    record_essay_mark(score, exam, essays[0].id, 4, "marker-1")
    assert score.status == STATUS_PARTIAL  # one essay still unmarked
    record_essay_mark(score, exam, essays[1].id, essays[1].max_marks, "marker-1")
    assert score.status == STATUS_FINAL
    assert score.total == 5 + 4 + essays[1].max_marks


def test_remarking_overwrites_with_an_audit_trail():
    exam = make_exam(2, n_essay=1)
    score = grade_objective(script_for(exam, "r1", {}), exam)
    record_essay_mark(score, exam, "e01", 2, "marker-1", at=EXAM_START)
    record_essay_mark(score, exam, "e01", 5, "moderator",
                      at=EXAM_START + timedelta(hours=1))
    assert score.essay_marks["e01"] == 5
    assert [(e["awarded"], e["overwrites"]) for e in score.mark_audit] == \
        [(2, None), (5, 2)]
    assert score.mark_audit[1]["marker_id"] == "moderator"


def test_marking_an_objective_question_rejected():
    exam = make_exam(2, n_essay=1)
    score = grade_objective(script_for(exam, "r1", {}), exam)
    with pytest.raises(NotAnEssayQuestion):
        record_essay_mark(score, exam, "q01", 3, "marker-1")
    with pytest.raises(NotAnEssayQuestion):
        record_essay_mark(score, exam, "nope", 3, "marker-1")


@pytest.mark.parametrize("bad", [-1, 99, 2.5, True, "3"])
def test_out_of_range_awards_rejected(bad):
    exam = make_exam(2, n_essay=1)  # e01 max_marks from the draft builder
    score = grade_objective(script_for(exam, "r1", {}), exam)
    with pytest.raises(MarkOutOfRange):
        record_essay_mark(score, exam, "e01", bad, "marker-1")


def test_award_of_zero_and_of_max_are_both_legal():
    exam = make_exam(2, n_essay=1)
    max_marks = exam.question("e01").max_marks
    score = grade_objective(script_for(exam, "r1", {}), exam)
    record_essay_mark(score, exam, "e01", 0, "marker-1")
    record_essay_mark(score, exam, "e01", max_marks, "marker-1")
    assert score.essay_marks["e01"] == max_marks


def test_released_scores_are_frozen():
    exam = make_exam(2, n_essay=1)
    score = grade_objective(script_for(exam, "r1", {}), exam)
    record_essay_mark(score, exam, "e01", 5, "marker-1")
    score.released = True
    with pytest.raises(AlreadyFinalized):
        record_essay_mark(score, exam, "e01", 9, "marker-1")


# ---------------------------------------------------------------------------
# Results desk and scratch cards
# ---------------------------------------------------------------------------

def graded_desk(n_essay=0, n=5, embargo_hours=24):
    exam = make_exam(10, n_essay=n_essay)
    desk, records = make_desk(exam, n=n, embargo_hours=embargo_hours)
    for r in records:
        answers = {q.id: q.correct_option for q in exam.questions
                   if q.kind == "objective"}
        desk.grade_script(script_for(exam, r.reg_no, answers))
    return exam, desk, records


def test_desk_requires_registration_before_grading():
    exam = make_exam(3)
    desk = ResultsDesk(roster_lookup=lambda r: None)
    with pytest.raises(ExamMismatch):
        desk.grade_script(script_for(exam, "r1", {}))


def test_desk_essay_marking_requires_a_script():
    exam, desk, records = graded_desk(n_essay=1)
    with pytest.raises(NoScriptOnRecord):
        desk.record_essay_mark("2099/9/99999ZZ", exam.exam_id, "e01", 3, "m")
    desk.record_essay_mark(records[0].reg_no, exam.exam_id, "e01", 3, "m")
    assert desk.score_for(records[0].reg_no, exam.exam_id).status == STATUS_FINAL


def test_card_issuance_shape():
    exam, desk, records = graded_desk()
    card, pin = desk.issue_scratch_card(records[0].reg_no, make_sitting(exam),
                                        rng=FakeRng(7))
    assert len(pin) == PIN_DIGITS and pin.isdigit()
    assert card.reg_no == records[0].reg_no
    assert card.release_time == EXAM_START + timedelta(minutes=30, hours=24)
    assert not card.used and not card.voided
    # salted hash only; the PIN itself appears nowhere on the card
    assert pin not in json.dumps(card.to_json())
    assert ScratchCard.from_json(card.to_json()).to_json() == card.to_json()


def test_card_issuance_is_reproducible_with_injected_randomness():
    exam, desk, records = graded_desk()
    exam2, desk2, records2 = graded_desk()
    c1, p1 = desk.issue_scratch_card(records[0].reg_no, make_sitting(exam),
                                     rng=FakeRng(11))
    c2, p2 = desk2.issue_scratch_card(records2[0].reg_no, make_sitting(exam2),
                                      rng=FakeRng(11))
    assert p1 == p2
    assert c1.pin_salt == c2.pin_salt


def test_card_requires_a_script():
    exam, desk, records = graded_desk(n=3)
    with pytest.raises(NoScriptOnRecord):
        desk.issue_scratch_card("2099/9/99999ZZ", make_sitting(exam))


def test_second_card_needs_an_administrative_void():
    exam, desk, records = graded_desk()
    reg = records[0].reg_no
    desk.issue_scratch_card(reg, make_sitting(exam))
    with pytest.raises(CardAlreadyIssued):
        desk.issue_scratch_card(reg, make_sitting(exam))
    desk.void_card(reg, exam.exam_id)
    card, pin = desk.issue_scratch_card(reg, make_sitting(exam))
    assert not card.voided


def test_void_requires_an_existing_card():
    exam, desk, records = graded_desk()
    with pytest.raises(NoSuchCard):
        desk.void_card(records[0].reg_no, exam.exam_id)


def test_pins_are_distinct_across_ten_thousand_issuances():
    exam = make_exam(1)
    records = load_roster(roster_csv(10_000))
    by_reg = {r.reg_no: r for r in records}
    desk = ResultsDesk(roster_lookup=by_reg.get)
    desk.register_exam(exam)
    sitting = make_sitting(exam)
    pins = set()
    for r in records:
        desk.grade_script(script_for(exam, r.reg_no, {}))
        _, pin = desk.issue_scratch_card(r.reg_no, sitting)
        pins.add(pin)
    assert len(pins) == 10_000


# ---------------------------------------------------------------------------
# Result checking
# ---------------------------------------------------------------------------

def redeemable_desk(**kw):
    exam, desk, records = graded_desk(**kw)
    reg = records[0].reg_no
    identity = records[0].identity_no
    card, pin = desk.issue_scratch_card(reg, make_sitting(exam))
    return exam, desk, reg, identity, pin, card


AFTER_RELEASE = EXAM_START + timedelta(minutes=30, hours=24)


def test_successful_check_consumes_the_card():
    exam, desk, reg, identity, pin, card = redeemable_desk()
    score = desk.check_result(reg, identity, pin, AFTER_RELEASE)
    assert score.objective_marks == 10
    assert score.released
    assert card.used
    with pytest.raises(CardUsed):
        desk.check_result(reg, identity, pin, AFTER_RELEASE)


def test_bad_credentials_outrank_everything():
    exam, desk, reg, identity, pin, card = redeemable_desk()
    with pytest.raises(BadCredentials):
        desk.check_result("2099/9/99999ZZ", identity, pin, AFTER_RELEASE)
    with pytest.raises(BadCredentials):
        desk.check_result(reg, "ID-WRONG", pin, AFTER_RELEASE)


def test_wrong_pin_reported_before_card_state():
    exam, desk, reg, identity, pin, card = redeemable_desk()
    wrong = "0" * 12 if pin != "0" * 12 else "1" * 12
    with pytest.raises(BadPin):
        desk.check_result(reg, identity, wrong, AFTER_RELEASE)
    assert not card.used


def test_embargo_holds_until_release_time():
    exam, desk, reg, identity, pin, card = redeemable_desk()
    with pytest.raises(EmbargoActive):
        desk.check_result(reg, identity, pin,
                          AFTER_RELEASE - timedelta(seconds=1))
    assert not card.used  # embargo failures leave the card redeemable
    desk.check_result(reg, identity, pin, AFTER_RELEASE)


def test_unfinished_essay_marking_blocks_release_without_burning_the_card():
    exam, desk, reg, identity, pin, card = redeemable_desk(n_essay=1)
    with pytest.raises(ResultNotFinal):
        desk.check_result(reg, identity, pin, AFTER_RELEASE)
    assert not card.used
    desk.record_essay_mark(reg, exam.exam_id, "e01", 5, "marker-1")
    score = desk.check_result(reg, identity, pin, AFTER_RELEASE)
    assert score.status == STATUS_FINAL
    assert score.total == 10 + 5


def test_voided_card_pin_no_longer_matches():
    exam, desk, reg, identity, pin, card = redeemable_desk()
    desk.void_card(reg, exam.exam_id)
    with pytest.raises(BadPin):
        desk.check_result(reg, identity, pin, AFTER_RELEASE)


def test_pin_selects_the_right_card_across_exams():
    exam = make_exam(10)
    other = validate_exam(exam_draft(exam_id="PHY102-2016",
                                     course_code="PHY102", n_objective=8))
    records = load_roster(roster_csv(2))
    by_reg = {r.reg_no: r for r in records}
    desk = ResultsDesk(roster_lookup=by_reg.get)
    desk.register_exam(exam)
    desk.register_exam(other)
    reg, identity = records[0].reg_no, records[0].identity_no
    desk.grade_script(script_for(exam, reg,
                                 {q.id: q.correct_option
                                  for q in exam.questions}))
    desk.grade_script(script_for(other, reg, {}))
    _, pin_a = desk.issue_scratch_card(reg, make_sitting(exam))
    _, pin_b = desk.issue_scratch_card(reg, make_sitting(other))
    score = desk.check_result(reg, identity, pin_a, AFTER_RELEASE)
    assert score.exam_id == exam.exam_id
    assert score.objective_marks == 10
    score = desk.check_result(reg, identity, pin_b, AFTER_RELEASE)
    assert score.exam_id == other.exam_id


def test_concurrent_redemption_single_success():
    exam, desk, reg, identity, pin, card = redeemable_desk()
    outcomes = []
    guard = threading.Lock()
    barrier = threading.Barrier(100)

    def attempt():
        barrier.wait()
        try:
            desk.check_result(reg, identity, pin, AFTER_RELEASE)
            result = "ok"
        except CardUsed:
            result = "used"
        with guard:
            outcomes.append(result)

    threads = [threading.Thread(target=attempt) for _ in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert outcomes.count("ok") == 1
    assert outcomes.count("used") == 99


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def test_export_matches_registry_upload_format():
    exam, desk, records = graded_desk(n_essay=1, n=3)
    desk.record_essay_mark(records[0].reg_no, exam.exam_id, "e01", 4, "m")
    csv_text = desk.export_results_csv(exam.exam_id)
    lines = csv_text.strip().splitlines()
    assert lines[0] == ("reg_no,course_code,objective_marks,"
                        "essay_marks_total,total,max_total,status")
    assert len(lines) == 4
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["reg_no"] == records[0].reg_no
    assert row["course_code"] == exam.course_code
    assert row["objective_marks"] == "10"
    assert row["essay_marks_total"] == "4"
    assert row["total"] == "14"
    assert row["max_total"] == str(exam.max_total)
    assert row["status"] == STATUS_FINAL
    # unmarked candidates still export, flagged partial
    assert lines[2].endswith(STATUS_PARTIAL)


def test_export_for_unregistered_exam_rejected():
    desk = ResultsDesk(roster_lookup=lambda r: None)
    with pytest.raises(ExamMismatch):
        desk.export_results_csv("ghost")
