"""Automatic objective marking, essay mark capture, scratch-card results.

Objective scripts are marked by direct comparison against the answer key
(one mark per question, no negative marking); essays wait for a human
assessor, and a score only turns final once every essay question carries an
award.  Results are released through single-use scratch-card PINs that
unlock no earlier than the embargo (sitting end + 24 hours by default).
"""

from __future__ import annotations

import csv
import hmac
import io
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Callable

from .canonical import sha256_hex
from .errors import SecurexamError
from .exam_model import ESSAY, OBJECTIVE, ValidatedExam, answer_key
from .scheduling import CandidateRecord, Sitting
from .sessions import AnswerScript

PIN_DIGITS = 12
DEFAULT_EMBARGO_HOURS = 24

STATUS_PARTIAL = "partial"
STATUS_FINAL = "final"


class GradingError(SecurexamError):
    pass


class ExamMismatch(GradingError):
    pass


class NotAnEssayQuestion(GradingError):
    pass


class MarkOutOfRange(GradingError):
    pass


class AlreadyFinalized(GradingError):
    pass


class NoScriptOnRecord(GradingError):
    pass


class CardAlreadyIssued(GradingError):
    pass


class NoSuchCard(GradingError):
    pass


class BadCredentials(GradingError):
    pass


class BadPin(GradingError):
    pass


class CardUsed(GradingError):
    pass


class EmbargoActive(GradingError):
    pass


class ResultNotFinal(GradingError):
    pass


@dataclass
class Score:
    reg_no: str
    exam_id: str
    objective_marks: int
    essay_marks: dict[str, int]  # question_id -> awarded
    max_total: int
    status: str
    released: bool = False
    mark_audit: list[dict[str, Any]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.objective_marks + sum(self.essay_marks.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "reg_no": self.reg_no, "exam_id": self.exam_id,
            "objective_marks": self.objective_marks,
            "essay_marks": dict(self.essay_marks),
            "total": self.total, "max_total": self.max_total,
            "status": self.status, "released": self.released,
            "mark_audit": list(self.mark_audit),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Score":
        return cls(reg_no=data["reg_no"], exam_id=data["exam_id"],
                   objective_marks=data["objective_marks"],
                   essay_marks=dict(data["essay_marks"]),
                   max_total=data["max_total"], status=data["status"],
                   released=data.get("released", False),
                   mark_audit=list(data.get("mark_audit", [])))


@dataclass
class ScratchCard:
    card_id: str
    reg_no: str
    exam_id: str
    pin_salt: str  # hex
    pin_hash: str  # hex sha256(salt || pin)
    release_time: datetime
    used: bool = False
    voided: bool = False

    def to_json(self) -> dict[str, Any]:
        return {"card_id": self.card_id, "reg_no": self.reg_no,
                "exam_id": self.exam_id, "pin_salt": self.pin_salt,
                "pin_hash": self.pin_hash,
                "release_time": self.release_time.isoformat(),
                "used": self.used, "voided": self.voided}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ScratchCard":
        return cls(card_id=data["card_id"], reg_no=data["reg_no"],
                   exam_id=data["exam_id"], pin_salt=data["pin_salt"],
                   pin_hash=data["pin_hash"],
                   release_time=datetime.fromisoformat(data["release_time"]),
                   used=data["used"], voided=data.get("voided", False))


def _hash_pin(salt: bytes, pin: str) -> str:
    return sha256_hex(salt + pin.encode("ascii"))


def grade_objective(script: AnswerScript, exam: ValidatedExam) -> Score:
    """Mark every objective question; blanks and malformed labels score 0."""
    if script.exam_id != exam.exam_id:
        raise ExamMismatch(f"script is for {script.exam_id!r}, "
                           f"exam is {exam.exam_id!r}")
    key = answer_key(exam)
    marks = sum(1 for qid, correct in key.items()
                if script.answers.get(qid, "") == correct)
    has_essays = any(q.kind == ESSAY for q in exam.questions)
    return Score(
        reg_no=script.reg_no,
        exam_id=exam.exam_id,
        objective_marks=marks,
        essay_marks={},
        max_total=exam.max_total,
        status=STATUS_PARTIAL if has_essays else STATUS_FINAL,
    )


def record_essay_mark(score: Score, exam: ValidatedExam, question_id: str,
                      awarded: int, marker_id: str,
                      at: datetime | None = None) -> Score:
    """Record (or overwrite, with an audit entry) one essay award."""
    if score.released:
        raise AlreadyFinalized("results released; marks are frozen")
    try:
        question = exam.question(question_id)
    except KeyError:
        raise NotAnEssayQuestion(f"no question {question_id!r} in this exam")
    if question.kind != ESSAY:
        raise NotAnEssayQuestion(f"question {question_id!r} is not an essay")
    if not isinstance(awarded, int) or isinstance(awarded, bool) \
            or not (0 <= awarded <= question.max_marks):
        raise MarkOutOfRange(
            f"award must be an integer in [0, {question.max_marks}]")

    score.mark_audit.append({
        "question_id": question_id,
        "awarded": awarded,
        "marker_id": marker_id,
        "overwrites": score.essay_marks.get(question_id),
        "at": at.isoformat() if at else None,
    })
    score.essay_marks[question_id] = awarded
    essay_ids = {q.id for q in exam.questions if q.kind == ESSAY}
    score.status = STATUS_FINAL if essay_ids <= set(score.essay_marks) \
        else STATUS_PARTIAL
    return score


class ResultsDesk:
    """Scores and scratch cards for every graded script.

    Card redemption is an atomic test-and-set: many concurrent checks with
    one valid PIN yield exactly one success.  Plaintext PINs exist only in
    the return value of :meth:`issue_scratch_card`.
    """

    def __init__(self, *, embargo_hours: float = DEFAULT_EMBARGO_HOURS,
                 roster_lookup: Callable[[str], CandidateRecord | None] | None = None):
        self._exams: dict[str, ValidatedExam] = {}
        self._scores: dict[tuple[str, str], Score] = {}
        self._scripts: dict[tuple[str, str], AnswerScript] = {}
        self._cards: dict[tuple[str, str], ScratchCard] = {}
        self._embargo = timedelta(hours=embargo_hours)
        self._roster_lookup = roster_lookup or (lambda reg_no: None)
        self._redeem_lock = threading.Lock()

    def register_exam(self, exam: ValidatedExam) -> None:
        self._exams[exam.exam_id] = exam

    def exam(self, exam_id: str) -> ValidatedExam:
        if exam_id not in self._exams:
            raise ExamMismatch(f"exam {exam_id!r} not registered for grading")
        return self._exams[exam_id]

    # -- grading -----------------------------------------------------------

    def grade_script(self, script: AnswerScript) -> Score:
        exam = self.exam(script.exam_id)
        score = grade_objective(script, exam)
        self._scripts[(script.reg_no, script.exam_id)] = script
        self._scores[(script.reg_no, script.exam_id)] = score
        return score

    def score_for(self, reg_no: str, exam_id: str) -> Score | None:
        return self._scores.get((reg_no, exam_id))

    def scores_for_exam(self, exam_id: str) -> list[Score]:
        return [s for (_, eid), s in sorted(self._scores.items())
                if eid == exam_id]

    def script_for(self, reg_no: str, exam_id: str) -> AnswerScript | None:
        return self._scripts.get((reg_no, exam_id))

    def record_essay_mark(self, reg_no: str, exam_id: str, question_id: str,
                          awarded: int, marker_id: str,
                          at: datetime | None = None) -> Score:
        score = self._scores.get((reg_no, exam_id))
        if score is None:
            raise NoScriptOnRecord(f"no graded script for {reg_no}/{exam_id}")
        return record_essay_mark(score, self.exam(exam_id), question_id,
                                 awarded, marker_id, at=at)

    # -- scratch cards -------------------------------------------------------

    def issue_scratch_card(self, reg_no: str, sitting: Sitting,
                           rng=secrets) -> tuple[ScratchCard, str]:
        """One card per candidate per exam; the PIN is returned exactly once.

        ``rng`` must provide randbelow/token_bytes/token_hex (the secrets
        module shape); injectable so issuance is reproducible under test.
        """
        exam = self.exam(sitting.exam_id)
        if (reg_no, exam.exam_id) not in self._scripts:
            raise NoScriptOnRecord(f"{reg_no} has no script for this exam")
        existing = self._cards.get((reg_no, exam.exam_id))
        if existing is not None and not existing.voided:
            raise CardAlreadyIssued("reissue requires an administrative void")

        pin = "".join(str(rng.randbelow(10)) for _ in range(PIN_DIGITS))
        salt = rng.token_bytes(16)
        sitting_end = sitting.start_time + timedelta(
            minutes=exam.duration_minutes)
        card = ScratchCard(
            card_id=rng.token_hex(8),
            reg_no=reg_no,
            exam_id=exam.exam_id,
            pin_salt=salt.hex(),
            pin_hash=_hash_pin(salt, pin),
            release_time=sitting_end + self._embargo,
        )
        self._cards[(reg_no, exam.exam_id)] = card
        return card, pin

    def void_card(self, reg_no: str, exam_id: str) -> None:
        card = self._cards.get((reg_no, exam_id))
        if card is None:
            raise NoSuchCard(f"no card issued for {reg_no}/{exam_id}")
        card.voided = True

    def card_for(self, reg_no: str, exam_id: str) -> ScratchCard | None:
        return self._cards.get((reg_no, exam_id))

    def check_result(self, reg_no: str, identity_no: str, pin: str,
                     now: datetime, exam_id: str | None = None) -> Score:
        """Redeem a PIN: identity pair + unused card + embargo over + final.

        The card is consumed atomically on success only; embargo and
        finality failures leave it redeemable.
        """
        candidate = self._roster_lookup(reg_no)
        if candidate is None or candidate.identity_no != identity_no:
            raise BadCredentials("identity pair does not match")

        matches = [c for (r, _), c in self._cards.items()
                   if r == reg_no and not c.voided
                   and (exam_id is None or c.exam_id == exam_id)]
        card = None
        for cand in matches:
            salt = bytes.fromhex(cand.pin_salt)
            if hmac.compare_digest(_hash_pin(salt, pin), cand.pin_hash):
                card = cand
                break
        if card is None:
            raise BadPin("PIN does not match any card for this candidate")

        with self._redeem_lock:
            if card.used:
                raise CardUsed("this PIN has already been used")
            if now < card.release_time:
                raise EmbargoActive(
                    f"results release at {card.release_time.isoformat()}")
            score = self._scores.get((reg_no, card.exam_id))
            if score is None or score.status != STATUS_FINAL:
                raise ResultNotFinal(
                    "essay marking incomplete; result not yet available")
            card.used = True
            score.released = True
            return score

    # -- export ----------------------------------------------------------------

    def export_results_csv(self, exam_id: str) -> str:
        """Registry upload format, one row per graded candidate."""
        exam = self.exam(exam_id)
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["reg_no", "course_code", "objective_marks",
                         "essay_marks_total", "total", "max_total", "status"])
        for score in self.scores_for_exam(exam_id):
            writer.writerow([
                score.reg_no, exam.course_code, score.objective_marks,
                sum(score.essay_marks.values()), score.total,
                score.max_total, score.status,
            ])
        return out.getvalue()
