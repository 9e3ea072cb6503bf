"""Server-authoritative exam sessions.

One candidate's attempt moves through exactly these states:

    authenticated -> lockdown-pending -> active -> submitted | expired

The deadline is fixed the instant the exam begins (start + duration) and is
never extended.  Answer writes are valid on the closed-open interval
[started_at, deadline): a write at the exact deadline is late, triggers
auto-expiry, and never reaches the script.  The server clock passed as
``now`` is the sole time authority.

Each session mutates under its own lock; the expiry sweep and candidate
requests may race but a terminal transition happens exactly once, so every
started session yields exactly one AnswerScript.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Callable

from . import exam_model
from .attestation import LockdownReport, LockdownVerdict, verify_lockdown
from .errors import SecurexamError
from .exam_model import OPTION_LABELS, PresentationOrder, ValidatedExam
from .scheduling import CandidateRecord, Sitting

STATE_AUTHENTICATED = "authenticated"
STATE_LOCKDOWN_PENDING = "lockdown-pending"
STATE_ACTIVE = "active"
STATE_SUBMITTED = "submitted"
STATE_EXPIRED = "expired"

TERMINATION_CANDIDATE = "candidate-submitted"
TERMINATION_AUTO = "auto-expired"

DEFAULT_ADMISSION_LEAD_MINUTES = 60


class SessionError(SecurexamError):
    pass


class UnknownCandidate(SessionError):
    pass


class WrongIdentityNumber(SessionError):
    # Externally indistinguishable from an unknown candidate; the audit log
    # keeps the distinction.
    @property
    def public_code(self) -> str:
        return "UnknownCandidate"


class UnknownSitting(SessionError):
    pass


class NotAssignedToSitting(SessionError):
    pass


class OutsideAdmissionWindow(SessionError):
    pass


class AlreadyCompleted(SessionError):
    pass


class SittingNotOpen(SessionError):
    pass


class TokenExpired(SessionError):
    pass


class LockdownRejected(SessionError):
    def __init__(self, verdict: LockdownVerdict):
        super().__init__("lockdown verification failed: "
                         + ", ".join(verdict.violations))
        self.verdict = verdict


class AlreadyStarted(SessionError):
    pass


class SessionNotActive(SessionError):
    pass


class UnknownQuestion(SessionError):
    pass


class MalformedAnswer(SessionError):
    pass


class PastDeadline(SessionError):
    pass


@dataclass(frozen=True)
class SessionToken:
    token: bytes  # 256-bit CSPRNG value
    reg_no: str
    sitting_id: str
    issued_at: datetime

    @property
    def token_hex(self) -> str:
        return self.token.hex()


@dataclass
class AnswerRecord:
    value: str
    written_at: datetime


@dataclass
class LiveSession:
    token: SessionToken
    exam_id: str
    state: str = STATE_AUTHENTICATED
    started_at: datetime | None = None
    deadline: datetime | None = None
    answers: dict[str, AnswerRecord] = field(default_factory=dict)
    presentation: PresentationOrder | None = None
    transitions: list[tuple[str, str]] = field(default_factory=list)

    def _move(self, new_state: str) -> None:
        self.transitions.append((self.state, new_state))
        self.state = new_state


@dataclass(frozen=True)
class AnswerScript:
    """The frozen submission; immutable once created."""
    reg_no: str
    exam_id: str
    sitting_id: str
    answers: dict[str, str]  # every question id; unanswered recorded blank
    submitted_at: datetime
    termination: str

    def to_json(self) -> dict[str, Any]:
        return {
            "reg_no": self.reg_no,
            "exam_id": self.exam_id,
            "sitting_id": self.sitting_id,
            "answers": dict(self.answers),
            "submitted_at": self.submitted_at.isoformat(),
            "termination": self.termination,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "AnswerScript":
        return cls(reg_no=data["reg_no"], exam_id=data["exam_id"],
                   sitting_id=data["sitting_id"], answers=dict(data["answers"]),
                   submitted_at=datetime.fromisoformat(data["submitted_at"]),
                   termination=data["termination"])


@dataclass
class _OpenSitting:
    sitting: Sitting
    exam: ValidatedExam
    expected_env_digest: bytes


class SessionEngine:
    """Lifecycle of every candidate attempt across the open sittings.

    The engine never touches persistent storage; the owner collects the
    AnswerScripts it emits (via ``on_script``) and persists them.
    """

    def __init__(self, *,
                 admission_lead_minutes: int = DEFAULT_ADMISSION_LEAD_MINUTES,
                 on_script: Callable[[AnswerScript], None] | None = None):
        self._roster: dict[str, CandidateRecord] = {}
        self._sittings: dict[str, _OpenSitting] = {}
        self._sessions: dict[bytes, LiveSession] = {}
        self._by_candidate: dict[tuple[str, str], bytes] = {}
        self._locks: dict[bytes, threading.RLock] = {}
        self._registry_lock = threading.Lock()
        self._admission_lead = timedelta(minutes=admission_lead_minutes)
        self._on_script = on_script

    # -- wiring ------------------------------------------------------------

    def load_roster(self, records: list[CandidateRecord]) -> None:
        with self._registry_lock:
            self._roster = {c.reg_no: c for c in records}

    def attach_exam(self, sitting: Sitting, exam: ValidatedExam,
                    expected_env_digest: bytes) -> None:
        """Make a sitting live; exam content stays in memory only."""
        with self._registry_lock:
            self._sittings[sitting.sitting_id] = _OpenSitting(
                sitting=sitting, exam=exam,
                expected_env_digest=expected_env_digest)

    def open_sitting_ids(self) -> list[str]:
        with self._registry_lock:
            return list(self._sittings)

    def exam_for(self, sitting_id: str) -> ValidatedExam:
        return self._open(sitting_id).exam

    def _open(self, sitting_id: str) -> _OpenSitting:
        with self._registry_lock:
            if sitting_id not in self._sittings:
                raise SittingNotOpen(f"sitting {sitting_id!r} is not open")
            return self._sittings[sitting_id]

    def _session(self, token: bytes | str) -> tuple[LiveSession, threading.RLock]:
        raw = bytes.fromhex(token) if isinstance(token, str) else token
        with self._registry_lock:
            session = self._sessions.get(raw)
            if session is None:
                raise TokenExpired("unknown or expired session token")
            return session, self._locks[raw]

    # -- operations ----------------------------------------------------------

    def authenticate(self, reg_no: str, identity_no: str, sitting_id: str,
                     now: datetime) -> SessionToken:
        """Issue (or re-issue) the single session token for this candidate.

        The registration number and identity number must match the roster as
        a pair; re-authentication before completion returns the same token so
        a disconnected candidate can resume until the deadline.
        """
        opened = self._open(sitting_id)
        candidate = self._roster.get(reg_no)
        if candidate is None:
            raise UnknownCandidate(f"no such candidate {reg_no!r}")
        if candidate.identity_no != identity_no:
            raise WrongIdentityNumber("identity number does not match")
        if reg_no not in opened.sitting.assigned:
            raise NotAssignedToSitting(
                f"{reg_no} is not assigned to sitting {sitting_id}")

        start = opened.sitting.start_time
        window_open = start - self._admission_lead
        window_close = start + timedelta(minutes=opened.exam.duration_minutes)
        if not (window_open <= now < window_close):
            raise OutsideAdmissionWindow(
                f"admission window is {window_open.isoformat()} to "
                f"{window_close.isoformat()}")

        with self._registry_lock:
            existing = self._by_candidate.get((reg_no, sitting_id))
            if existing is not None:
                session = self._sessions[existing]
                if session.state in (STATE_SUBMITTED, STATE_EXPIRED):
                    raise AlreadyCompleted("this attempt is already completed")
                return session.token
            raw = secrets.token_bytes(32)
            token = SessionToken(token=raw, reg_no=reg_no,
                                 sitting_id=sitting_id, issued_at=now)
            self._sessions[raw] = LiveSession(token=token,
                                              exam_id=opened.exam.exam_id)
            self._locks[raw] = threading.RLock()
            self._by_candidate[(reg_no, sitting_id)] = raw
            return token

    def begin_exam(self, token: bytes | str, lockdown: LockdownReport,
                   now: datetime) -> LiveSession:
        """Gate on lockdown attestation, then start the clock.

        On a failing report the session parks in lockdown-pending and the
        candidate may retry; once active the deadline is pinned to
        now + duration and never moves.
        """
        session, lock = self._session(token)
        with lock:
            if session.state == STATE_ACTIVE:
                raise AlreadyStarted("exam already started; deadline unchanged")
            if session.state in (STATE_SUBMITTED, STATE_EXPIRED):
                raise SessionNotActive("this attempt is already completed")
            opened = self._open(session.token.sitting_id)
            if session.state == STATE_AUTHENTICATED:
                session._move(STATE_LOCKDOWN_PENDING)
            verdict = verify_lockdown(lockdown, opened.expected_env_digest)
            if not verdict.passed:
                raise LockdownRejected(verdict)
            session._move(STATE_ACTIVE)
            session.started_at = now
            session.deadline = now + timedelta(
                minutes=opened.exam.duration_minutes)
            session.presentation = exam_model.derive_presentation(
                opened.exam, session.token.token)
            return session

    def record_answer(self, token: bytes | str, question_id: str, value: str,
                      now: datetime) -> dict[str, Any]:
        """Last-write-wins answer recording, any question order.

        Objective answers arrive as the presented label and are stored under
        the authored option label, so scripts grade without the session's
        shuffle.  A write at or after the deadline is refused and expires the
        session on the spot.
        """
        session, lock = self._session(token)
        with lock:
            if session.state != STATE_ACTIVE:
                raise SessionNotActive(f"session is {session.state}")
            if now >= session.deadline:
                self._expire_locked(session)
                raise PastDeadline("time is up; answer not recorded")

            opened = self._open(session.token.sitting_id)
            try:
                question = opened.exam.question(question_id)
            except KeyError:
                raise UnknownQuestion(f"no question {question_id!r} in this exam")

            if not isinstance(value, str):
                raise MalformedAnswer("answer value must be a string")
            if question.kind == exam_model.OBJECTIVE:
                labels = OPTION_LABELS[:len(question.options)]
                # exact single-label match; "in" alone would accept
                # substrings of the label string
                if len(value) != 1 or value not in labels:
                    raise MalformedAnswer(
                        f"objective answer must be one of {labels}")
                stored = exam_model.canonical_answer_label(
                    opened.exam, session.presentation, question_id, value)
            else:
                stored = value

            session.answers[question_id] = AnswerRecord(value=stored,
                                                        written_at=now)
            return {"question_id": question_id, "recorded_at": now.isoformat(),
                    "answered": len(session.answers)}

    def submit(self, token: bytes | str, now: datetime) -> AnswerScript:
        """Freeze the attempt; unanswered questions are recorded blank."""
        session, lock = self._session(token)
        with lock:
            if session.state != STATE_ACTIVE:
                raise SessionNotActive(f"session is {session.state}")
            if now >= session.deadline:
                self._expire_locked(session)
                raise PastDeadline("past deadline; auto-expiry applies")
            return self._finalize_locked(session, now, TERMINATION_CANDIDATE)

    def expire_due_sessions(self, now: datetime) -> list[AnswerScript]:
        """Terminate every active session whose deadline has arrived."""
        with self._registry_lock:
            candidates = [(s, self._locks[s.token.token])
                          for s in self._sessions.values()
                          if s.state == STATE_ACTIVE]
        scripts = []
        for session, lock in candidates:
            with lock:
                if session.state == STATE_ACTIVE and session.deadline <= now:
                    scripts.append(self._expire_locked(session))
        return scripts

    def session_view(self, token: bytes | str, now: datetime) -> dict[str, Any]:
        """Read-only status for clients; triggers lazy expiry first."""
        session, lock = self._session(token)
        with lock:
            if session.state == STATE_ACTIVE and now >= session.deadline:
                self._expire_locked(session)
            remaining = None
            if session.state == STATE_ACTIVE:
                remaining = max(0.0, (session.deadline - now).total_seconds())
            return {
                "state": session.state,
                "reg_no": session.token.reg_no,
                "sitting_id": session.token.sitting_id,
                "exam_id": session.exam_id,
                "started_at": session.started_at.isoformat()
                              if session.started_at else None,
                "deadline": session.deadline.isoformat()
                            if session.deadline else None,
                "remaining_seconds": remaining,
                "server_now": now.isoformat(),
                "answered": sorted(session.answers),
            }

    def paper_view(self, token: bytes | str, now: datetime) -> list[dict[str, Any]]:
        session, lock = self._session(token)
        with lock:
            if session.state == STATE_ACTIVE and now >= session.deadline:
                self._expire_locked(session)
            if session.state != STATE_ACTIVE:
                raise SessionNotActive(f"session is {session.state}")
            opened = self._open(session.token.sitting_id)
            return exam_model.candidate_view(opened.exam, session.presentation)

    def sitting_progress(self, sitting_id: str, now: datetime) -> dict[str, Any]:
        """Invigilator/admin view: per-candidate states and counts."""
        opened = self._open(sitting_id)
        self.expire_due_sessions(now)
        rows = []
        with self._registry_lock:
            for reg_no in opened.sitting.assigned:
                raw = self._by_candidate.get((reg_no, sitting_id))
                state = self._sessions[raw].state if raw else "not-authenticated"
                rows.append({"reg_no": reg_no, "state": state})
        counts: dict[str, int] = {}
        for row in rows:
            counts[row["state"]] = counts.get(row["state"], 0) + 1
        return {"sitting_id": sitting_id, "candidates": rows, "counts": counts}

    # -- internals -----------------------------------------------------------

    def _finalize_locked(self, session: LiveSession, at: datetime,
                         termination: str) -> AnswerScript:
        opened = self._open(session.token.sitting_id)
        final = {q.id: "" for q in opened.exam.questions}
        for qid, record in session.answers.items():
            # invariant double-check: nothing written at/after the deadline
            if record.written_at < session.deadline:
                final[qid] = record.value
        script = AnswerScript(
            reg_no=session.token.reg_no,
            exam_id=session.exam_id,
            sitting_id=session.token.sitting_id,
            answers=final,
            submitted_at=at,
            termination=termination,
        )
        session._move(STATE_SUBMITTED if termination == TERMINATION_CANDIDATE
                      else STATE_EXPIRED)
        if self._on_script is not None:
            self._on_script(script)
        return script

    def _expire_locked(self, session: LiveSession) -> AnswerScript:
        return self._finalize_locked(session, session.deadline,
                                     TERMINATION_AUTO)
