"""Examination-center orchestrator.

One object owns the full workflow: registered author keys, sealed package
intake, roster and schedule, sitting opening (unseal in memory, publish the
security image), live sessions, automatic grading on submission, scratch
cards, and result checks.  Every state-changing operation appends exactly
one audit event, success or failure, so the log replays the day.

The HTTP layer and the command-line tool are both thin shells over this
class.
"""

from __future__ import annotations

import logging
import secrets
from datetime import datetime, timedelta
from typing import Any

from . import exam_model
from .attestation import (ImageRegistry, LockdownReport, SecurityImage,
                          derive_security_image, glyph_for)
from .clock import Clock, SystemClock
from .errors import SecurexamError
from .grading import ResultsDesk, Score, ScratchCard
from .scheduling import CandidateRecord, Schedule, Sitting, load_roster
from .sealing import (BadSignature, ExamPackage, KeyPair, Tampered,
                      package_fingerprint_hex, unseal_exam)
from .sessions import AnswerScript, SessionEngine, SessionToken, UnknownSitting
from .stores import StoreLayout

logger = logging.getLogger(__name__)

DEFAULT_PRE_EXAM_WINDOW_MINUTES = 60


class CenterError(SecurexamError):
    pass


class Unauthorized(CenterError):
    pass


class DuplicatePackage(CenterError):
    pass


class TooEarly(CenterError):
    retriable = True


class UnsealFailure(CenterError):
    pass


class NoPackageForExam(CenterError):
    pass


class ExamCenter:
    def __init__(self, stores: StoreLayout, center_keys: KeyPair | None,
                 clock: Clock | None = None, *,
                 pre_exam_window_minutes: int = DEFAULT_PRE_EXAM_WINDOW_MINUTES,
                 admission_lead_minutes: int = 60,
                 embargo_hours: float = 24.0):
        self.stores = stores
        self.clock = clock or SystemClock()
        self._center_keys = center_keys
        self._pre_exam_window = timedelta(minutes=pre_exam_window_minutes)
        self._authors: dict[str, KeyPair] = {}  # key_id hex -> public pair
        self.schedule: Schedule | None = None
        self.roster: list[CandidateRecord] = []
        self._roster_by_reg: dict[str, CandidateRecord] = {}
        self.engine = SessionEngine(
            admission_lead_minutes=admission_lead_minutes,
            on_script=self._script_recorded)
        self.desk = ResultsDesk(embargo_hours=embargo_hours,
                                roster_lookup=self._roster_by_reg.get)
        self.images = ImageRegistry()
        self._restore()

    # -- persistence glue --------------------------------------------------

    def _restore(self) -> None:
        """Rehydrate roster/schedule/scripts/scores/cards from disk.

        Exam content is deliberately not restored; sealed packages stay
        sealed until a sitting is opened again.
        """
        for blob in self.stores.question_store.public_keys().values():
            pair = KeyPair(role="lecturer", public_part=blob,
                           private_part=None)
            self._authors[pair.key_id_hex] = pair

        cs = self.stores.candidate_store
        roster_data = cs.roster.read() or []
        if roster_data:
            self.roster = [CandidateRecord(
                reg_no=r["reg_no"], identity_no=r["identity_no"],
                full_name=r["full_name"], course_code=r["course_code"],
                eligibility_score=r["eligibility_score"],
                enrollment_token=bytes.fromhex(r.get("enrollment_token", "")),
            ) for r in roster_data]
            self._roster_by_reg.clear()
            self._roster_by_reg.update({c.reg_no: c for c in self.roster})
            self.engine.load_roster(self.roster)

        sched_data = self.stores.question_store.schedules.read() or {}
        if sched_data.get("sittings"):
            self.schedule = Schedule.from_json(sched_data)

        for blob in cs.scripts.all():
            script = AnswerScript.from_json(blob)
            self.desk._scripts[(script.reg_no, script.exam_id)] = script
        for blob in cs.scores.all():
            score = Score.from_json(blob)
            self.desk._scores[(score.reg_no, score.exam_id)] = score
        for blob in cs.cards.all():
            card = ScratchCard.from_json(blob)
            self.desk._cards[(card.reg_no, card.exam_id)] = card

    def _persist_script(self, script: AnswerScript) -> None:
        self.stores.candidate_store.scripts.put(
            f"{script.reg_no}|{script.exam_id}", script.to_json())

    def _persist_score(self, score: Score) -> None:
        self.stores.candidate_store.scores.put(
            f"{score.reg_no}|{score.exam_id}", score.to_json())

    def _persist_card(self, card: ScratchCard) -> None:
        self.stores.candidate_store.cards.put(
            f"{card.reg_no}|{card.exam_id}", card.to_json())

    def _audit(self, actor: str, action: str, outcome: str,
               detail: dict[str, Any]) -> None:
        self.stores.candidate_store.audit.append(
            actor=actor, action=action, outcome=outcome, detail=detail,
            at=self.clock.now())

    def _script_recorded(self, script: AnswerScript) -> None:
        """Engine callback: persist the frozen script and grade it."""
        self._persist_script(script)
        try:
            score = self.desk.grade_script(script)
        except SecurexamError:
            logger.exception("script for %s/%s could not be graded",
                             script.reg_no, script.exam_id)
            return
        self._persist_score(score)

    # -- administrative setup ----------------------------------------------

    def register_author_key(self, name: str, pair: KeyPair) -> str:
        """Trust a lecturer/office public key for package uploads."""
        public = pair.public_only()
        self._authors[public.key_id_hex] = public
        self.stores.question_store.save_public_key(name, public.public_part)
        self._audit("admin:center", "register-author-key", "ok",
                    {"name": name, "key_id": public.key_id_hex})
        return public.key_id_hex

    def ingest_roster(self, csv_text: str) -> int:
        records = load_roster(csv_text)
        self.roster = records
        self._roster_by_reg.clear()
        self._roster_by_reg.update({c.reg_no: c for c in records})
        self.engine.load_roster(records)
        self.stores.candidate_store.roster.write([{
            "reg_no": c.reg_no, "identity_no": c.identity_no,
            "full_name": c.full_name, "course_code": c.course_code,
            "eligibility_score": c.eligibility_score,
            "enrollment_token": c.enrollment_token.hex(),
        } for c in records])
        self._audit("admin:center", "ingest-roster", "ok",
                    {"candidates": len(records)})
        return len(records)

    def set_schedule(self, schedule: Schedule) -> None:
        self.schedule = schedule
        # Sittings carry reg_no lists only; names and identity numbers stay
        # in the candidate store.
        self.stores.question_store.schedules.write(schedule.to_json())
        self._audit("admin:center", "set-schedule", "ok",
                    {"sittings": len(schedule.sittings)})

    def sitting(self, sitting_id: str) -> Sitting:
        if self.schedule is None:
            raise UnknownSitting("no schedule loaded")
        try:
            return self.schedule.sitting(sitting_id)
        except KeyError:
            raise UnknownSitting(f"no sitting {sitting_id!r} in the schedule")

    # -- package intake ------------------------------------------------------

    def upload_package(self, blob: bytes, actor: str = "lecturer") -> dict[str, Any]:
        """Store a sealed package after verifying its author signature.

        The package is persisted untouched and stays sealed until a sitting
        opens.
        """
        action = "upload-package"
        try:
            pkg = ExamPackage.from_bytes(blob)
            author_id = pkg.manifest.get("author_key_id", "")
            author = self._authors.get(author_id)
            if author is None:
                raise Unauthorized(
                    f"author key {author_id[:16]}... is not registered")
            if not author.verify(pkg.signature, pkg.manifest_bytes):
                raise BadSignature("package signature does not verify")
            fingerprint = package_fingerprint_hex(blob)
            index = self.stores.question_store.package_index.read() or {}
            if any(meta.get("fingerprint") == fingerprint
                   for meta in index.values()):
                raise DuplicatePackage(
                    f"package {fingerprint[:16]}... already uploaded")
            exam_id = pkg.manifest["exam_id"]
            meta = {
                "fingerprint": fingerprint,
                "author_key_id": author_id,
                "course_code": pkg.manifest.get("course_code"),
                "uploaded_at": self.clock.now().isoformat(),
            }
            self.stores.question_store.save_package(exam_id, blob, meta)
        except SecurexamError as exc:
            self._audit(f"lecturer:{actor}", action, exc.public_code, {})
            raise
        self._audit(f"lecturer:{actor}", action, "ok",
                    {"exam_id": exam_id, "fingerprint": fingerprint})
        return {"exam_id": exam_id, "fingerprint": fingerprint}

    # -- sitting lifecycle -----------------------------------------------------

    def open_sitting(self, sitting_id: str, now: datetime | None = None,
                     actor: str = "admin") -> dict[str, Any]:
        """Unseal the sitting's package in memory and publish its image.

        Allowed only inside the pre-exam window (default 60 minutes before
        start).  Plaintext questions never touch either store.
        """
        action = "open-sitting"
        now = now or self.clock.now()
        try:
            sitting = self.sitting(sitting_id)
            window_open = sitting.start_time - self._pre_exam_window
            if now < window_open:
                raise TooEarly(
                    f"sitting opens for preparation at {window_open.isoformat()}")
            qs = self.stores.question_store
            if not qs.has_package(sitting.exam_id):
                raise NoPackageForExam(
                    f"no package uploaded for exam {sitting.exam_id!r}")
            blob = qs.load_package(sitting.exam_id)
            pkg = ExamPackage.from_bytes(blob)
            author = self._authors.get(pkg.manifest.get("author_key_id", ""))
            if author is None:
                raise Unauthorized("package author key is not registered")
            if self._center_keys is None or not self._center_keys.has_private:
                raise UnsealFailure("center private key is not configured")
            try:
                exam = unseal_exam(pkg, self._center_keys, author)
            except SecurexamError as exc:
                raise UnsealFailure(f"package does not open: "
                                    f"{exc.public_code}: {exc}") from exc

            fingerprint = package_fingerprint_hex(blob)
            image = derive_security_image(bytes.fromhex(fingerprint),
                                          sitting_id)
            self.images.publish(image)
            env_digest = self._expected_env_digest(fingerprint)
            self.engine.attach_exam(sitting, exam, env_digest)
            self.desk.register_exam(exam)
        except SecurexamError as exc:
            self._audit(f"admin:{actor}", action, exc.public_code,
                        {"sitting_id": sitting_id})
            raise
        glyph = glyph_for(image.image_index)
        self._audit(f"admin:{actor}", action, "ok",
                    {"sitting_id": sitting_id, "exam_id": exam.exam_id,
                     "image_index": image.image_index})
        return {
            "sitting_id": sitting_id,
            "exam_id": exam.exam_id,
            "ready": True,
            "start_time": sitting.start_time.isoformat(),
            "duration_minutes": exam.duration_minutes,
            "security_image": {**image.to_json(), "glyph_name": glyph.name},
            "environment_digest": env_digest.hex(),
        }

    @staticmethod
    def _expected_env_digest(fingerprint_hex: str) -> bytes:
        """Digest the sanctioned client bundle must hash to for this sitting.

        Stand-in derivation: in a real deployment this is the measured hash
        of the distributed boot image.
        """
        from .canonical import sha256
        return sha256(b"securexam-client-bundle/" + fingerprint_hex.encode())

    # -- candidate traffic -------------------------------------------------------

    def authenticate(self, reg_no: str, identity_no: str, sitting_id: str,
                     now: datetime | None = None) -> SessionToken:
        now = now or self.clock.now()
        actor = f"candidate:{reg_no}"
        try:
            token = self.engine.authenticate(reg_no, identity_no, sitting_id, now)
        except SecurexamError as exc:
            self._audit(actor, "authenticate", exc.public_code,
                        {"sitting_id": sitting_id})
            raise
        self._audit(actor, "authenticate", "ok",
                    {"sitting_id": sitting_id, "session_state": "authenticated"})
        return token

    def begin_exam(self, token: bytes | str, lockdown: LockdownReport,
                   now: datetime | None = None) -> dict[str, Any]:
        now = now or self.clock.now()
        actor, sitting_id = self._token_actor(token)
        try:
            session = self.engine.begin_exam(token, lockdown, now)
        except SecurexamError as exc:
            detail = {"sitting_id": sitting_id}
            if hasattr(exc, "verdict"):
                detail["violations"] = list(exc.verdict.violations)
            self._audit(actor, "begin-exam", exc.public_code, detail)
            raise
        self._audit(actor, "begin-exam", "ok",
                    {"sitting_id": sitting_id, "session_state": session.state,
                     "deadline": session.deadline.isoformat()})
        return {
            "state": session.state,
            "started_at": session.started_at.isoformat(),
            "deadline": session.deadline.isoformat(),
            "server_now": now.isoformat(),
        }

    def record_answer(self, token: bytes | str, question_id: str, value: str,
                      now: datetime | None = None) -> dict[str, Any]:
        now = now or self.clock.now()
        actor, sitting_id = self._token_actor(token)
        try:
            receipt = self.engine.record_answer(token, question_id, value, now)
        except SecurexamError as exc:
            self._audit(actor, "record-answer", exc.public_code,
                        {"question_id": question_id,
                         "session_state": self._state_of(token)})
            raise
        self._audit(actor, "record-answer", "ok",
                    {"question_id": question_id, "session_state": "active"})
        return receipt

    def submit(self, token: bytes | str,
               now: datetime | None = None) -> AnswerScript:
        now = now or self.clock.now()
        actor, sitting_id = self._token_actor(token)
        try:
            script = self.engine.submit(token, now)
        except SecurexamError as exc:
            self._audit(actor, "submit", exc.public_code,
                        {"session_state": self._state_of(token)})
            raise
        self._audit(actor, "submit", "ok",
                    {"sitting_id": sitting_id, "session_state": "submitted",
                     "answered": sum(1 for v in script.answers.values() if v)})
        return script

    def _token_actor(self, token: bytes | str) -> tuple[str, str]:
        try:
            session, _ = self.engine._session(token)
            return (f"candidate:{session.token.reg_no}",
                    session.token.sitting_id)
        except SecurexamError:
            return "candidate:unknown", ""

    def _state_of(self, token: bytes | str) -> str | None:
        try:
            session, _ = self.engine._session(token)
            return session.state
        except SecurexamError:
            return None

    # -- invigilation ------------------------------------------------------------

    def invigilator_confirm(self, sitting_id: str, observed_index: int,
                            observed_code: str,
                            actor: str = "invigilator") -> dict[str, Any]:
        try:
            outcome = self.images.invigilator_confirm(
                sitting_id, observed_index, observed_code,
                at=self.clock.now())
        except SecurexamError as exc:
            self._audit(f"invigilator:{actor}", "confirm-image",
                        exc.public_code, {"sitting_id": sitting_id})
            raise
        self._audit(f"invigilator:{actor}", "confirm-image", outcome,
                    {"sitting_id": sitting_id,
                     "observed_index": observed_index,
                     "observed_code": observed_code})
        return {"sitting_id": sitting_id, "outcome": outcome}

    # -- results -----------------------------------------------------------------

    def issue_card(self, reg_no: str, sitting_id: str,
                   rng=secrets, actor: str = "admin") -> dict[str, Any]:
        try:
            sitting = self.sitting(sitting_id)
            card, pin = self.desk.issue_scratch_card(reg_no, sitting, rng=rng)
            self._persist_card(card)
        except SecurexamError as exc:
            self._audit(f"admin:{actor}", "issue-card", exc.public_code,
                        {"reg_no": reg_no, "sitting_id": sitting_id})
            raise
        # the plaintext PIN is in the return value only, never in the audit
        self._audit(f"admin:{actor}", "issue-card", "ok",
                    {"reg_no": reg_no, "card_id": card.card_id,
                     "release_time": card.release_time.isoformat()})
        return {"card_id": card.card_id, "reg_no": reg_no,
                "release_time": card.release_time.isoformat(), "pin": pin}

    def check_result(self, reg_no: str, identity_no: str, pin: str,
                     now: datetime | None = None) -> dict[str, Any]:
        now = now or self.clock.now()
        actor = f"candidate:{reg_no}"
        try:
            score = self.desk.check_result(reg_no, identity_no, pin, now)
            card = self.desk.card_for(reg_no, score.exam_id)
            self._persist_card(card)
            self._persist_score(score)
        except SecurexamError as exc:
            self._audit(actor, "check-result", exc.public_code, {})
            raise
        self._audit(actor, "check-result", "ok",
                    {"exam_id": score.exam_id, "total": score.total})
        return {
            "reg_no": score.reg_no,
            "exam_id": score.exam_id,
            "objective_marks": score.objective_marks,
            "essay_marks": dict(score.essay_marks),
            "essay_marks_total": sum(score.essay_marks.values()),
            "total": score.total,
            "max_total": score.max_total,
            "status": score.status,
        }

    def record_essay_mark(self, reg_no: str, exam_id: str, question_id: str,
                          awarded: int, marker_id: str) -> Score:
        try:
            score = self.desk.record_essay_mark(
                reg_no, exam_id, question_id, awarded, marker_id,
                at=self.clock.now())
            self._persist_score(score)
        except SecurexamError as exc:
            self._audit(f"assessor:{marker_id}", "record-essay-mark",
                        exc.public_code,
                        {"reg_no": reg_no, "question_id": question_id})
            raise
        self._audit(f"assessor:{marker_id}", "record-essay-mark", "ok",
                    {"reg_no": reg_no, "question_id": question_id,
                     "awarded": awarded, "status": score.status})
        return score

    # -- read-only views -----------------------------------------------------------

    def session_view(self, token: bytes | str,
                     now: datetime | None = None) -> dict[str, Any]:
        return self.engine.session_view(token, now or self.clock.now())

    def paper_view(self, token: bytes | str,
                   now: datetime | None = None) -> list[dict[str, Any]]:
        return self.engine.paper_view(token, now or self.clock.now())

    def sitting_progress(self, sitting_id: str,
                         now: datetime | None = None) -> dict[str, Any]:
        return self.engine.sitting_progress(sitting_id, now or self.clock.now())

    def security_image(self, sitting_id: str) -> SecurityImage:
        return self.images.image_for(sitting_id)

    def export_results_csv(self, exam_id: str) -> str:
        return self.desk.export_results_csv(exam_id)
