"""Question papers: validation, canonical form, anti-collusion presentation.

An exam is authored as a single JSON document (see ``load_exam_file``) and
becomes a :class:`ValidatedExam` only after every structural invariant has
been checked.  Presentation order (question shuffling plus per-question
option shuffling for objective questions) is derived deterministically from
the exam id and the candidate's session token, so the same session always
sees the same paper while neighbouring candidates see different ones.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .canonical import DigestStream, canonical_json_bytes, sha256, sha256_hex
from .errors import SecurexamError

OBJECTIVE = "objective"
ESSAY = "essay"
QUESTION_KINDS = (OBJECTIVE, ESSAY)

MEDIA_KINDS = ("text", "html-bundle", "image", "video")
DESIGNS = ("paper-replacement", "post-paper")

OPTION_LABELS = "ABCDEF"
MIN_OPTIONS = 2
MAX_OPTIONS = 6

DEFAULT_ANSWER_SENTINEL = "Please type your answer below this line"

# Total bundled resource bytes allowed per exam; keeps packages transferable.
DEFAULT_MAX_RESOURCE_BYTES = 64 * 1024 * 1024


# ---------------------------------------------------------------------------
# Validation errors
# ---------------------------------------------------------------------------

class ExamValidationError(SecurexamError):
    """Base for every draft-rejection reason."""


class MalformedDraft(ExamValidationError):
    pass


class EmptyExam(ExamValidationError):
    pass


class BadOptionCount(ExamValidationError):
    pass


class MissingCorrectOption(ExamValidationError):
    pass


class DanglingResourceRef(ExamValidationError):
    pass


class DuplicateId(ExamValidationError):
    pass


class NonPositiveDuration(ExamValidationError):
    pass


class DuplicateOptionLabel(ExamValidationError):
    pass


class InvalidMaxMarks(ExamValidationError):
    pass


class ResourceDigestMismatch(ExamValidationError):
    pass


class OversizeResources(ExamValidationError):
    pass


class DesignMismatch(ExamValidationError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Option:
    label: str
    text: str


@dataclass(frozen=True)
class Question:
    id: str
    kind: str
    prompt: str
    resource_refs: tuple[str, ...] = ()
    # objective only
    options: tuple[Option, ...] = ()
    correct_option: str = ""
    # essay only
    max_marks: int = 0
    answer_sentinel: str = ""

    @property
    def marks(self) -> int:
        """Objective questions carry an implicit mark of 1."""
        return 1 if self.kind == OBJECTIVE else self.max_marks


@dataclass(frozen=True)
class Resource:
    id: str
    media_kind: str
    data: bytes
    declared_digest: str  # lowercase hex sha256 of data


@dataclass(frozen=True)
class ValidatedExam:
    exam_id: str
    title: str
    course_code: str
    duration_minutes: int
    design: str
    questions: tuple[Question, ...]
    resources: tuple[Resource, ...] = ()
    rich_environment: bool = False

    def question(self, question_id: str) -> Question:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise KeyError(question_id)

    @property
    def objective_questions(self) -> tuple[Question, ...]:
        return tuple(q for q in self.questions if q.kind == OBJECTIVE)

    @property
    def essay_questions(self) -> tuple[Question, ...]:
        return tuple(q for q in self.questions if q.kind == ESSAY)

    @property
    def max_total(self) -> int:
        return sum(q.marks for q in self.questions)


@dataclass(frozen=True)
class PresentationOrder:
    """Session-scoped permutations: question order plus per-question option order.

    ``question_order[p]`` is the original question index shown at position
    ``p``; ``option_orders[qid][p]`` is the original option index shown with
    presented label ``OPTION_LABELS[p]``.  Essay questions have no entry.
    """

    question_order: tuple[int, ...]
    option_orders: Mapping[str, tuple[int, ...]]
    seed_digest: bytes

    def __post_init__(self):
        object.__setattr__(self, "option_orders", dict(self.option_orders))


# ---------------------------------------------------------------------------
# Draft validation
# ---------------------------------------------------------------------------

def _require(cond: bool, err: type[ExamValidationError], msg: str) -> None:
    if not cond:
        raise err(msg)


def _as_str(draft: Mapping[str, Any], key: str) -> str:
    value = draft.get(key)
    _require(isinstance(value, str) and value != "",
             MalformedDraft, f"field {key!r} must be a non-empty string")
    return value


def _resource_bytes(entry: Mapping[str, Any]) -> bytes:
    if isinstance(entry.get("bytes"), (bytes, bytearray)):
        return bytes(entry["bytes"])
    b64 = entry.get("bytes_b64")
    _require(isinstance(b64, str), MalformedDraft,
             f"resource {entry.get('id')!r} has no bytes; load sibling files first")
    try:
        return base64.b64decode(b64, validate=True)
    except Exception as exc:
        raise MalformedDraft(f"resource {entry.get('id')!r}: bad base64") from exc


def _validate_question(entry: Mapping[str, Any], resource_ids: set[str]) -> Question:
    qid = _as_str(entry, "id")
    kind = entry.get("kind")
    _require(kind in QUESTION_KINDS, MalformedDraft,
             f"question {qid!r}: kind must be one of {QUESTION_KINDS}")
    prompt = _as_str(entry, "prompt")

    refs = entry.get("resource_refs", [])
    _require(isinstance(refs, list) and all(isinstance(r, str) for r in refs),
             MalformedDraft, f"question {qid!r}: resource_refs must be a list of ids")
    for ref in refs:
        _require(ref in resource_ids, DanglingResourceRef,
                 f"question {qid!r} references missing resource {ref!r}")

    if kind == OBJECTIVE:
        raw_options = entry.get("options")
        _require(isinstance(raw_options, list), MalformedDraft,
                 f"question {qid!r}: objective question needs an options list")
        _require(MIN_OPTIONS <= len(raw_options) <= MAX_OPTIONS, BadOptionCount,
                 f"question {qid!r}: {len(raw_options)} options, allowed "
                 f"{MIN_OPTIONS}-{MAX_OPTIONS}")
        options = []
        for opt in raw_options:
            _require(isinstance(opt, Mapping), MalformedDraft,
                     f"question {qid!r}: option entries must be objects")
            options.append(Option(label=_as_str(opt, "label"),
                                  text=_as_str(opt, "text")))
        labels = [o.label for o in options]
        if len(set(labels)) != len(labels):
            raise DuplicateOptionLabel(f"question {qid!r}: duplicate option labels")
        correct = entry.get("correct_option")
        _require(isinstance(correct, str) and correct in labels, MissingCorrectOption,
                 f"question {qid!r}: correct_option must name one of its options")
        return Question(id=qid, kind=OBJECTIVE, prompt=prompt,
                        resource_refs=tuple(refs), options=tuple(options),
                        correct_option=correct)

    max_marks = entry.get("max_marks")
    _require(isinstance(max_marks, int) and not isinstance(max_marks, bool)
             and max_marks >= 1,
             InvalidMaxMarks, f"question {qid!r}: essay max_marks must be >= 1")
    sentinel = entry.get("answer_sentinel", DEFAULT_ANSWER_SENTINEL)
    _require(isinstance(sentinel, str) and sentinel != "", MalformedDraft,
             f"question {qid!r}: answer_sentinel must be a non-empty string")
    return Question(id=qid, kind=ESSAY, prompt=prompt, resource_refs=tuple(refs),
                    max_marks=max_marks, answer_sentinel=sentinel)


def validate_exam(draft: Mapping[str, Any],
                  max_resource_bytes: int = DEFAULT_MAX_RESOURCE_BYTES) -> ValidatedExam:
    """Check a raw exam description and return the validated exam.

    Pure: the draft is never mutated and no files are touched.  Raises a
    subclass of :class:`ExamValidationError` naming the first violated rule.
    """
    _require(isinstance(draft, Mapping), MalformedDraft, "draft must be an object")

    exam_id = _as_str(draft, "exam_id")
    title = _as_str(draft, "title")
    course_code = _as_str(draft, "course_code")

    duration = draft.get("duration_minutes")
    _require(isinstance(duration, int) and not isinstance(duration, bool)
             and duration > 0,
             NonPositiveDuration, "duration_minutes must be a positive whole number")

    design = draft.get("design")
    _require(design in DESIGNS, MalformedDraft,
             f"design must be one of {DESIGNS}")

    rich_environment = draft.get("rich_environment", False)
    _require(isinstance(rich_environment, bool), MalformedDraft,
             "rich_environment must be a boolean")

    raw_resources = draft.get("resources", [])
    _require(isinstance(raw_resources, list), MalformedDraft,
             "resources must be a list")
    resources: list[Resource] = []
    total_bytes = 0
    for entry in raw_resources:
        _require(isinstance(entry, Mapping), MalformedDraft,
                 "resource entries must be objects")
        rid = _as_str(entry, "id")
        media_kind = entry.get("media_kind")
        _require(media_kind in MEDIA_KINDS, MalformedDraft,
                 f"resource {rid!r}: media_kind must be one of {MEDIA_KINDS}")
        data = _resource_bytes(entry)
        declared = entry.get("digest")
        _require(isinstance(declared, str), MalformedDraft,
                 f"resource {rid!r}: digest must be lowercase hex")
        if sha256_hex(data) != declared.lower():
            raise ResourceDigestMismatch(
                f"resource {rid!r}: declared digest does not match its bytes")
        total_bytes += len(data)
        resources.append(Resource(id=rid, media_kind=media_kind, data=data,
                                  declared_digest=declared.lower()))
    if total_bytes > max_resource_bytes:
        raise OversizeResources(
            f"bundled resources total {total_bytes} bytes, cap {max_resource_bytes}")

    resource_ids = [r.id for r in resources]
    if len(set(resource_ids)) != len(resource_ids):
        raise DuplicateId("duplicate resource ids")

    raw_questions = draft.get("questions")
    _require(isinstance(raw_questions, list), MalformedDraft,
             "questions must be a list")
    if not raw_questions:
        raise EmptyExam("an exam needs at least one question")

    questions = [_validate_question(q, set(resource_ids)) for q in raw_questions]
    question_ids = [q.id for q in questions]
    if len(set(question_ids)) != len(question_ids):
        raise DuplicateId("duplicate question ids")

    uses_resources = any(q.resource_refs for q in questions)
    should_be_post_paper = uses_resources or rich_environment
    if (design == "post-paper") != should_be_post_paper:
        raise DesignMismatch(
            "design must be post-paper exactly when questions embed resources "
            "or the exam declares rich-environment use")

    return ValidatedExam(
        exam_id=exam_id, title=title, course_code=course_code,
        duration_minutes=duration, design=design,
        questions=tuple(questions), resources=tuple(resources),
        rich_environment=rich_environment,
    )


# ---------------------------------------------------------------------------
# Canonical (bundle) form and authoring files
# ---------------------------------------------------------------------------

def exam_to_draft(exam: ValidatedExam) -> dict[str, Any]:
    """Re-serialize a validated exam to its self-contained draft form.

    Resource bytes are inlined as base64 so the result is a single document;
    ``validate_exam(exam_to_draft(e)) == e`` holds for every validated exam.
    """
    questions = []
    for q in exam.questions:
        entry: dict[str, Any] = {
            "id": q.id, "kind": q.kind, "prompt": q.prompt,
            "resource_refs": list(q.resource_refs),
        }
        if q.kind == OBJECTIVE:
            entry["options"] = [{"label": o.label, "text": o.text} for o in q.options]
            entry["correct_option"] = q.correct_option
        else:
            entry["max_marks"] = q.max_marks
            entry["answer_sentinel"] = q.answer_sentinel
        questions.append(entry)
    return {
        "exam_id": exam.exam_id,
        "title": exam.title,
        "course_code": exam.course_code,
        "duration_minutes": exam.duration_minutes,
        "design": exam.design,
        "rich_environment": exam.rich_environment,
        "questions": questions,
        "resources": [
            {"id": r.id, "media_kind": r.media_kind,
             "bytes_b64": base64.b64encode(r.data).decode("ascii"),
             "digest": r.declared_digest}
            for r in exam.resources
        ],
    }


def bundle_bytes(exam: ValidatedExam) -> bytes:
    """Canonical plaintext bundle: draft JSON, sorted keys, no whitespace."""
    return canonical_json_bytes(exam_to_draft(exam))


def exam_from_bundle(data: bytes,
                     max_resource_bytes: int = DEFAULT_MAX_RESOURCE_BYTES) -> ValidatedExam:
    try:
        draft = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedDraft(f"bundle is not a JSON document: {exc}") from exc
    return validate_exam(draft, max_resource_bytes=max_resource_bytes)


def load_exam_file(path: str | Path) -> dict[str, Any]:
    """Read an authoring document, resolving resource paths to sibling files.

    Returns the draft dict ready for :func:`validate_exam`; resource entries
    keep their declared digest and gain the loaded bytes.
    """
    path = Path(path)
    try:
        draft = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedDraft(f"cannot read exam file {path}: {exc}") from exc
    if not isinstance(draft, dict):
        raise MalformedDraft("authoring document must be a JSON object")
    for entry in draft.get("resources", []) or []:
        if isinstance(entry, dict) and "path" in entry and "bytes_b64" not in entry:
            rel = entry.pop("path")
            try:
                entry["bytes"] = (path.parent / rel).read_bytes()
            except OSError as exc:
                raise MalformedDraft(
                    f"resource {entry.get('id')!r}: cannot read {rel}: {exc}") from exc
    return draft


# ---------------------------------------------------------------------------
# Presentation order and answer key
# ---------------------------------------------------------------------------

def derive_presentation(exam: ValidatedExam,
                        session_token: bytes | str) -> PresentationOrder:
    """Derive the per-session shuffle from digest(exam_id || session_token).

    Deterministic: the same (exam, token) pair always reproduces the
    identical order.  Option shuffling applies to objective questions only.
    """
    token = session_token.encode("utf-8") if isinstance(session_token, str) \
        else bytes(session_token)
    seed = sha256(exam.exam_id.encode("utf-8") + b"\x1f" + token)
    stream = DigestStream(seed)
    question_order = tuple(stream.shuffle(len(exam.questions)))
    option_orders: dict[str, tuple[int, ...]] = {}
    for q in exam.questions:
        if q.kind == OBJECTIVE:
            option_orders[q.id] = tuple(stream.shuffle(len(q.options)))
    return PresentationOrder(question_order=question_order,
                             option_orders=option_orders, seed_digest=seed)


def candidate_view(exam: ValidatedExam, order: PresentationOrder) -> list[dict[str, Any]]:
    """The paper as the candidate sees it: shuffled, re-lettered, no answers."""
    paper = []
    for position, orig_idx in enumerate(order.question_order):
        q = exam.questions[orig_idx]
        entry: dict[str, Any] = {
            "position": position,
            "id": q.id,
            "kind": q.kind,
            "prompt": q.prompt,
            "resource_refs": list(q.resource_refs),
        }
        if q.kind == OBJECTIVE:
            perm = order.option_orders[q.id]
            entry["options"] = [
                {"label": OPTION_LABELS[p], "text": q.options[orig].text}
                for p, orig in enumerate(perm)
            ]
        else:
            entry["max_marks"] = q.max_marks
            entry["answer_sentinel"] = q.answer_sentinel
        paper.append(entry)
    return paper


def presented_option_labels(exam: ValidatedExam, question_id: str) -> str:
    q = exam.question(question_id)
    return OPTION_LABELS[:len(q.options)]


def canonical_answer_label(exam: ValidatedExam, order: PresentationOrder,
                           question_id: str, presented_label: str) -> str:
    """Map the label the candidate clicked back to the authored option label."""
    q = exam.question(question_id)
    perm = order.option_orders[question_id]
    pos = OPTION_LABELS.index(presented_label)
    return q.options[perm[pos]].label


def presented_label_for(exam: ValidatedExam, order: PresentationOrder,
                        question_id: str, canonical_label: str) -> str:
    """Inverse of :func:`canonical_answer_label` (used by drivers and tests)."""
    q = exam.question(question_id)
    orig_idx = next(i for i, o in enumerate(q.options) if o.label == canonical_label)
    perm = order.option_orders[question_id]
    return OPTION_LABELS[perm.index(orig_idx)]


def answer_key(exam: ValidatedExam) -> dict[str, str]:
    """question_id -> correct label, objective questions only."""
    return {q.id: q.correct_option for q in exam.questions if q.kind == OBJECTIVE}
