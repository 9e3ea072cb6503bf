"""On-disk persistence, split across two stores.

The question store holds sealed packages, schedules, and public keys; it
never sees candidate identities.  The candidate store holds the roster,
answer scripts, scores, scratch cards, and the audit log; it never holds
plaintext exam content from before a sitting opened.  Unsealed exams stay
in memory only.

Writes go through a temp file + rename so a crash can't leave a torn JSON
document behind.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

from .canonical import canonical_json_bytes, sha256_hex
from .errors import SecurexamError


class StoreError(SecurexamError):
    pass


class CorruptStore(StoreError):
    pass


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class JsonFile:
    """A single JSON document with atomic replace-on-write."""

    def __init__(self, path: Path, default: Any = None):
        self.path = Path(path)
        self._default = default
        self._lock = threading.Lock()

    def read(self) -> Any:
        with self._lock:
            if not self.path.exists():
                return json.loads(json.dumps(self._default)) \
                    if self._default is not None else None
            try:
                return json.loads(self.path.read_text("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CorruptStore(f"{self.path}: {exc}") from exc

    def write(self, value: Any) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(self.path, json.dumps(
                value, indent=2, sort_keys=True).encode("utf-8") + b"\n")

    def update(self, fn) -> Any:
        """Read-modify-write under the file lock; fn gets the current value."""
        with self._lock:
            if self.path.exists():
                try:
                    current = json.loads(self.path.read_text("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    raise CorruptStore(f"{self.path}: {exc}") from exc
            elif self._default is not None:
                current = json.loads(json.dumps(self._default))
            else:
                current = None
            value = fn(current)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(self.path, json.dumps(
                value, indent=2, sort_keys=True).encode("utf-8") + b"\n")
            return value


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    at: str
    actor: str  # "role:id", e.g. "candidate:2016/1/60943PA"
    action: str
    outcome: str  # "ok" or the error code
    detail: dict[str, Any]
    digest: str

    def to_json(self) -> dict[str, Any]:
        return {"seq": self.seq, "at": self.at, "actor": self.actor,
                "action": self.action, "outcome": self.outcome,
                "detail": self.detail, "digest": self.digest}


class AuditLog:
    """Append-only JSONL event log with strictly increasing sequence numbers.

    Each line carries a digest over its own body so after-the-fact edits are
    detectable by replay.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._next_seq = self._scan_next_seq()

    def _scan_next_seq(self) -> int:
        if not self.path.exists():
            return 1
        last = 0
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    last = json.loads(line)["seq"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise CorruptStore(f"{self.path}: bad audit line") from exc
        return last + 1

    def append(self, actor: str, action: str, outcome: str = "ok",
               detail: dict[str, Any] | None = None,
               at: datetime | None = None) -> AuditEvent:
        with self._lock:
            stamp = (at or datetime.now(timezone.utc)).isoformat()
            seq = self._next_seq
            detail = detail or {}
            body = {"seq": seq, "at": stamp, "actor": actor,
                    "action": action, "outcome": outcome, "detail": detail}
            event = AuditEvent(seq=seq, at=stamp, actor=actor, action=action,
                               outcome=outcome, detail=detail,
                               digest=sha256_hex(canonical_json_bytes(body)))
            self.path.parent.mkdir(parents=True, exist_ok=True)
            # one line per write keeps concurrent appenders line-atomic;
            # durability is flush-on-close, not fsync, to keep busy exam
            # days responsive
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
            self._next_seq = seq + 1
            return event

    def events(self) -> Iterator[AuditEvent]:
        if not self.path.exists():
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                yield AuditEvent(seq=data["seq"], at=data["at"],
                                 actor=data["actor"], action=data["action"],
                                 outcome=data["outcome"],
                                 detail=data["detail"], digest=data["digest"])

    def verify(self) -> bool:
        """Replay the log: digests must match and seq must strictly increase."""
        prev = 0
        for event in self.events():
            body = {"seq": event.seq, "at": event.at, "actor": event.actor,
                    "action": event.action, "outcome": event.outcome,
                    "detail": event.detail}
            if event.digest != sha256_hex(canonical_json_bytes(body)):
                return False
            if event.seq <= prev:
                return False
            prev = event.seq
        return True


class QuestionStore:
    """Sealed packages, schedules, registered public keys.  No PII."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "packages").mkdir(exist_ok=True)
        (self.root / "keys").mkdir(exist_ok=True)
        self.schedules = JsonFile(self.root / "schedules.json", default={})
        self.package_index = JsonFile(self.root / "packages.json", default={})

    def save_package(self, exam_id: str, blob: bytes,
                     meta: dict[str, Any]) -> Path:
        path = self.root / "packages" / f"{exam_id}.pkg"
        _atomic_write(path, blob)
        self.package_index.update(
            lambda idx: {**(idx or {}), exam_id: meta})
        return path

    def load_package(self, exam_id: str) -> bytes:
        path = self.root / "packages" / f"{exam_id}.pkg"
        if not path.exists():
            raise StoreError(f"no package stored for exam {exam_id!r}")
        return path.read_bytes()

    def has_package(self, exam_id: str) -> bool:
        return (self.root / "packages" / f"{exam_id}.pkg").exists()

    def save_public_key(self, name: str, blob: bytes) -> Path:
        path = self.root / "keys" / f"{name}.pub"
        _atomic_write(path, blob)
        return path

    def load_public_key(self, name: str) -> bytes:
        path = self.root / "keys" / f"{name}.pub"
        if not path.exists():
            raise StoreError(f"no registered key named {name!r}")
        return path.read_bytes()

    def public_keys(self) -> dict[str, bytes]:
        return {p.stem: p.read_bytes()
                for p in sorted((self.root / "keys").glob("*.pub"))}


class RecordDir:
    """One JSON file per record, named by a digest of the record key.

    Writes stay O(1) per record however many records exist; the key fields
    live inside the document, so listing recovers everything.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / (sha256_hex(key.encode("utf-8"))[:40] + ".json")

    def put(self, key: str, doc: dict[str, Any]) -> None:
        _atomic_write(self._path(key), json.dumps(
            doc, indent=2, sort_keys=True).encode("utf-8") + b"\n")

    def get(self, key: str) -> dict[str, Any] | None:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptStore(f"{path}: {exc}") from exc

    def all(self) -> list[dict[str, Any]]:
        docs = []
        for path in sorted(self.root.glob("*.json")):
            try:
                docs.append(json.loads(path.read_text("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CorruptStore(f"{path}: {exc}") from exc
        return docs


class CandidateStore:
    """Roster, scripts, scores, scratch cards, audit log."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.roster = JsonFile(self.root / "roster.json", default=[])
        self.scripts = RecordDir(self.root / "scripts")
        self.scores = RecordDir(self.root / "scores")
        self.cards = RecordDir(self.root / "cards")
        self.audit = AuditLog(self.root / "audit.jsonl")


@dataclass
class StoreLayout:
    question_store: QuestionStore
    candidate_store: CandidateStore

    @classmethod
    def at(cls, question_root: Path, candidate_root: Path) -> "StoreLayout":
        return cls(question_store=QuestionStore(question_root),
                   candidate_store=CandidateStore(candidate_root))
