"""Lockdown verification and the per-sitting security image.

Clients report their lockdown posture (communications off, external storage
blocked, a digest of their sanctioned runtime bundle); the server verifies
the claims against the expected digest before a session may activate.  The
security image gives non-technical invigilators a glance check: every
screen in a sitting must show the same glyph and 4-letter confirm code,
both derived deterministically from the sealed package fingerprint and the
sitting id.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources as importlib_resources
from typing import Any

from .canonical import sha256
from .errors import SecurexamError

CATALOG_SIZE = 64
CONFIRM_CODE_LEN = 4

MEASURE_COMMUNICATIONS = "communications"
MEASURE_EXTERNAL_STORAGE = "external-storage"
MEASURE_ENVIRONMENT = "environment-digest"


class AttestationError(SecurexamError):
    pass


class UnknownSitting(AttestationError):
    pass


@dataclass(frozen=True)
class LockdownReport:
    """A client's claims; verified, never trusted."""
    communications_disabled: bool
    external_storage_blocked: bool
    environment_digest: bytes
    client_time: datetime | None = None  # informational only


@dataclass(frozen=True)
class LockdownVerdict:
    passed: bool
    violations: tuple[str, ...]  # every violated measure, not just the first


@dataclass(frozen=True)
class SecurityImage:
    sitting_id: str
    image_index: int
    confirm_code: str
    derivation: bytes  # digest(package fingerprint || sitting_id)

    def to_json(self) -> dict[str, Any]:
        return {"sitting_id": self.sitting_id, "image_index": self.image_index,
                "confirm_code": self.confirm_code,
                "derivation": self.derivation.hex()}


def verify_lockdown(report: LockdownReport,
                    expected_digest: bytes) -> LockdownVerdict:
    """Pass iff both measures hold and the environment digest matches."""
    violations = []
    if not report.communications_disabled:
        violations.append(MEASURE_COMMUNICATIONS)
    if not report.external_storage_blocked:
        violations.append(MEASURE_EXTERNAL_STORAGE)
    if report.environment_digest != expected_digest:
        violations.append(MEASURE_ENVIRONMENT)
    return LockdownVerdict(passed=not violations, violations=tuple(violations))


def derive_security_image(package_fingerprint: bytes,
                          sitting_id: str) -> SecurityImage:
    """Deterministic glyph index + confirm code for one sitting.

    First digest byte picks the glyph (mod 64), the next four map to A-Z.
    """
    digest = sha256(package_fingerprint + sitting_id.encode("utf-8"))
    image_index = digest[0] % CATALOG_SIZE
    code = "".join(chr(ord("A") + digest[1 + i] % 26)
                   for i in range(CONFIRM_CODE_LEN))
    return SecurityImage(sitting_id=sitting_id, image_index=image_index,
                         confirm_code=code, derivation=digest)


# ---------------------------------------------------------------------------
# Glyph catalog (static assets)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlyphEntry:
    index: int
    name: str
    path: str


_catalog_cache: list[GlyphEntry] | None = None


def glyph_catalog() -> list[GlyphEntry]:
    global _catalog_cache
    if _catalog_cache is None:
        raw = json.loads(
            importlib_resources.files("securexam.assets.glyphs")
            .joinpath("catalog.json").read_text(encoding="utf-8"))
        entries = [GlyphEntry(index=e["index"], name=e["name"], path=e["path"])
                   for e in raw]
        if len(entries) != CATALOG_SIZE:
            raise AttestationError("glyph catalog must hold exactly 64 entries")
        _catalog_cache = sorted(entries, key=lambda e: e.index)
    return _catalog_cache


def glyph_for(image_index: int) -> GlyphEntry:
    return glyph_catalog()[image_index]


# ---------------------------------------------------------------------------
# Invigilator confirmation registry
# ---------------------------------------------------------------------------

class ImageRegistry:
    """Derived security images per sitting plus an append-only confirm log."""

    def __init__(self):
        self._images: dict[str, SecurityImage] = {}
        self._log: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def publish(self, image: SecurityImage) -> None:
        with self._lock:
            self._images[image.sitting_id] = image

    def image_for(self, sitting_id: str) -> SecurityImage:
        with self._lock:
            if sitting_id not in self._images:
                raise UnknownSitting(f"no security image for sitting {sitting_id!r}")
            return self._images[sitting_id]

    def invigilator_confirm(self, sitting_id: str, observed_index: int,
                            observed_code: str,
                            at: datetime | None = None) -> str:
        """'confirmed' when both observations match the derived image."""
        image = self.image_for(sitting_id)
        outcome = "confirmed" if (observed_index == image.image_index
                                  and observed_code == image.confirm_code) \
            else "mismatch"
        with self._lock:
            self._log.append({
                "sitting_id": sitting_id,
                "observed_index": observed_index,
                "observed_code": observed_code,
                "outcome": outcome,
                "at": at.isoformat() if at else None,
            })
        return outcome

    @property
    def confirmations(self) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._log)
