"""Sealed exam packages: sign-then-encrypt containers safe to post online.

A package is built in this order: canonical-serialize the exam bundle,
digest it, write a plaintext manifest naming author / recipients / payload
digest, sign the manifest, then encrypt the bundle under a fresh 256-bit
content key which is encapsulated separately to each recipient.  Authorship
is therefore checkable before any decryption is attempted, and the payload
digest in the signed manifest pins the plaintext end-to-end.

Primitive choices (recorded in the manifest for algorithm agility):

  signature   Ed25519 over the canonical manifest bytes
  kem         X25519 ephemeral-static ECDH + HKDF-SHA256 per recipient
  aead        ChaCha20-Poly1305, fresh random content key and nonce
  digest      SHA-256

Key files and the package container are little-endian length-prefixed
binary formats described next to their readers below.  Private key bytes
never appear in a package, a manifest or a log line.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from .canonical import canonical_json_bytes, sha256, sha256_hex
from .errors import SecurexamError
from .exam_model import ValidatedExam, bundle_bytes, exam_from_bundle

MAGIC = b"SECUREXAM-PKG\x00\x00\x00"
assert len(MAGIC) == 16

PACKAGE_FORMAT = "securexam-pkg/1"
SCHEME = {
    "sig": "ed25519",
    "kem": "x25519-hkdf-sha256",
    "aead": "chacha20poly1305",
    "digest": "sha256",
}

ROLES = ("lecturer", "center")
_ROLE_BYTE = {"lecturer": 0x01, "center": 0x02}
_BYTE_ROLE = {v: k for k, v in _ROLE_BYTE.items()}

_KEK_INFO = b"securexam/kek/v1"
_NONCE_LEN = 12
_KEY_LEN = 32
# encapsulation block: recipient key_id(32) || ephemeral pub(32) || nonce(12)
#                      || wrapped content key(32+16 tag)
_ENCAP_LEN = 32 + 32 + _NONCE_LEN + _KEY_LEN + 16


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class SealingError(SecurexamError):
    pass


class RandomnessUnavailable(SealingError):
    pass


class NoRecipients(SealingError):
    pass


class SerializationFailure(SealingError):
    pass


class BadSignature(SealingError):
    pass


class NotARecipient(SealingError):
    pass


class Tampered(SealingError):
    pass


class MalformedPackage(Tampered):
    """Container cannot be parsed; treated as tampering."""
    code = "Tampered"


class InvalidPayload(SealingError):
    pass


class BadKeyFile(SealingError):
    pass


# ---------------------------------------------------------------------------
# Key pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyPair:
    """Signing + decryption identity for one role.

    ``public_part`` is ed25519_pub(32) || x25519_pub(32); ``private_part``
    mirrors it with the raw private halves and is None for public-only keys.
    ``key_id`` is the SHA-256 of the public part.
    """

    role: str
    public_part: bytes
    private_part: bytes | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise BadKeyFile(f"unknown key role {self.role!r}")
        if len(self.public_part) != 64:
            raise BadKeyFile("public part must be 64 bytes")
        if self.private_part is not None and len(self.private_part) != 64:
            raise BadKeyFile("private part must be 64 bytes")

    def __repr__(self) -> str:  # never echo private material
        return f"KeyPair(role={self.role!r}, key_id={self.key_id_hex[:16]}...)"

    @property
    def key_id(self) -> bytes:
        return sha256(self.public_part)

    @property
    def key_id_hex(self) -> str:
        return sha256_hex(self.public_part)

    @property
    def has_private(self) -> bool:
        return self.private_part is not None

    def public_only(self) -> "KeyPair":
        return KeyPair(role=self.role, public_part=self.public_part)

    # -- internal primitive accessors ------------------------------------

    def _sign_key(self) -> Ed25519PrivateKey:
        if self.private_part is None:
            raise BadKeyFile("no private part available")
        return Ed25519PrivateKey.from_private_bytes(self.private_part[:32])

    def _kem_key(self) -> X25519PrivateKey:
        if self.private_part is None:
            raise BadKeyFile("no private part available")
        return X25519PrivateKey.from_private_bytes(self.private_part[32:])

    def _verify_key(self) -> Ed25519PublicKey:
        return Ed25519PublicKey.from_public_bytes(self.public_part[:32])

    def _kem_pub(self) -> X25519PublicKey:
        return X25519PublicKey.from_public_bytes(self.public_part[32:])

    def sign(self, data: bytes) -> bytes:
        return self._sign_key().sign(data)

    def verify(self, signature: bytes, data: bytes) -> bool:
        try:
            self._verify_key().verify(signature, data)
            return True
        except InvalidSignature:
            return False


def _raw_private(key) -> bytes:
    return key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())


def _raw_public(key) -> bytes:
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


def generate_keypair(role: str) -> KeyPair:
    """Fresh keypair from the OS CSPRNG."""
    try:
        os.urandom(1)
    except NotImplementedError as exc:  # pragma: no cover - platform defect
        raise RandomnessUnavailable("no OS randomness source") from exc
    sign_key = Ed25519PrivateKey.generate()
    kem_key = X25519PrivateKey.generate()
    return KeyPair(
        role=role,
        public_part=_raw_public(sign_key.public_key()) + _raw_public(kem_key.public_key()),
        private_part=_raw_private(sign_key) + _raw_private(kem_key),
    )


# Key file: role byte, u32 LE pub length, pub bytes, u32 LE priv length,
# priv bytes (zero length for public-only exports).

def save_key_file(pair: KeyPair, path: str | Path, include_private: bool = True) -> None:
    priv = pair.private_part if (include_private and pair.private_part) else b""
    blob = (bytes([_ROLE_BYTE[pair.role]])
            + struct.pack("<I", len(pair.public_part)) + pair.public_part
            + struct.pack("<I", len(priv)) + priv)
    Path(path).write_bytes(blob)


def load_key_file(path: str | Path) -> KeyPair:
    blob = Path(path).read_bytes()
    try:
        role = _BYTE_ROLE[blob[0]]
        off = 1
        (pub_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        pub = blob[off:off + pub_len]
        if len(pub) != pub_len:
            raise ValueError("truncated public part")
        off += pub_len
        (priv_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        priv = blob[off:off + priv_len]
        if len(priv) != priv_len:
            raise ValueError("truncated private part")
    except (IndexError, KeyError, ValueError, struct.error) as exc:
        raise BadKeyFile(f"cannot parse key file {path}: {exc}") from exc
    return KeyPair(role=role, public_part=pub,
                   private_part=priv if priv else None)


# ---------------------------------------------------------------------------
# Package container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExamPackage:
    manifest: dict[str, Any]
    manifest_bytes: bytes
    signature: bytes
    encapsulated_keys: tuple[bytes, ...]
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        parts = [MAGIC,
                 struct.pack("<I", len(self.manifest_bytes)), self.manifest_bytes,
                 struct.pack("<I", len(self.signature)), self.signature,
                 struct.pack("<I", len(self.encapsulated_keys))]
        for block in self.encapsulated_keys:
            parts.append(struct.pack("<I", len(block)))
            parts.append(block)
        parts.append(self.ciphertext)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ExamPackage":
        if blob[:16] != MAGIC:
            raise MalformedPackage("bad magic header")
        off = 16
        try:
            (mlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            manifest_bytes = blob[off:off + mlen]
            if len(manifest_bytes) != mlen:
                raise ValueError("truncated manifest")
            off += mlen
            (slen,) = struct.unpack_from("<I", blob, off)
            off += 4
            signature = blob[off:off + slen]
            if len(signature) != slen:
                raise ValueError("truncated signature")
            off += slen
            (count,) = struct.unpack_from("<I", blob, off)
            off += 4
            if count == 0 or count > 4096:
                raise ValueError(f"implausible encapsulation count {count}")
            blocks = []
            for _ in range(count):
                (blen,) = struct.unpack_from("<I", blob, off)
                off += 4
                block = blob[off:off + blen]
                if len(block) != blen:
                    raise ValueError("truncated encapsulation block")
                off += blen
                blocks.append(block)
            ciphertext = blob[off:]
            manifest = json.loads(manifest_bytes.decode("utf-8"))
            if not isinstance(manifest, dict):
                raise ValueError("manifest is not an object")
        except (ValueError, struct.error, UnicodeDecodeError,
                json.JSONDecodeError) as exc:
            raise MalformedPackage(f"cannot parse package: {exc}") from exc
        return cls(manifest=manifest, manifest_bytes=manifest_bytes,
                   signature=signature, encapsulated_keys=tuple(blocks),
                   ciphertext=ciphertext)


def _hkdf_kek(shared: bytes, ephemeral_pub: bytes, recipient_kem_pub: bytes) -> bytes:
    return HKDF(algorithm=SHA256(), length=_KEY_LEN, salt=None,
                info=_KEK_INFO + ephemeral_pub + recipient_kem_pub).derive(shared)


def seal_exam(exam: ValidatedExam, author: KeyPair,
              recipients: Sequence[KeyPair]) -> ExamPackage:
    """Seal a validated exam for a non-empty set of recipient public keys."""
    if not recipients:
        raise NoRecipients("at least one recipient public key is required")
    if not author.has_private:
        raise BadKeyFile("author keypair has no private part")

    try:
        plaintext = bundle_bytes(exam)
    except Exception as exc:
        raise SerializationFailure(f"cannot serialize exam bundle: {exc}") from exc

    manifest = {
        "format": PACKAGE_FORMAT,
        "scheme": SCHEME,
        "exam_id": exam.exam_id,
        "course_code": exam.course_code,
        "author_key_id": author.key_id_hex,
        "recipient_key_ids": [r.key_id_hex for r in recipients],
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "payload_digest": sha256_hex(plaintext),
    }
    manifest_bytes = canonical_json_bytes(manifest)
    signature = author.sign(manifest_bytes)
    manifest_digest = sha256(manifest_bytes)

    content_key = os.urandom(_KEY_LEN)
    blocks = []
    for recipient in recipients:
        ephemeral = X25519PrivateKey.generate()
        ephemeral_pub = _raw_public(ephemeral.public_key())
        recipient_kem_pub = recipient.public_part[32:]
        kek = _hkdf_kek(ephemeral.exchange(recipient._kem_pub()),
                        ephemeral_pub, recipient_kem_pub)
        nonce = os.urandom(_NONCE_LEN)
        wrapped = ChaCha20Poly1305(kek).encrypt(nonce, content_key, manifest_digest)
        blocks.append(recipient.key_id + ephemeral_pub + nonce + wrapped)

    payload_nonce = os.urandom(_NONCE_LEN)
    ciphertext = payload_nonce + ChaCha20Poly1305(content_key).encrypt(
        payload_nonce, plaintext, manifest_digest)

    return ExamPackage(manifest=manifest, manifest_bytes=manifest_bytes,
                       signature=signature, encapsulated_keys=tuple(blocks),
                       ciphertext=ciphertext)


def unseal_exam(pkg: ExamPackage | bytes, recipient: KeyPair,
                author_public: KeyPair) -> ValidatedExam:
    """Verify signature, decrypt, re-validate; all-or-nothing.

    Signature verification runs before any decryption is attempted, so a
    package with a forged or foreign manifest is rejected without touching
    key material.
    """
    if isinstance(pkg, (bytes, bytearray)):
        pkg = ExamPackage.from_bytes(bytes(pkg))
    if not recipient.has_private:
        raise BadKeyFile("recipient keypair has no private part")

    manifest = pkg.manifest
    if manifest.get("author_key_id") != author_public.key_id_hex:
        raise BadSignature("manifest names a different author key")
    if not author_public.verify(pkg.signature, pkg.manifest_bytes):
        raise BadSignature("manifest signature does not verify")

    manifest_digest = sha256(pkg.manifest_bytes)
    my_id = recipient.key_id
    content_key = None
    for block in pkg.encapsulated_keys:
        if len(block) != _ENCAP_LEN or block[:32] != my_id:
            continue
        ephemeral_pub = block[32:64]
        nonce = block[64:64 + _NONCE_LEN]
        wrapped = block[64 + _NONCE_LEN:]
        try:
            shared = recipient._kem_key().exchange(
                X25519PublicKey.from_public_bytes(ephemeral_pub))
            kek = _hkdf_kek(shared, ephemeral_pub, recipient.public_part[32:])
            content_key = ChaCha20Poly1305(kek).decrypt(nonce, wrapped,
                                                        manifest_digest)
        except Exception as exc:
            raise Tampered(f"key encapsulation does not open: {exc}") from exc
        break
    if content_key is None:
        raise NotARecipient("no encapsulation block matches this key")

    if len(pkg.ciphertext) < _NONCE_LEN + 16:
        raise Tampered("ciphertext too short")
    nonce, body = pkg.ciphertext[:_NONCE_LEN], pkg.ciphertext[_NONCE_LEN:]
    try:
        plaintext = ChaCha20Poly1305(content_key).decrypt(nonce, body,
                                                          manifest_digest)
    except Exception as exc:
        raise Tampered(f"authenticated decryption failed: {exc}") from exc

    if sha256_hex(plaintext) != manifest.get("payload_digest"):
        raise Tampered("payload digest mismatch")

    try:
        exam = exam_from_bundle(plaintext)
    except SecurexamError as exc:
        raise InvalidPayload(f"decrypted bundle fails validation: {exc}") from exc
    if exam.exam_id != manifest.get("exam_id") \
            or exam.course_code != manifest.get("course_code"):
        raise InvalidPayload("manifest metadata disagrees with the exam bundle")
    return exam


def package_fingerprint(pkg: ExamPackage | bytes) -> bytes:
    """SHA-256 over the canonical package bytes; stable across re-reads."""
    blob = pkg if isinstance(pkg, (bytes, bytearray)) else pkg.to_bytes()
    return sha256(bytes(blob))


def package_fingerprint_hex(pkg: ExamPackage | bytes) -> str:
    return package_fingerprint(pkg).hex()
