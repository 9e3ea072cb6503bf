"""Canonical byte encodings shared by packaging, fingerprints and stores.

Digests are SHA-256 throughout.  Canonical JSON is defined as UTF-8 with
sorted keys and no insignificant whitespace, so two independent
implementations of the same document produce identical digests.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

DIGEST_SIZE = 32


def canonical_json_bytes(obj: Any) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class DigestStream:
    """Deterministic byte stream expanded from a 32-byte seed.

    Blocks are SHA256(seed || counter).  Used wherever an unbounded,
    reproducible stream of bytes is needed (permutation sampling).
    """

    def __init__(self, seed: bytes):
        self._seed = seed
        self._counter = 0
        self._buf = b""

    def take(self, n: int) -> bytes:
        while len(self._buf) < n:
            block = hashlib.sha256(
                self._seed + self._counter.to_bytes(8, "big")
            ).digest()
            self._buf += block
            self._counter += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def randbelow(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        if bound == 1:
            return 0
        nbytes = (bound.bit_length() + 7) // 8
        limit = (256**nbytes // bound) * bound
        while True:
            value = int.from_bytes(self.take(nbytes), "big")
            if value < limit:
                return value % bound

    def shuffle(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n), fully determined by the seed."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            order[i], order[j] = order[j], order[i]
        return order
