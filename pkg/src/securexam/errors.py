"""Shared error base for every subsystem.

Every domain error carries a stable machine-readable ``code`` (defaulting to
the class name) that the service layer maps into its error envelope.  A
``public_code`` may differ from ``code`` when the externally visible signal
must not leak which check failed (e.g. wrong identity number vs unknown
candidate).
"""

from __future__ import annotations


class SecurexamError(Exception):
    code: str = "InternalError"
    retriable: bool = False

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if "code" not in cls.__dict__:
            cls.code = cls.__name__

    @property
    def public_code(self) -> str:
        return self.code
