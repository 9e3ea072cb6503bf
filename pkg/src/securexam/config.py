"""Service configuration: JSON file with environment-variable overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import SecurexamError

ENV_PREFIX = "SECUREXAM_"


class ConfigError(SecurexamError):
    pass


@dataclass
class ServiceConfig:
    port: int = 8040
    question_store_path: str = "stores/questions"
    candidate_store_path: str = "stores/candidates"
    embargo_hours: float = 24.0
    pre_exam_window_minutes: int = 60
    default_capacity: int = 500
    sittings_per_day: int = 3
    rate_limit_failures: int = 6
    rate_limit_window_seconds: float = 60.0
    admin_token: str = ""
    center_key_path: str = ""
    # Simulated-clock endpoints for integration testing; never enable in
    # production.
    test_clock: bool = False

    def to_json(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ServiceConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Path | str | None = None,
             env: dict[str, str] | None = None) -> "ServiceConfig":
        """File values first, then SECUREXAM_* environment overrides."""
        data: dict[str, Any] = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file not found: {p}")
            try:
                data = json.loads(p.read_text("utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{p}: top level must be an object")

        environ = env if env is not None else dict(os.environ)
        casts = {
            int: lambda v: int(v),
            float: lambda v: float(v),
            bool: lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
            str: lambda v: v,
        }
        hints = {"port": int, "embargo_hours": float,
                 "pre_exam_window_minutes": int, "default_capacity": int,
                 "sittings_per_day": int, "rate_limit_failures": int,
                 "rate_limit_window_seconds": float, "test_clock": bool}
        for f in fields(cls):
            env_key = ENV_PREFIX + f.name.upper()
            if env_key in environ:
                cast = casts[hints.get(f.name, str)]
                try:
                    data[f.name] = cast(environ[env_key])
                except ValueError as exc:
                    raise ConfigError(f"{env_key}: {exc}") from exc
        return cls.from_mapping(data)

    def validate(self) -> None:
        if not (0 < self.port < 65536):
            raise ConfigError("port must be in 1..65535")
        if self.embargo_hours < 0:
            raise ConfigError("embargo_hours must be non-negative")
        if self.pre_exam_window_minutes < 0:
            raise ConfigError("pre_exam_window_minutes must be non-negative")
        if self.default_capacity < 1:
            raise ConfigError("default_capacity must be at least 1")
        if self.sittings_per_day < 1:
            raise ConfigError("sittings_per_day must be at least 1")
        if self.rate_limit_failures < 1:
            raise ConfigError("rate_limit_failures must be at least 1")
