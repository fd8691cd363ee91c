"""Service configuration: one JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .ratelimit import RouteLimit, DEFAULT_LIMITS


class ConfigError(Exception):
    pass


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    datastore_path: str = "votegrid.db"
    audit_log_path: str = "audit.log"
    session_ttl_seconds: float = 3600.0
    otp_ttl_seconds: float = 300.0
    lockout_threshold: int = 3
    lockout_seconds: float = 900.0
    rate_limits: dict = field(default_factory=lambda: dict(DEFAULT_LIMITS))
    transport: str = "memory"  # memory | spool | live
    spool_dir: str = "outbox"
    smtp: dict = field(default_factory=dict)
    sms_gateway: dict = field(default_factory=dict)
    colleges: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    offices: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    admins: list = field(default_factory=list)

    def __post_init__(self):
        if self.session_ttl_seconds <= 0 or self.otp_ttl_seconds <= 0:
            raise ConfigError("session and OTP TTLs must be positive")
        if self.lockout_threshold < 1:
            raise ConfigError("lockout threshold must be at least 1")
        if self.lockout_seconds <= 0:
            raise ConfigError("lockout window must be positive")
        if self.transport not in ("memory", "spool", "live"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        normalized = {}
        for name, limit in self.rate_limits.items():
            if isinstance(limit, dict):
                limit = RouteLimit(per_minute=limit["per_minute"],
                                   burst=limit["burst"])
            normalized[name] = limit
        if "default" not in normalized:
            normalized["default"] = DEFAULT_LIMITS["default"]
        self.rate_limits = normalized

    def as_dict(self) -> dict:
        data = asdict(self)
        data["rate_limits"] = {name: {"per_minute": rl.per_minute, "burst": rl.burst}
                               for name, rl in self.rate_limits.items()}
        return data


_ENV_FIELDS = {
    "VOTEGRID_HOST": ("host", str),
    "VOTEGRID_PORT": ("port", int),
    "VOTEGRID_DATASTORE": ("datastore_path", str),
    "VOTEGRID_AUDIT_LOG": ("audit_log_path", str),
    "VOTEGRID_SESSION_TTL": ("session_ttl_seconds", float),
    "VOTEGRID_OTP_TTL": ("otp_ttl_seconds", float),
    "VOTEGRID_LOCKOUT_THRESHOLD": ("lockout_threshold", int),
    "VOTEGRID_LOCKOUT_SECONDS": ("lockout_seconds", float),
    "VOTEGRID_TRANSPORT": ("transport", str),
    "VOTEGRID_SPOOL_DIR": ("spool_dir", str),
}


def load_config(path: str | Path | None = None, env=os.environ) -> ApiConfig:
    """Read the config file (when given) and apply environment overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")

    unknown = set(data) - set(ApiConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    for var, (field_name, cast) in _ENV_FIELDS.items():
        if var in env:
            try:
                data[field_name] = cast(env[var])
            except ValueError as exc:
                raise ConfigError(f"bad value for {var}: {env[var]!r}") from exc

    try:
        return ApiConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
