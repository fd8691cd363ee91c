"""Append-only, hash-chained audit log.

One JSON object per line.  Every record carries a digest of its predecessor,
so any edit to the file breaks the chain at or before the altered record.
Event payloads are stored only as one-way digests: the log proves that an
event happened without retaining its detail material.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, asdict
from pathlib import Path

GENESIS_PREV_HASH = "0" * 64
GENESIS_EVENT = "genesis"

EVENT_TYPES = frozenset({
    "registered", "approved", "rejected",
    "login_ok", "login_fail", "logout", "session_expired",
    "otp_requested", "otp_sent", "otp_verified", "otp_failed", "otp_locked",
    "ballot_cast", "election_opened", "election_closed",
})

_RECORD_FIELDS = ("seq", "at", "actor", "event_type", "detail_digest",
                  "prev_hash", "this_hash")


class AuditError(Exception):
    pass


class AuditWriteError(AuditError):
    """Raised when a record cannot be made durable; the caller must fail too."""


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    at: int
    actor: str
    event_type: str
    detail_digest: str
    prev_hash: str
    this_hash: str


@dataclass(frozen=True)
class ChainVerification:
    valid: bool
    broken_seq: int | None = None


def digest_payload(payload: dict | None) -> str:
    canonical = json.dumps(payload or {}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def record_hash(seq: int, at: int, actor: str, event_type: str,
                detail_digest: str, prev_hash: str) -> str:
    material = json.dumps([seq, at, actor, event_type, detail_digest, prev_hash],
                          separators=(",", ":"))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


def serialize_event(event: AuditEvent) -> str:
    return json.dumps(asdict(event), sort_keys=True, separators=(",", ":"))


def _parse_line(line: str) -> AuditEvent | None:
    """Parse one canonical record line; None when it is not byte-exact."""
    try:
        raw = json.loads(line)
    except (ValueError, UnicodeDecodeError):
        return None
    if not isinstance(raw, dict) or set(raw) != set(_RECORD_FIELDS):
        return None
    try:
        event = AuditEvent(**raw)
    except TypeError:
        return None
    if not isinstance(event.seq, int) or not isinstance(event.at, int):
        return None
    if not all(isinstance(getattr(event, f), str)
               for f in ("actor", "event_type", "detail_digest", "prev_hash", "this_hash")):
        return None
    # The writer emits exactly one canonical form; anything else is tampering.
    if serialize_event(event) != line:
        return None
    return event


class AuditLog:
    """Single-writer append-only log over one file."""

    def __init__(self, path: str | Path, clock=time.time, fsync: bool = True):
        self.path = Path(path)
        self._clock = clock
        self._fsync = fsync
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists() and self.path.stat().st_size > 0:
            tail = self._load_tail()
        else:
            tail = self._write_genesis()
        self._last_seq = tail.seq
        self._last_hash = tail.this_hash

    def _write_genesis(self) -> AuditEvent:
        genesis = AuditEvent(
            seq=0,
            at=int(self._clock()),
            actor="system",
            event_type=GENESIS_EVENT,
            detail_digest=digest_payload({}),
            prev_hash=GENESIS_PREV_HASH,
            this_hash="",
        )
        genesis = self._seal(genesis)
        self._append_line(serialize_event(genesis))
        return genesis

    @staticmethod
    def _seal(event: AuditEvent) -> AuditEvent:
        sealed_hash = record_hash(event.seq, event.at, event.actor,
                                  event.event_type, event.detail_digest,
                                  event.prev_hash)
        return AuditEvent(**{**asdict(event), "this_hash": sealed_hash})

    def _load_tail(self) -> AuditEvent:
        outcome = verify_file(self.path)
        if not outcome.valid:
            raise AuditError(
                f"audit log {self.path} fails chain verification at seq "
                f"{outcome.broken_seq}; refusing to append")
        last = None
        for line in self.path.read_text(encoding="utf-8").splitlines():
            last = _parse_line(line)
        assert last is not None
        return last

    def _append_line(self, line: str) -> None:
        try:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                if self._fsync:
                    os.fsync(handle.fileno())
        except OSError as exc:
            raise AuditWriteError(f"audit append failed: {exc}") from exc

    def append_event(self, actor: str, event_type: str,
                     payload: dict | None = None) -> AuditEvent:
        """Append one event; the record is durable before this returns."""
        if event_type not in EVENT_TYPES:
            raise AuditError(f"unknown event type {event_type!r}")
        with self._lock:
            event = self._seal(AuditEvent(
                seq=self._last_seq + 1,
                at=int(self._clock()),
                actor=actor,
                event_type=event_type,
                detail_digest=digest_payload(payload),
                prev_hash=self._last_hash,
                this_hash="",
            ))
            self._append_line(serialize_event(event))
            self._last_seq = event.seq
            self._last_hash = event.this_hash
            return event

    def events(self) -> list[AuditEvent]:
        """All committed events in seq order, genesis excluded."""
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            event = _parse_line(line)
            if event is not None and event.seq > 0:
                out.append(event)
        return out

    def query_events(self, actor: str | None = None,
                     event_type: str | None = None,
                     since: int | None = None,
                     until: int | None = None) -> list[AuditEvent]:
        """Filter events by actor, type and inclusive time range."""
        matched = []
        for event in self.events():
            if actor is not None and event.actor != actor:
                continue
            if event_type is not None and event.event_type != event_type:
                continue
            if since is not None and event.at < since:
                continue
            if until is not None and event.at > until:
                continue
            matched.append(event)
        return matched

    def verify_chain(self) -> ChainVerification:
        return verify_file(self.path)


def verify_file(path: str | Path) -> ChainVerification:
    """Recompute the full chain from the raw file bytes.

    Returns the first sequence number at which the stored bytes stop agreeing
    with the canonical record form, the hash recomputation, or the chain
    linkage.  A file altered mid-record reports the surrounding record.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError:
        return ChainVerification(False, 0)
    if not data:
        return ChainVerification(False, 0)

    chunks = data.split(b"\n")
    # A well-formed log ends with a newline, leaving one empty trailing chunk.
    trailing = chunks[-1]
    lines = chunks[:-1]
    if not lines:
        return ChainVerification(False, 0)

    expected_prev = GENESIS_PREV_HASH
    for index, raw in enumerate(lines):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            return ChainVerification(False, index)
        event = _parse_line(text)
        if event is None:
            return ChainVerification(False, index)
        if event.seq != index:
            return ChainVerification(False, index)
        if index == 0 and (event.event_type != GENESIS_EVENT
                           or event.prev_hash != GENESIS_PREV_HASH):
            return ChainVerification(False, 0)
        if event.prev_hash != expected_prev:
            return ChainVerification(False, index)
        recomputed = record_hash(event.seq, event.at, event.actor,
                                 event.event_type, event.detail_digest,
                                 event.prev_hash)
        if event.this_hash != recomputed:
            return ChainVerification(False, index)
        expected_prev = event.this_hash

    if trailing:
        # Bytes after the final newline are not part of any sealed record.
        return ChainVerification(False, len(lines))
    return ChainVerification(True)
