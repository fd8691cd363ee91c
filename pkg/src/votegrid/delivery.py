"""Out-of-band message rendering and dispatch.

The secret is split across channels: the challenge email carries table
positions only, the SMS carries the six resolved characters only, and the
table itself is shown solely in the authenticated session.  No single message
is ever enough to answer a challenge.
"""

from __future__ import annotations

import json
import smtplib
import threading
import time
import uuid
from dataclasses import dataclass, asdict
from email.message import EmailMessage
from pathlib import Path

import httpx

from . import otp

SMS_MAX_LENGTH = 160
SMS_PREFIX = "INFO: "

EMAIL_CHALLENGE_SUBJECT = "Your voting code positions"

# Static text around the position tokens.  Everything here feeds the reserved
# bigram set, so instruction wording may change freely without risking an
# overlap between email text and generated table codes.
_EMAIL_CHALLENGE_TEMPLATE = (
    "Hello,\n"
    "\n"
    "A sign-in code was requested for your voter account. After you log in,\n"
    "find these positions in the code table and type the characters you see,\n"
    "left to right:\n"
    "\n"
    "    {tokens}\n"
    "\n"
    "R is the row and C is the column, counted from the top left. The code\n"
    "expires in {minutes} min. If you did not request it, contact the\n"
    "election administrator.\n"
)

EMAIL_APPROVAL_SUBJECT = "Voter registration approved"

_EMAIL_APPROVAL_TEMPLATE = (
    "Hello,\n"
    "\n"
    "Your voter registration has been approved. Keep this reference code for\n"
    "your records:\n"
    "\n"
    "    {reference_code}\n"
    "\n"
    "You can now log in and take part in the election.\n"
)


class DeliveryError(Exception):
    pass


class TransportError(DeliveryError):
    """A transport failed to hand the message over; dispatch may retry."""


@dataclass(frozen=True)
class OutboundMessage:
    channel: str  # "email" | "sms"
    recipient: str
    subject: str | None
    body: str
    correlation_id: str

    def __post_init__(self):
        if self.channel not in ("email", "sms"):
            raise DeliveryError(f"unknown channel {self.channel!r}")
        if self.channel == "sms" and len(self.body) > SMS_MAX_LENGTH:
            raise DeliveryError(f"sms body exceeds {SMS_MAX_LENGTH} characters")


@dataclass(frozen=True)
class DeliveryReceipt:
    message: OutboundMessage
    attempts: int
    delivered_at: float


@dataclass(frozen=True)
class DeliveryFailure:
    message: OutboundMessage
    attempts: int
    error: str


def coordinate_token(coordinate: otp.Coordinate) -> str:
    return f"R{coordinate.row}C{coordinate.col}"


def coordinate_tokens(challenge: otp.Challenge) -> str:
    return " ".join(coordinate_token(c) for c in challenge.coordinates)


def _ttl_minutes(ttl_seconds: float) -> int:
    return max(1, round(ttl_seconds / 60))


def render_email_challenge(voter, challenge: otp.Challenge,
                           correlation_id: str) -> OutboundMessage:
    """Email naming the challenged positions as RxCy tokens; never cell values."""
    if not getattr(voter, "email", ""):
        raise DeliveryError("voter has no email address")
    body = _EMAIL_CHALLENGE_TEMPLATE.format(
        tokens=coordinate_tokens(challenge),
        minutes=_ttl_minutes(challenge.ttl),
    )
    return OutboundMessage("email", voter.email, EMAIL_CHALLENGE_SUBJECT,
                           body, correlation_id)


def render_sms_values(voter, table: otp.OtpTable,
                      challenge: otp.Challenge) -> OutboundMessage:
    """SMS with the resolved characters grouped per cell; never positions."""
    if not getattr(voter, "contact_number", ""):
        raise DeliveryError("voter has no contact number")
    values = " ".join(table.cell(c) for c in challenge.coordinates)
    return OutboundMessage("sms", voter.contact_number, None,
                           SMS_PREFIX + values, table.table_id)


def render_email_approval(voter, reference_code: str,
                          correlation_id: str) -> OutboundMessage:
    if not getattr(voter, "email", ""):
        raise DeliveryError("voter has no email address")
    body = _EMAIL_APPROVAL_TEMPLATE.format(reference_code=reference_code)
    return OutboundMessage("email", voter.email, EMAIL_APPROVAL_SUBJECT,
                           body, correlation_id)


def reserved_code_bigrams(ttl_seconds: float = otp.DEFAULT_TTL_SECONDS) -> frozenset[str]:
    """Every two-character run that can appear in a challenge email.

    Table generation excludes these codes, which guarantees that no substring
    of any challenge email ever matches a table cell, whatever positions are
    drawn.
    """
    all_tokens = " ".join(
        coordinate_token(otp.coordinate_from_index(i)) for i in range(otp.TABLE_CELLS))
    probe = (EMAIL_CHALLENGE_SUBJECT + "\n"
             + _EMAIL_CHALLENGE_TEMPLATE.format(tokens=all_tokens,
                                                minutes=_ttl_minutes(ttl_seconds)))
    bigrams = set()
    for i in range(len(probe) - 1):
        a, b = probe[i], probe[i + 1]
        if a.isalnum() and b.isalnum() and a != b:
            bigrams.add(a + b)
    return frozenset(bigrams)


class MemoryTransport:
    """Captures messages verbatim; the test double and dev default."""

    def __init__(self):
        self.sent: list[OutboundMessage] = []
        self._lock = threading.Lock()

    def send(self, message: OutboundMessage) -> None:
        with self._lock:
            self.sent.append(message)

    def for_recipient(self, recipient: str) -> list[OutboundMessage]:
        with self._lock:
            return [m for m in self.sent if m.recipient == recipient]


class FileSpoolTransport:
    """Writes each message as one JSON file into an outbox directory."""

    def __init__(self, outbox_dir: str | Path):
        self.outbox = Path(outbox_dir)
        self.outbox.mkdir(parents=True, exist_ok=True)

    def send(self, message: OutboundMessage) -> None:
        name = f"{int(time.time() * 1000):016d}-{uuid.uuid4().hex}.json"
        try:
            path = self.outbox / name
            path.write_text(json.dumps(asdict(message), sort_keys=True, indent=2),
                            encoding="utf-8")
        except OSError as exc:
            raise TransportError(f"spool write failed: {exc}") from exc


class SmtpTransport:
    """Plain SMTP adapter; endpoint and credentials come from configuration."""

    def __init__(self, host: str, port: int = 25, sender: str = "",
                 username: str = "", password: str = "", use_tls: bool = False):
        self.host = host
        self.port = port
        self.sender = sender
        self.username = username
        self.password = password
        self.use_tls = use_tls

    def send(self, message: OutboundMessage) -> None:
        mail = EmailMessage()
        mail["From"] = self.sender
        mail["To"] = message.recipient
        mail["Subject"] = message.subject or ""
        mail.set_content(message.body)
        try:
            with smtplib.SMTP(self.host, self.port, timeout=30) as conn:
                if self.use_tls:
                    conn.starttls()
                if self.username:
                    conn.login(self.username, self.password)
                conn.send_message(mail)
        except (OSError, smtplib.SMTPException) as exc:
            raise TransportError(f"smtp send failed: {exc}") from exc


class HttpGatewayTransport:
    """Generic JSON POST adapter for SMS gateway endpoints."""

    def __init__(self, url: str, token: str = "", timeout: float = 30.0):
        self.url = url
        self.token = token
        self.timeout = timeout

    def send(self, message: OutboundMessage) -> None:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            response = httpx.post(
                self.url,
                json={"to": message.recipient, "body": message.body},
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(f"gateway send failed: {exc}") from exc


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 1.0
    multiplier: float = 2.0

    def delay(self, attempt: int) -> float:
        return self.base_delay * self.multiplier ** (attempt - 1)


class Dispatcher:
    """Routes messages to the per-channel transports with retries.

    On delivered OTP material the configured audit log gets an ``otp_sent``
    event, ordered after the requesting operation's own event because
    dispatch runs on the requester's call path.
    """

    def __init__(self, email_transport=None, sms_transport=None,
                 audit_log=None, retry: RetryPolicy = RetryPolicy(),
                 sleep=time.sleep):
        self.transports = {"email": email_transport, "sms": sms_transport}
        self._audit_log = audit_log
        self._retry = retry
        self._sleep = sleep

    def dispatch(self, message: OutboundMessage, actor: str = "system",
                 audit_event: str | None = None) -> DeliveryReceipt | DeliveryFailure:
        transport = self.transports.get(message.channel)
        if transport is None:
            return DeliveryFailure(message, 0,
                                   f"no transport configured for {message.channel}")
        if not message.recipient:
            return DeliveryFailure(message, 0, "empty recipient")

        last_error = ""
        for attempt in range(1, self._retry.attempts + 1):
            try:
                transport.send(message)
            except TransportError as exc:
                last_error = str(exc)
                if attempt < self._retry.attempts:
                    self._sleep(self._retry.delay(attempt))
                continue
            if self._audit_log is not None and audit_event is not None:
                self._audit_log.append_event(actor, audit_event, {
                    "channel": message.channel,
                    "correlation_id": message.correlation_id,
                })
            return DeliveryReceipt(message, attempt, time.time())
        return DeliveryFailure(message, self._retry.attempts, last_error)
