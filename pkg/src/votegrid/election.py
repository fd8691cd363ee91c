"""Election state machine.

Registration and approval, two-level login (password then grid-card OTP),
single-use ballot casting with a one-way voted flag, and live tallying.
Every state change lands in the audit log before the call returns.
"""

from __future__ import annotations

import hashlib
import hmac
import re
import secrets
import threading
import time
from dataclasses import dataclass

from . import delivery, otp, store
from .audit import AuditLog
from .delivery import Dispatcher
from .store import Ballot, Candidate, Datastore, VoterRecord

PASSWORD_ONLY = "password_only"
OTP_VERIFIED = "otp_verified"

DEFAULT_COLLEGES = ("Arts and Letters", "Business", "Education", "Engineering",
                    "Law", "Medicine", "Nursing", "Science")
DEFAULT_POSITIONS = ("Instructor", "Assistant Professor", "Associate Professor",
                     "Professor", "Non-teaching Staff")

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_CONTACT_RE = re.compile(r"^\+?[0-9][0-9 -]{5,19}$")

_SCRYPT_N = 2 ** 14
_SCRYPT_R = 8
_SCRYPT_P = 1


def hash_password(password: str) -> str:
    salt = secrets.token_bytes(16)
    key = hashlib.scrypt(password.encode("utf-8"), salt=salt,
                         n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P, dklen=32)
    return f"scrypt${_SCRYPT_N}${_SCRYPT_R}${_SCRYPT_P}${salt.hex()}${key.hex()}"


def verify_password(password: str, digest: str) -> bool:
    try:
        scheme, n, r, p, salt_hex, key_hex = digest.split("$")
        if scheme != "scrypt":
            return False
        key = hashlib.scrypt(password.encode("utf-8"), salt=bytes.fromhex(salt_hex),
                             n=int(n), r=int(r), p=int(p),
                             dklen=len(key_hex) // 2)
    except (ValueError, TypeError):
        return False
    return hmac.compare_digest(key.hex(), key_hex)


class ServiceError(Exception):
    """Domain failure with a stable machine-readable code."""

    code = "error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FieldError(ServiceError):
    code = "invalid_field"


class DuplicateVoterError(ServiceError):
    code = "duplicate_employee_id"


class InvalidCredentialsError(ServiceError):
    code = "invalid_credentials"


class NotApprovedError(ServiceError):
    code = "not_approved"


class NotEligibleError(ServiceError):
    code = "not_eligible"


class AlreadyVotedError(ServiceError):
    code = "already_voted"


class NotAdminError(ServiceError):
    code = "not_admin"


class NotPendingError(ServiceError):
    code = "not_pending"


class ElectionClosedError(ServiceError):
    code = "election_not_open"


class IllegalTransitionError(ServiceError):
    code = "illegal_transition"


class UnauthorizedError(ServiceError):
    code = "unauthorized"


class ForbiddenError(ServiceError):
    code = "forbidden"


class NoChallengeError(ServiceError):
    code = "no_challenge"


class OtpRejectedError(ServiceError):
    code = "otp_rejected"


class LockedOutError(ServiceError):
    code = "otp_locked"


@dataclass
class Session:
    token: str
    employee_id: str
    level: str
    expires_at: float
    is_admin: bool = False


@dataclass
class OtpFlow:
    """Per-voter OTP state: the seed chain and the live table/challenge."""

    seed: otp.SeedString
    table: otp.OtpTable | None = None
    challenge: otp.Challenge | None = None
    requests_made: int = 0


@dataclass(frozen=True)
class ChallengeIssued:
    table_id: str
    expires_at: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class TallySummary:
    offices: dict[str, dict[str, int]]
    total_ballots: int
    approved_voters: int
    voted_count: int

    @property
    def turnout(self) -> float:
        if self.approved_voters == 0:
            return 0.0
        return self.voted_count / self.approved_voters

    def as_dict(self) -> dict:
        return {
            "offices": {office: dict(counts) for office, counts in self.offices.items()},
            "total_ballots": self.total_ballots,
            "approved_voters": self.approved_voters,
            "voted_count": self.voted_count,
            "turnout": self.turnout,
        }


def office_order(candidates: list[Candidate], offices=()) -> list[str]:
    """Configured office order, or first-appearance order from candidates."""
    if offices:
        return list(offices)
    seen: list[str] = []
    for candidate in candidates:
        if candidate.office not in seen:
            seen.append(candidate.office)
    return seen


def tally_store(datastore: Datastore, offices=()) -> TallySummary:
    """Count every stored ballot per office and candidate, plus turnout."""
    candidates = datastore.list_candidates()
    ballots = datastore.list_ballots()
    counts: dict[str, dict[str, int]] = {}
    for office in office_order(candidates, offices):
        counts[office] = {c.candidate_id: 0 for c in candidates
                          if c.office == office}
    for ballot in ballots:
        for office, candidate_id in ballot.selections.items():
            if office in counts and candidate_id in counts[office]:
                counts[office][candidate_id] += 1
    return TallySummary(
        offices=counts,
        total_ballots=len(ballots),
        approved_voters=datastore.count_approved(),
        voted_count=datastore.count_voted(),
    )


class ElectionService:
    """All election operations over one datastore, audit log and dispatcher."""

    def __init__(self, datastore: Datastore, audit_log: AuditLog,
                 dispatcher: Dispatcher, *,
                 colleges=DEFAULT_COLLEGES, positions=DEFAULT_POSITIONS,
                 offices=(), otp_ttl: float = otp.DEFAULT_TTL_SECONDS,
                 session_ttl: float = 3600.0, lockout_threshold: int = 3,
                 lockout_seconds: float = 900.0, clock=time.time):
        self.store = datastore
        self.audit = audit_log
        self.dispatcher = dispatcher
        self.colleges = tuple(colleges)
        self.positions = tuple(positions)
        self.offices = tuple(offices)
        self.otp_ttl = otp_ttl
        self.session_ttl = session_ttl
        self.lockout_threshold = lockout_threshold
        self.lockout_seconds = lockout_seconds
        self._clock = clock
        self._lock = threading.RLock()
        self._sessions: dict[str, Session] = {}
        self._flows: dict[str, OtpFlow] = {}
        self._otp_failures: dict[str, int] = {}
        self._locked_until: dict[str, float] = {}
        # Codes that could collide with challenge-email text are never
        # generated, keeping the two channels disjoint by construction.
        self._reserved_bigrams = delivery.reserved_code_bigrams(otp_ttl)

    # -- registration and approval -----------------------------------------

    def register_voter(self, employee_id: str, password: str, lastname: str,
                       firstname: str, college: str, position: str,
                       contact_number: str, email: str) -> VoterRecord:
        employee_id = employee_id.strip()
        if not employee_id:
            raise FieldError("employee_id is required")
        if not password:
            raise FieldError("password is required")
        if not lastname.strip() or not firstname.strip():
            raise FieldError("lastname and firstname are required")
        if college not in self.colleges:
            raise FieldError(f"unknown college {college!r}")
        if position not in self.positions:
            raise FieldError(f"unknown position {position!r}")
        if not _EMAIL_RE.match(email):
            raise FieldError("malformed email address")
        if not _CONTACT_RE.match(contact_number):
            raise FieldError("malformed contact number")
        record = VoterRecord(
            employee_id=employee_id,
            password_digest=hash_password(password),
            lastname=lastname.strip(),
            firstname=firstname.strip(),
            college=college,
            position=position,
            contact_number=contact_number,
            email=email,
            reference_code="RC-" + secrets.token_hex(4).upper(),
            standing=store.GOOD,
            status=store.PENDING,
            voted=False,
            is_admin=False,
            registered_at=int(self._clock()),
        )
        with self._lock:
            if self.store.get_voter(employee_id) is not None:
                raise DuplicateVoterError(f"employee {employee_id} already registered")
            self.audit.append_event(employee_id, "registered",
                                    {"college": college, "position": position})
            self.store.insert_voter(record)
        return record

    def bootstrap_admin(self, employee_id: str, password: str, *,
                        lastname: str = "Admin", firstname: str = "Election",
                        email: str = "", contact_number: str = "") -> VoterRecord:
        """Create a pre-approved administrator account from configuration."""
        record = VoterRecord(
            employee_id=employee_id,
            password_digest=hash_password(password),
            lastname=lastname,
            firstname=firstname,
            college=self.colleges[0],
            position=self.positions[0],
            contact_number=contact_number,
            email=email,
            reference_code="RC-" + secrets.token_hex(4).upper(),
            standing=store.GOOD,
            status=store.APPROVED,
            voted=False,
            is_admin=True,
            registered_at=int(self._clock()),
        )
        with self._lock:
            if self.store.get_voter(employee_id) is not None:
                raise DuplicateVoterError(f"employee {employee_id} already registered")
            self.audit.append_event(employee_id, "registered", {"role": "admin"})
            self.audit.append_event(employee_id, "approved", {"by": "system"})
            self.store.insert_voter(record)
        return record

    def approve_voter(self, admin_session: Session, employee_id: str,
                      decision: str) -> VoterRecord:
        if decision not in ("approve", "reject"):
            raise FieldError(f"decision must be approve or reject, got {decision!r}")
        with self._lock:
            admin = self.require_admin(admin_session)
            record = self.store.get_voter(employee_id)
            if record is None:
                raise FieldError(f"no voter {employee_id}")
            if record.status != store.PENDING:
                raise NotPendingError(f"voter {employee_id} is {record.status}")
            new_status = store.APPROVED if decision == "approve" else store.REJECTED
            event = "approved" if decision == "approve" else "rejected"
            # Actor is the voter the decision concerns; the deciding admin is
            # digested into the detail material.
            self.audit.append_event(employee_id, event, {"by": admin.employee_id})
            self.store.set_voter_status(employee_id, new_status)
            if decision == "approve":
                message = delivery.render_email_approval(
                    record, record.reference_code, record.employee_id)
                self.dispatcher.dispatch(message, actor=admin.employee_id)
            return self.store.get_voter(employee_id)

    def set_standing(self, admin_session: Session, employee_id: str,
                     standing: str) -> None:
        """Admin-maintained good-standing flag (dues paid or lapsed)."""
        if standing not in (store.GOOD, store.LAPSED):
            raise FieldError(f"unknown standing {standing!r}")
        with self._lock:
            self.require_admin(admin_session)
            if self.store.get_voter(employee_id) is None:
                raise FieldError(f"no voter {employee_id}")
            self.store.set_voter_standing(employee_id, standing)

    # -- sessions ------------------------------------------------------------

    def authenticate_password(self, employee_id: str, password: str) -> Session:
        with self._lock:
            record = self.store.get_voter(employee_id)
            if record is None or not verify_password(password, record.password_digest):
                self.audit.append_event(employee_id or "unknown", "login_fail", {})
                raise InvalidCredentialsError("invalid credentials")
            if record.status != store.APPROVED:
                self.audit.append_event(employee_id, "login_fail",
                                        {"reason": "not_approved"})
                raise NotApprovedError("registration is not approved")
            session = Session(
                token=secrets.token_urlsafe(32),
                employee_id=employee_id,
                level=PASSWORD_ONLY,
                expires_at=self._clock() + self.session_ttl,
                is_admin=record.is_admin,
            )
            self.audit.append_event(employee_id, "login_ok", {})
            self._sessions[session.token] = session
            return session

    def validate_session(self, token: str | None) -> Session:
        with self._lock:
            session = self._sessions.get(token or "")
            if session is None:
                raise UnauthorizedError("unknown or missing session token")
            if self._clock() > session.expires_at:
                del self._sessions[token]
                self.audit.append_event(session.employee_id, "session_expired", {})
                raise UnauthorizedError("session expired")
            return session

    def logout(self, token: str) -> None:
        with self._lock:
            session = self._sessions.pop(token, None)
            if session is not None:
                self.audit.append_event(session.employee_id, "logout", {})

    def require_admin(self, session: Session) -> Session:
        current = self.validate_session(session.token)
        if not current.is_admin:
            raise NotAdminError("administrator session required")
        return current

    # -- OTP flow --------------------------------------------------------------

    def _require_eligible(self, employee_id: str) -> VoterRecord:
        record = self.store.get_voter(employee_id)
        if record is None:
            raise FieldError(f"no voter {employee_id}")
        if record.status != store.APPROVED:
            raise NotApprovedError("voter is not approved")
        if record.standing != store.GOOD:
            raise NotEligibleError("voter is not in good standing")
        if record.voted:
            raise AlreadyVotedError("voter has already cast a ballot")
        return record

    def request_otp(self, session: Session, employee_id: str) -> ChallengeIssued:
        with self._lock:
            current = self.validate_session(session.token)
            if current.employee_id != employee_id:
                raise ForbiddenError("employee_id does not match the session")
            if self.store.get_election().status != store.OPEN:
                raise ElectionClosedError("election is not open")
            record = self._require_eligible(employee_id)

            now = self._clock()
            flow = self._flows.get(employee_id)
            if flow is None:
                flow = OtpFlow(seed=otp.build_seed(now))
                self._flows[employee_id] = flow
            if flow.challenge is not None:
                # Supersession: at most one live challenge per voter.
                flow.challenge.expire()

            rng = otp.rng_from_seed(flow.seed, salt=str(flow.requests_made))
            flow.requests_made += 1
            pairs = otp.generate_pairs(rng=rng, excluded=self._reserved_bigrams)
            flow.table = otp.build_table(pairs, now=now)
            flow.challenge = otp.generate_challenge(rng, now=now, ttl=self.otp_ttl)

            self.audit.append_event(employee_id, "otp_requested",
                                    {"table_id": flow.table.table_id})

            warnings = []
            email = delivery.render_email_challenge(record, flow.challenge,
                                                    flow.table.table_id)
            outcome = self.dispatcher.dispatch(email, actor=employee_id,
                                               audit_event="otp_sent")
            if isinstance(outcome, delivery.DeliveryFailure):
                warnings.append(f"email delivery failed: {outcome.error}")
            sms = delivery.render_sms_values(record, flow.table, flow.challenge)
            outcome = self.dispatcher.dispatch(sms, actor=employee_id,
                                               audit_event="otp_sent")
            if isinstance(outcome, delivery.DeliveryFailure):
                warnings.append(f"sms delivery failed: {outcome.error}")

            return ChallengeIssued(
                table_id=flow.table.table_id,
                expires_at=flow.challenge.expires_at,
                warnings=tuple(warnings),
            )

    def get_otp_table(self, session: Session) -> otp.OtpTable:
        """The 4x4 table for on-screen display in the authenticated session."""
        with self._lock:
            current = self.validate_session(session.token)
            flow = self._flows.get(current.employee_id)
            if flow is None or flow.table is None or flow.challenge is None:
                raise NoChallengeError("no one-time code has been requested")
            if flow.challenge.state != otp.PENDING:
                raise NoChallengeError("the current code is no longer usable")
            return flow.table

    def confirm_otp(self, session: Session, code: str) -> Session:
        with self._lock:
            current = self.validate_session(session.token)
            employee_id = current.employee_id
            now = self._clock()

            locked_until = self._locked_until.get(employee_id, 0.0)
            if now < locked_until:
                self.audit.append_event(employee_id, "otp_failed",
                                        {"reason": "locked_out"})
                raise LockedOutError("too many failed attempts; try again later")

            self._require_eligible(employee_id)
            flow = self._flows.get(employee_id)
            if flow is None or flow.table is None or flow.challenge is None:
                self.audit.append_event(employee_id, "otp_failed",
                                        {"reason": "no_challenge"})
                raise NoChallengeError("no one-time code has been requested")

            result = otp.verify_otp(flow.table, flow.challenge, code, now=now)
            if result.accepted:
                self._otp_failures.pop(employee_id, None)
                resolved = otp.resolve_challenge(flow.table, flow.challenge)
                flow.seed = otp.next_seed(flow.seed, resolved)
                flow.table = None
                flow.challenge = None
                current.level = OTP_VERIFIED
                self.audit.append_event(employee_id, "otp_verified", {})
                return current

            failures = self._otp_failures.get(employee_id, 0) + 1
            if failures >= self.lockout_threshold:
                self._otp_failures.pop(employee_id, None)
                self._locked_until[employee_id] = now + self.lockout_seconds
                self.audit.append_event(employee_id, "otp_locked",
                                        {"failures": failures})
            else:
                self._otp_failures[employee_id] = failures
                self.audit.append_event(employee_id, "otp_failed",
                                        {"reason": result.reason})
            raise OtpRejectedError(f"one-time code rejected: {result.reason}",
                                   code=f"otp_{result.reason}")

    # -- candidates and election lifecycle -------------------------------------

    def add_candidate(self, name: str, office: str, photo_ref: str = "",
                      platform_text: str = "",
                      candidate_id: str | None = None) -> Candidate:
        with self._lock:
            if self.offices and office not in self.offices:
                raise FieldError(f"unknown office {office!r}")
            if self.store.get_election().status != store.SETUP:
                raise IllegalTransitionError("candidates are fixed once the election opens")
            candidate = Candidate(
                candidate_id=candidate_id or "cand-" + secrets.token_hex(4),
                name=name,
                office=office,
                photo_ref=photo_ref,
                platform_text=platform_text,
                sort_order=len(self.store.list_candidates()),
            )
            self.store.insert_candidate(candidate)
            return candidate

    def open_election(self, admin_session: Session) -> store.ElectionState:
        with self._lock:
            admin = self.require_admin(admin_session)
            election = self.store.get_election()
            if election.status != store.SETUP:
                raise IllegalTransitionError(
                    f"cannot open an election in state {election.status}")
            self.audit.append_event(admin.employee_id, "election_opened", {})
            self.store.set_election_status(store.OPEN, int(self._clock()))
            return self.store.get_election()

    def close_election(self, admin_session: Session) -> store.ElectionState:
        with self._lock:
            admin = self.require_admin(admin_session)
            election = self.store.get_election()
            if election.status != store.OPEN:
                raise IllegalTransitionError(
                    f"cannot close an election in state {election.status}")
            self.audit.append_event(admin.employee_id, "election_closed", {})
            self.store.set_election_status(store.CLOSED, int(self._clock()))
            return self.store.get_election()

    # -- voting ------------------------------------------------------------------

    def _office_order(self, candidates: list[Candidate]) -> list[str]:
        return office_order(candidates, self.offices)

    def get_ballot_form(self, session: Session) -> dict:
        with self._lock:
            current = self.validate_session(session.token)
            if current.level != OTP_VERIFIED:
                raise ForbiddenError("one-time code confirmation required")
            if self.store.get_election().status != store.OPEN:
                raise ElectionClosedError("election is not open")
            summary = self.tally()
            candidates = self.store.list_candidates()
            offices = []
            for office in self._office_order(candidates):
                offices.append({
                    "office": office,
                    "candidates": [{
                        "candidate_id": c.candidate_id,
                        "name": c.name,
                        "photo_ref": c.photo_ref,
                        "platform_text": c.platform_text,
                        "votes": summary.offices.get(office, {}).get(c.candidate_id, 0),
                    } for c in candidates if c.office == office],
                })
            return {"offices": offices, "turnout": summary.turnout}

    def cast_ballot(self, session: Session, selections: dict[str, str]) -> str:
        with self._lock:
            current = self.validate_session(session.token)
            if self.store.get_election().status != store.OPEN:
                raise ElectionClosedError("election is not open")
            employee_id = current.employee_id
            # Eligibility first so a repeat attempt reads as already_voted,
            # not as a session-level failure.
            self._require_eligible(employee_id)
            if current.level != OTP_VERIFIED:
                raise ForbiddenError("one-time code confirmation required")

            candidates = {c.candidate_id: c for c in self.store.list_candidates()}
            offices = self._office_order(list(candidates.values()))
            for office, candidate_id in selections.items():
                if office not in offices:
                    raise FieldError(f"unknown office {office!r}")
                candidate = candidates.get(candidate_id)
                if candidate is None or candidate.office != office:
                    raise FieldError(
                        f"candidate {candidate_id!r} does not run for {office!r}")

            ballot = Ballot(
                receipt_id=secrets.token_hex(16),
                selections=dict(selections),
                cast_at=int(self._clock()),
            )
            self.audit.append_event(employee_id, "ballot_cast", {})
            if not self.store.cast_ballot(employee_id, ballot):
                raise AlreadyVotedError("voter has already cast a ballot")
            # One-way downgrade: the ballot window is gone for this session.
            current.level = PASSWORD_ONLY
            self._flows.pop(employee_id, None)
            return ballot.receipt_id

    def tally(self) -> TallySummary:
        with self._lock:
            return tally_store(self.store, self.offices)
