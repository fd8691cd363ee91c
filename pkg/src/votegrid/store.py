"""Embedded SQLite datastore.

One file holds the durable election state.  Schema mirrors the domain
records below; all timestamps are UTC epoch seconds.  Ballots never carry a
voter identity: the link between a person and their choices ends at the
one-way ``voted`` flag on the voter row.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

GOOD = "good"
LAPSED = "lapsed"

PENDING = "pending"
APPROVED = "approved"
REJECTED = "rejected"

SETUP = "setup"
OPEN = "open"
CLOSED = "closed"

DEFAULT_ELECTION_ID = "default"

_SCHEMA = """
CREATE TABLE IF NOT EXISTS voters (
    employee_id     TEXT PRIMARY KEY,
    password_digest TEXT NOT NULL,
    lastname        TEXT NOT NULL,
    firstname       TEXT NOT NULL,
    college         TEXT NOT NULL,
    position        TEXT NOT NULL,
    contact_number  TEXT NOT NULL,
    email           TEXT NOT NULL,
    reference_code  TEXT NOT NULL,
    standing        TEXT NOT NULL CHECK (standing IN ('good', 'lapsed')),
    status          TEXT NOT NULL CHECK (status IN ('pending', 'approved', 'rejected')),
    voted           INTEGER NOT NULL DEFAULT 0 CHECK (voted IN (0, 1)),
    is_admin        INTEGER NOT NULL DEFAULT 0 CHECK (is_admin IN (0, 1)),
    registered_at   INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS candidates (
    candidate_id  TEXT PRIMARY KEY,
    name          TEXT NOT NULL,
    office        TEXT NOT NULL,
    photo_ref     TEXT NOT NULL DEFAULT '',
    platform_text TEXT NOT NULL DEFAULT '',
    sort_order    INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS elections (
    election_id TEXT PRIMARY KEY,
    status      TEXT NOT NULL CHECK (status IN ('setup', 'open', 'closed')),
    opened_at   INTEGER,
    closed_at   INTEGER
);

-- selections is a JSON object mapping office -> candidate_id.  No voter
-- identity, on purpose.
CREATE TABLE IF NOT EXISTS ballots (
    receipt_id TEXT PRIMARY KEY,
    selections TEXT NOT NULL,
    cast_at    INTEGER NOT NULL
);
"""


@dataclass(frozen=True)
class VoterRecord:
    employee_id: str
    password_digest: str
    lastname: str
    firstname: str
    college: str
    position: str
    contact_number: str
    email: str
    reference_code: str
    standing: str = GOOD
    status: str = PENDING
    voted: bool = False
    is_admin: bool = False
    registered_at: int = 0


@dataclass(frozen=True)
class Candidate:
    candidate_id: str
    name: str
    office: str
    photo_ref: str = ""
    platform_text: str = ""
    sort_order: int = 0


@dataclass(frozen=True)
class Ballot:
    receipt_id: str
    selections: dict[str, str]
    cast_at: int


@dataclass(frozen=True)
class ElectionState:
    election_id: str
    status: str = SETUP
    opened_at: int | None = None
    closed_at: int | None = None


class StoreError(Exception):
    pass


class Datastore:
    """Serialized access to one SQLite file; safe across threads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if self.path.parent != Path("."):
            self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False,
                                     isolation_level=None, timeout=30.0)
        self._conn.row_factory = sqlite3.Row
        with self._lock:
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.execute("PRAGMA busy_timeout=30000")
            self._conn.executescript(_SCHEMA)
            self._conn.execute(
                "INSERT OR IGNORE INTO elections (election_id, status) VALUES (?, ?)",
                (DEFAULT_ELECTION_ID, SETUP))

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    @contextmanager
    def transaction(self):
        """Serialized read-modify-write block; commits or rolls back as one."""
        with self._lock:
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                yield self._conn
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            self._conn.execute("COMMIT")

    # -- voters ------------------------------------------------------------

    @staticmethod
    def _voter_from_row(row: sqlite3.Row) -> VoterRecord:
        return VoterRecord(
            employee_id=row["employee_id"],
            password_digest=row["password_digest"],
            lastname=row["lastname"],
            firstname=row["firstname"],
            college=row["college"],
            position=row["position"],
            contact_number=row["contact_number"],
            email=row["email"],
            reference_code=row["reference_code"],
            standing=row["standing"],
            status=row["status"],
            voted=bool(row["voted"]),
            is_admin=bool(row["is_admin"]),
            registered_at=row["registered_at"],
        )

    def insert_voter(self, voter: VoterRecord) -> None:
        with self.transaction() as conn:
            try:
                conn.execute(
                    "INSERT INTO voters VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                    (voter.employee_id, voter.password_digest, voter.lastname,
                     voter.firstname, voter.college, voter.position,
                     voter.contact_number, voter.email, voter.reference_code,
                     voter.standing, voter.status, int(voter.voted),
                     int(voter.is_admin), voter.registered_at))
            except sqlite3.IntegrityError as exc:
                raise StoreError(f"voter {voter.employee_id} already exists") from exc

    def get_voter(self, employee_id: str) -> VoterRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM voters WHERE employee_id = ?", (employee_id,)).fetchone()
        return self._voter_from_row(row) if row else None

    def list_voters(self, status: str | None = None) -> list[VoterRecord]:
        query = "SELECT * FROM voters"
        params: tuple = ()
        if status is not None:
            query += " WHERE status = ?"
            params = (status,)
        query += " ORDER BY registered_at, employee_id"
        with self._lock:
            rows = self._conn.execute(query, params).fetchall()
        return [self._voter_from_row(r) for r in rows]

    def set_voter_status(self, employee_id: str, status: str) -> None:
        with self.transaction() as conn:
            conn.execute("UPDATE voters SET status = ? WHERE employee_id = ?",
                         (status, employee_id))

    def set_voter_standing(self, employee_id: str, standing: str) -> None:
        with self.transaction() as conn:
            conn.execute("UPDATE voters SET standing = ? WHERE employee_id = ?",
                         (standing, employee_id))

    def cast_ballot(self, employee_id: str, ballot: Ballot) -> bool:
        """Flip the voted flag and store the ballot atomically.

        Returns False without storing anything when the flag was already set,
        so exactly one of any number of racing casts can succeed.
        """
        with self._lock:
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                cursor = self._conn.execute(
                    "UPDATE voters SET voted = 1 WHERE employee_id = ? AND voted = 0",
                    (employee_id,))
                if cursor.rowcount != 1:
                    self._conn.execute("ROLLBACK")
                    return False
                self._conn.execute("INSERT INTO ballots VALUES (?,?,?)",
                                   (ballot.receipt_id,
                                    json.dumps(ballot.selections, sort_keys=True),
                                    ballot.cast_at))
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            self._conn.execute("COMMIT")
            return True

    # -- candidates ----------------------------------------------------------

    def insert_candidate(self, candidate: Candidate) -> None:
        with self.transaction() as conn:
            try:
                conn.execute("INSERT INTO candidates VALUES (?,?,?,?,?,?)",
                             (candidate.candidate_id, candidate.name,
                              candidate.office, candidate.photo_ref,
                              candidate.platform_text, candidate.sort_order))
            except sqlite3.IntegrityError as exc:
                raise StoreError(
                    f"candidate {candidate.candidate_id} already exists") from exc

    def list_candidates(self) -> list[Candidate]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM candidates ORDER BY sort_order, candidate_id").fetchall()
        return [Candidate(candidate_id=r["candidate_id"], name=r["name"],
                          office=r["office"], photo_ref=r["photo_ref"],
                          platform_text=r["platform_text"],
                          sort_order=r["sort_order"]) for r in rows]

    # -- election ------------------------------------------------------------

    def get_election(self, election_id: str = DEFAULT_ELECTION_ID) -> ElectionState:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM elections WHERE election_id = ?",
                (election_id,)).fetchone()
        if row is None:
            raise StoreError(f"no election {election_id}")
        return ElectionState(election_id=row["election_id"], status=row["status"],
                             opened_at=row["opened_at"], closed_at=row["closed_at"])

    def set_election_status(self, status: str, at: int,
                            election_id: str = DEFAULT_ELECTION_ID) -> None:
        column = {OPEN: "opened_at", CLOSED: "closed_at"}.get(status)
        with self.transaction() as conn:
            if column:
                conn.execute(
                    f"UPDATE elections SET status = ?, {column} = ? WHERE election_id = ?",
                    (status, at, election_id))
            else:
                conn.execute("UPDATE elections SET status = ? WHERE election_id = ?",
                             (status, election_id))

    # -- ballots ---------------------------------------------------------------

    def list_ballots(self) -> list[Ballot]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM ballots ORDER BY cast_at, receipt_id").fetchall()
        return [Ballot(receipt_id=r["receipt_id"],
                       selections=json.loads(r["selections"]),
                       cast_at=r["cast_at"]) for r in rows]

    def count_voted(self) -> int:
        with self._lock:
            return self._conn.execute(
                "SELECT COUNT(*) FROM voters WHERE voted = 1").fetchone()[0]

    def count_approved(self) -> int:
        with self._lock:
            return self._conn.execute(
                "SELECT COUNT(*) FROM voters WHERE status = 'approved'").fetchone()[0]
