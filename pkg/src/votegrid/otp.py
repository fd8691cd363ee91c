"""Grid-card one-time-password engine.

A chained seed string drives a deterministic shuffle that produces sixteen
distinct two-character codes.  The codes fill a 4x4 table last-generated-first,
left to right.  Authentication challenges name three table positions; the
voter answers with the six characters read from those cells.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets
import string
import threading
import time
from dataclasses import dataclass, field

TABLE_ROWS = 4
TABLE_COLS = 4
TABLE_CELLS = TABLE_ROWS * TABLE_COLS
PAIR_LENGTH = 2
CHALLENGE_CELLS = 3
OTP_LENGTH = PAIR_LENGTH * CHALLENGE_CELLS
DEFAULT_TTL_SECONDS = 300.0

# Challenge lifecycle states.  Transitions are one-way: pending -> consumed
# or pending -> expired, never back.
PENDING = "pending"
CONSUMED = "consumed"
EXPIRED = "expired"

# Rejection reasons returned by verify_otp.
REJECT_EXPIRED = "expired"
REJECT_CONSUMED = "consumed"
REJECT_MISMATCH = "mismatch"
REJECT_BAD_LENGTH = "bad_length"

# English calendar names, fixed regardless of process locale: the seed format
# is a wire format, not display text.
MONTH_ABBR = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
              "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
WEEKDAY_ABBR = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class OtpError(ValueError):
    """Base class for OTP engine failures."""


class AlphabetError(OtpError):
    pass


class SeedError(OtpError):
    pass


class PairGenerationError(OtpError):
    pass


class TableError(OtpError):
    pass


class ChallengeError(OtpError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Ordered character pool the codes are built from."""

    chars: str = string.ascii_lowercase + string.ascii_uppercase + string.digits
    char_set: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise AlphabetError("alphabet contains duplicate characters")
        if len(self.chars) < 36:
            raise AlphabetError("alphabet needs at least 36 characters")
        object.__setattr__(self, "char_set", frozenset(self.chars))

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, char: str) -> bool:
        return char in self.char_set

    @property
    def letters(self) -> str:
        return "".join(c for c in self.chars if c.isalpha())


DEFAULT_ALPHABET = Alphabet()


@dataclass(frozen=True)
class SeedString:
    """Seed material for one table generation.

    Generation 0 is the alphabet letters plus a timestamp block; every later
    generation is the previous value with the previous OTP appended, so the
    full OTP history stays embedded in order.
    """

    value: str
    generation: int = 0


def timestamp_block(epoch_seconds: int) -> str:
    """Format an instant as MonAbbr + month(2) + DayAbbr + day(2) + year(4) + epoch."""
    tm = time.gmtime(epoch_seconds)
    return (MONTH_ABBR[tm.tm_mon - 1]
            + f"{tm.tm_mon:02d}"
            + WEEKDAY_ABBR[tm.tm_wday]
            + f"{tm.tm_mday:02d}"
            + f"{tm.tm_year:04d}"
            + str(epoch_seconds))


def build_seed(now: float, alphabet: Alphabet = DEFAULT_ALPHABET) -> SeedString:
    """Build the generation-0 seed for a wall-clock instant.

    The value is every letter of the alphabet (in alphabet order, so lowercase
    then uppercase for the default) followed by the UTC timestamp block.
    Deterministic for a fixed instant.
    """
    return SeedString(alphabet.letters + timestamp_block(int(now)), generation=0)


def next_seed(prev: SeedString, last_otp: str) -> SeedString:
    """Chain a seed forward by appending the OTP resolved under it."""
    if len(last_otp) != OTP_LENGTH:
        raise SeedError(f"chained OTP must be {OTP_LENGTH} characters, got {len(last_otp)}")
    return SeedString(prev.value + last_otp, generation=prev.generation + 1)


def rng_from_seed(seed: SeedString, salt: str = "") -> random.Random:
    """Derive a deterministic random stream from a seed string.

    The stream is keyed on a digest of the seed value, so chaining a new OTP
    into the seed perturbs every later table.  ``salt`` lets a caller draw
    distinct streams from one seed (e.g. per request).
    """
    material = seed.value.encode("utf-8") + b"\x00" + salt.encode("utf-8")
    return random.Random(int.from_bytes(hashlib.sha256(material).digest(), "big"))


def generate_pairs(seed: SeedString | None = None,
                   rng: random.Random | None = None,
                   *,
                   alphabet: Alphabet = DEFAULT_ALPHABET,
                   count: int = TABLE_CELLS,
                   excluded: frozenset[str] | set[str] = frozenset()) -> list[str]:
    """Produce ``count`` distinct two-character codes in generation order.

    Each code comes from shuffling the merged alphabet pool and taking the two
    leading characters.  Draws that repeat an earlier code (or hit the
    ``excluded`` set) are discarded and redrawn, so the result never repeats.
    Pass ``rng`` for an explicit stream; otherwise one is derived from ``seed``.
    """
    if rng is None:
        if seed is None:
            raise PairGenerationError("either seed or rng is required")
        rng = rng_from_seed(seed)
    usable_exclusions = sum(
        1 for code in excluded
        if len(code) == PAIR_LENGTH and code[0] != code[1]
        and code[0] in alphabet and code[1] in alphabet
    )
    capacity = len(alphabet) * (len(alphabet) - 1) - usable_exclusions
    if capacity < count:
        raise PairGenerationError(
            f"alphabet of {len(alphabet)} characters cannot supply {count} distinct codes")

    pool = list(alphabet.chars)
    pairs: list[str] = []
    seen: set[str] = set()
    attempts = 0
    max_attempts = max(1000, 100 * count)
    while len(pairs) < count:
        attempts += 1
        if attempts > max_attempts:
            raise PairGenerationError("code generation failed to converge")
        rng.shuffle(pool)
        code = pool[0] + pool[1]
        if code in seen or code in excluded:
            continue
        seen.add(code)
        pairs.append(code)
    return pairs


@dataclass(frozen=True)
class Coordinate:
    """1-based (row, col) position in the 4x4 table, top-left origin."""

    row: int
    col: int

    def __post_init__(self):
        if not (1 <= self.row <= TABLE_ROWS and 1 <= self.col <= TABLE_COLS):
            raise ChallengeError(f"coordinate ({self.row},{self.col}) outside the table")

    @property
    def index(self) -> int:
        """Row-major 0-based cell index."""
        return (self.row - 1) * TABLE_COLS + (self.col - 1)


def coordinate_from_index(index: int) -> Coordinate:
    return Coordinate(index // TABLE_COLS + 1, index % TABLE_COLS + 1)


@dataclass(frozen=True)
class OtpTable:
    """4x4 grid of sixteen distinct two-character codes, row-major."""

    cells: tuple[str, ...]
    table_id: str
    created_at: float

    def __post_init__(self):
        if len(self.cells) != TABLE_CELLS:
            raise TableError(f"table needs {TABLE_CELLS} cells, got {len(self.cells)}")
        if any(len(code) != PAIR_LENGTH for code in self.cells):
            raise TableError("every cell must hold a two-character code")
        if len(set(self.cells)) != TABLE_CELLS:
            raise TableError("table cells must be mutually distinct")

    def cell(self, coordinate: Coordinate) -> str:
        return self.cells[coordinate.index]

    def rows(self) -> list[list[str]]:
        return [list(self.cells[r * TABLE_COLS:(r + 1) * TABLE_COLS])
                for r in range(TABLE_ROWS)]


def build_table(pairs: list[str],
                table_id: str | None = None,
                now: float | None = None) -> OtpTable:
    """Fill the table from generation-ordered pairs.

    Reading is first-in last-out with left-to-right posting: the final pair
    generated lands at (1,1) and the first at (4,4), i.e.
    cell(r, c) = pairs[17 - ((r-1)*4 + c)] in 1-based generation order.
    """
    if len(pairs) != TABLE_CELLS:
        raise TableError(f"expected {TABLE_CELLS} pairs, got {len(pairs)}")
    return OtpTable(
        cells=tuple(reversed(pairs)),
        table_id=table_id if table_id is not None else secrets.token_hex(8),
        created_at=now if now is not None else time.time(),
    )


@dataclass
class Challenge:
    """Ordered cell positions a voter must look up, with TTL and one-shot state."""

    coordinates: tuple[Coordinate, ...]
    issued_at: float
    ttl: float
    state: str = PENDING
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if not (1 <= len(self.coordinates) <= TABLE_CELLS):
            raise ChallengeError("challenge must name between 1 and 16 cells")
        if len({c.index for c in self.coordinates}) != len(self.coordinates):
            raise ChallengeError("challenge cells must be distinct")
        if self.ttl <= 0:
            raise ChallengeError("challenge ttl must be positive")

    @property
    def expires_at(self) -> float:
        return self.issued_at + self.ttl

    def expire(self) -> None:
        """Force pending -> expired (supersession); no-op in any other state."""
        with self._lock:
            if self.state == PENDING:
                self.state = EXPIRED


def generate_challenge(rng: random.Random,
                       now: float | None = None,
                       ttl: float = DEFAULT_TTL_SECONDS,
                       cells: int = CHALLENGE_CELLS) -> Challenge:
    """Draw ``cells`` distinct positions uniformly without replacement."""
    indices = rng.sample(range(TABLE_CELLS), cells)
    return Challenge(
        coordinates=tuple(coordinate_from_index(i) for i in indices),
        issued_at=now if now is not None else time.time(),
        ttl=ttl,
    )


def read_cells(table: OtpTable, coordinates) -> str:
    """Concatenate cell codes in the given order (no distinctness requirement)."""
    return "".join(table.cells[c.index] for c in coordinates)


def resolve_challenge(table: OtpTable, challenge: Challenge) -> str:
    """The correct answer: the challenged cells' codes joined in challenge order."""
    return read_cells(table, challenge.coordinates)


def codes_match(expected: str, candidate: str) -> bool:
    """Constant-time equality on code strings.

    Comparison time must not depend on where the first differing character
    sits, so a remote caller cannot binary-search the code byte by byte.
    """
    return hmac.compare_digest(expected.encode("utf-8"), candidate.encode("utf-8"))


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: str | None = None


def verify_otp(table: OtpTable,
               challenge: Challenge,
               candidate: str,
               now: float | None = None) -> VerifyResult:
    """Check a submitted code against the challenge, consuming it.

    Accepts only a pending, unexpired challenge whose resolved code matches
    ``candidate`` exactly (case-sensitive).  Both an accept and a mismatch
    consume the challenge; the state transition is atomic, so concurrent
    calls yield at most one accept.
    """
    if now is None:
        now = time.time()
    with challenge._lock:
        if challenge.state == CONSUMED:
            return VerifyResult(False, REJECT_CONSUMED)
        if challenge.state == EXPIRED:
            return VerifyResult(False, REJECT_EXPIRED)
        if now > challenge.expires_at:
            challenge.state = EXPIRED
            return VerifyResult(False, REJECT_EXPIRED)
        expected = resolve_challenge(table, challenge)
        if len(candidate) != len(expected):
            return VerifyResult(False, REJECT_BAD_LENGTH)
        challenge.state = CONSUMED
        if codes_match(expected, candidate):
            return VerifyResult(True)
        return VerifyResult(False, REJECT_MISMATCH)
