import random
import threading
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from votegrid import otp

# Known-good sample grid, row-major.
FIG_CELLS = ("04", "o8", "O6", "U2",
             "d9", "T3", "18", "2n",
             "DM", "CN", "mS", "x1",
             "iy", "N2", "G6", "P1")
# build_table reads generation order last-first, so feeding the reversed cell
# list reproduces the sample grid exactly.
FIG_PAIRS = list(reversed(FIG_CELLS))


def fig_table() -> otp.OtpTable:
    return otp.build_table(FIG_PAIRS, table_id="fig", now=0.0)


def make_challenge(coords, issued_at=0.0, ttl=300.0) -> otp.Challenge:
    return otp.Challenge(tuple(otp.Coordinate(r, c) for r, c in coords),
                         issued_at=issued_at, ttl=ttl)


def calendar_block_oracle(epoch: int) -> str:
    """Independent seed-block formatter built on datetime arithmetic."""
    months = ["Jan", "Feb", "Mar", "Apr", "May", "Jun",
              "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
    days = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return (months[dt.month - 1] + f"{dt.month:02d}" + days[dt.weekday()]
            + f"{dt.day:02d}" + f"{dt.year:04d}" + str(epoch))


class TestAlphabet:
    def test_default_has_62_distinct_chars(self):
        assert len(otp.DEFAULT_ALPHABET) == 62
        assert len(otp.DEFAULT_ALPHABET.char_set) == 62

    def test_duplicates_rejected(self):
        with pytest.raises(otp.AlphabetError):
            otp.Alphabet("aabcdefghijklmnopqrstuvwxyz0123456789")

    def test_too_small_rejected(self):
        with pytest.raises(otp.AlphabetError):
            otp.Alphabet("abcdefghij")

    def test_letters_keep_alphabet_order(self):
        assert otp.DEFAULT_ALPHABET.letters == (
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")


class TestBuildSeed:
    def test_golden_timestamp_block(self):
        # Mon 10 Apr 2017 UTC
        seed = otp.build_seed(1491809436)
        assert seed.value.endswith("Apr04Mon1020171491809436")
        assert seed.generation == 0

    def test_value_is_letters_then_block(self):
        seed = otp.build_seed(1491809436)
        assert seed.value == otp.DEFAULT_ALPHABET.letters + "Apr04Mon1020171491809436"

    def test_epoch_zero_matches_calendar_oracle(self):
        # Hand-derived: Thu 01 Jan 1970 UTC.
        assert otp.timestamp_block(0) == "Jan01Thu0119700"
        assert otp.timestamp_block(0) == calendar_block_oracle(0)

    @given(st.integers(min_value=0, max_value=4_102_444_800))
    def test_block_agrees_with_calendar_oracle(self, epoch):
        assert otp.timestamp_block(epoch) == calendar_block_oracle(epoch)

    def test_same_instant_same_seed(self):
        assert otp.build_seed(1491809436.7) == otp.build_seed(1491809436.2)


class TestNextSeed:
    def test_concatenates_and_bumps_generation(self):
        nxt = otp.next_seed(otp.SeedString("S"), "0418P1")
        assert nxt.value == "S0418P1"
        assert nxt.generation == 1

    def test_chain_embeds_otps_in_order(self):
        seed = otp.build_seed(0)
        s1 = otp.next_seed(seed, "aaaaaa")
        s2 = otp.next_seed(s1, "bbbbbb")
        assert s2.generation == 2
        assert s2.value == seed.value + "aaaaaa" + "bbbbbb"
        assert s2.value.startswith(s1.value)

    def test_distinct_otps_give_distinct_seeds(self):
        prev = otp.build_seed(0)
        otps = ["0418P1", "0418P2", "o8T3x1", "U2d9iy", "181818"[:6]]
        values = {otp.next_seed(prev, code).value for code in otps}
        assert len(values) == len(otps)

    def test_wrong_length_rejected(self):
        with pytest.raises(otp.SeedError):
            otp.next_seed(otp.SeedString("S"), "0418P")


class ScriptedShuffler:
    """Replays fixed arrangements before falling back to a real stream."""

    def __init__(self, arrangements, fallback_seed=0):
        self.arrangements = list(arrangements)
        self.fallback = random.Random(fallback_seed)

    def shuffle(self, pool):
        if self.arrangements:
            fixed = self.arrangements.pop(0)
            pool[:] = fixed
        else:
            self.fallback.shuffle(pool)


class TestGeneratePairs:
    def test_deterministic_for_fixed_rng_seed(self):
        first = otp.generate_pairs(rng=random.Random(42))
        second = otp.generate_pairs(rng=random.Random(42))
        assert first == second
        assert len(first) == 16

    def test_distinct_pairs_over_alphabet(self):
        pairs = otp.generate_pairs(rng=random.Random(7))
        assert len(set(pairs)) == 16
        for code in pairs:
            assert len(code) == 2
            assert code[0] in otp.DEFAULT_ALPHABET
            assert code[1] in otp.DEFAULT_ALPHABET

    def test_repeated_shuffle_is_discarded_and_redrawn(self):
        arrangement = list(otp.DEFAULT_ALPHABET.chars)
        # Same leading pair three times: only the first survives.
        stub = ScriptedShuffler([arrangement, arrangement, arrangement])
        pairs = otp.generate_pairs(rng=stub)
        assert len(pairs) == 16
        assert len(set(pairs)) == 16
        assert pairs[0] == arrangement[0] + arrangement[1]
        assert pairs.count(pairs[0]) == 1

    def test_excluded_codes_are_never_produced(self):
        excluded = frozenset({"ab", "R1", "C4"})
        for seed in range(20):
            pairs = otp.generate_pairs(rng=random.Random(seed), excluded=excluded)
            assert not excluded.intersection(pairs)

    def test_seed_digest_drives_stream(self):
        seed = otp.build_seed(1491809436)
        assert otp.generate_pairs(seed) == otp.generate_pairs(seed)
        chained = otp.next_seed(seed, "0418P1")
        assert otp.generate_pairs(seed) != otp.generate_pairs(chained)

    def test_requires_seed_or_rng(self):
        with pytest.raises(otp.PairGenerationError):
            otp.generate_pairs()

    def test_impossible_count_guarded(self):
        with pytest.raises(otp.PairGenerationError):
            otp.generate_pairs(rng=random.Random(0), count=62 * 61 + 1)


def reverse_fill_oracle(pairs):
    """Straightforward FILO oracle: pop from a stack into row-major order."""
    stack = list(pairs)
    grid = []
    for _ in range(16):
        grid.append(stack.pop())
    return tuple(grid)


class TestBuildTable:
    def test_filo_endpoints(self):
        pairs = [format(i, "x") + "Z" for i in range(16)]
        table = otp.build_table(pairs)
        assert table.cell(otp.Coordinate(1, 1)) == pairs[15]
        assert table.cell(otp.Coordinate(4, 4)) == pairs[0]

    def test_sample_grid_is_legal(self):
        table = fig_table()
        assert table.rows() == [["04", "o8", "O6", "U2"],
                                ["d9", "T3", "18", "2n"],
                                ["DM", "CN", "mS", "x1"],
                                ["iy", "N2", "G6", "P1"]]

    def test_matches_reverse_fill_oracle(self):
        for seed in range(10):
            pairs = otp.generate_pairs(rng=random.Random(seed))
            assert otp.build_table(pairs).cells == reverse_fill_oracle(pairs)

    def test_reversed_input_mirrors_table(self):
        pairs = otp.generate_pairs(rng=random.Random(3))
        forward = otp.build_table(pairs)
        backward = otp.build_table(list(reversed(pairs)))
        assert backward.cells == tuple(reversed(forward.cells))

    @given(st.integers())
    @settings(max_examples=50, deadline=None)
    def test_placement_law(self, rng_seed):
        pairs = otp.generate_pairs(rng=random.Random(rng_seed))
        table = otp.build_table(pairs)
        for r in range(1, 5):
            for c in range(1, 5):
                k = (r - 1) * 4 + c
                assert table.cell(otp.Coordinate(r, c)) == pairs[17 - k - 1]

    def test_wrong_count_rejected(self):
        with pytest.raises(otp.TableError):
            otp.build_table(FIG_PAIRS[:15])

    def test_duplicates_rejected(self):
        with pytest.raises(otp.TableError):
            otp.build_table(FIG_PAIRS[:15] + [FIG_PAIRS[0]])


class TestGenerateChallenge:
    def test_coordinates_in_range_and_distinct(self):
        for seed in range(50):
            ch = otp.generate_challenge(random.Random(seed), now=0.0)
            assert len(ch.coordinates) == 3
            assert len({c.index for c in ch.coordinates}) == 3
            for c in ch.coordinates:
                assert 1 <= c.row <= 4
                assert 1 <= c.col <= 4
            assert ch.state == otp.PENDING

    def test_deterministic_replay(self):
        a = otp.generate_challenge(random.Random(99), now=1.0)
        b = otp.generate_challenge(random.Random(99), now=1.0)
        assert a.coordinates == b.coordinates

    def test_cells_challenged_uniformly(self):
        # Monte-Carlo frequency oracle: each of the 16 cells should appear in
        # 3/16 of draws, within one percentage point over 100k draws.
        rng = random.Random(20170410)
        counts = [0] * 16
        draws = 100_000
        for _ in range(draws):
            for coord in otp.generate_challenge(rng, now=0.0).coordinates:
                counts[coord.index] += 1
        expected = 3 / 16
        for cell_count in counts:
            assert abs(cell_count / draws - expected) < 0.01


class TestResolve:
    def test_sample_grid_example(self):
        ch = make_challenge([(1, 1), (2, 3), (4, 4)])
        assert otp.resolve_challenge(fig_table(), ch) == "0418P1"

    def test_concatenation_semantics_via_read_cells(self):
        # Repeated coordinates are illegal in a Challenge; read_cells pins the
        # raw concatenation rule.
        coords = [otp.Coordinate(1, 1)] * 3
        assert otp.read_cells(fig_table(), coords) == "040404"

    def test_round_trip_accepts(self):
        table = fig_table()
        ch = make_challenge([(3, 2), (1, 4), (2, 1)])
        code = otp.resolve_challenge(table, ch)
        assert code == "CNU2d9"
        assert otp.verify_otp(table, ch, code, now=1.0).accepted


class TestVerifyOtp:
    def test_accept_within_ttl(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=100.0, ttl=300.0)
        result = otp.verify_otp(table, ch, "0418P1", now=399.0)
        assert result == otp.VerifyResult(True)
        assert ch.state == otp.CONSUMED

    def test_single_character_difference_rejected(self):
        table = fig_table()
        for pos in range(6):
            ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
            good = "0418P1"
            bad = good[:pos] + ("Z" if good[pos] != "Z" else "z") + good[pos + 1:]
            result = otp.verify_otp(table, ch, bad, now=1.0)
            assert not result.accepted
            assert result.reason == otp.REJECT_MISMATCH

    def test_case_sensitive(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        result = otp.verify_otp(table, ch, "0418p1", now=1.0)
        assert result.reason == otp.REJECT_MISMATCH

    def test_expired_after_ttl(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0, ttl=300.0)
        result = otp.verify_otp(table, ch, "0418P1", now=300.5)
        assert result.reason == otp.REJECT_EXPIRED
        assert ch.state == otp.EXPIRED
        # Boundary: exactly at the deadline still accepted.
        ch2 = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0, ttl=300.0)
        assert otp.verify_otp(table, ch2, "0418P1", now=300.0).accepted

    def test_bad_length_does_not_consume(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        result = otp.verify_otp(table, ch, "0418P", now=1.0)
        assert result.reason == otp.REJECT_BAD_LENGTH
        assert ch.state == otp.PENDING
        assert otp.verify_otp(table, ch, "0418P1", now=1.0).accepted

    def test_single_use_after_accept(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        assert otp.verify_otp(table, ch, "0418P1", now=1.0).accepted
        replay = otp.verify_otp(table, ch, "0418P1", now=1.0)
        assert replay.reason == otp.REJECT_CONSUMED

    def test_single_use_after_mismatch(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        assert otp.verify_otp(table, ch, "zzzzzz", now=1.0).reason == otp.REJECT_MISMATCH
        result = otp.verify_otp(table, ch, "0418P1", now=1.0)
        assert result.reason == otp.REJECT_CONSUMED

    def test_forced_expiry_blocks_verification(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        ch.expire()
        assert otp.verify_otp(table, ch, "0418P1", now=1.0).reason == otp.REJECT_EXPIRED

    def test_concurrent_verification_accepts_once(self):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        results = []
        barrier = threading.Barrier(16)

        def attempt():
            barrier.wait()
            results.append(otp.verify_otp(table, ch, "0418P1", now=1.0))

        threads = [threading.Thread(target=attempt) for _ in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sum(1 for r in results if r.accepted) == 1

    @given(st.text(alphabet=otp.DEFAULT_ALPHABET.chars, min_size=6, max_size=6))
    @settings(max_examples=200, deadline=None)
    def test_only_true_code_accepted(self, candidate):
        table = fig_table()
        ch = make_challenge([(1, 1), (2, 3), (4, 4)], issued_at=0.0)
        result = otp.verify_otp(table, ch, candidate, now=1.0)
        assert result.accepted == (candidate == "0418P1")


class TestCodesMatch:
    def test_exact_match_only(self):
        assert otp.codes_match("0418P1", "0418P1")
        assert not otp.codes_match("0418P1", "0418p1")
        assert not otp.codes_match("0418P1", "0418P2")

    def test_non_ascii_candidate_handled(self):
        assert not otp.codes_match("0418P1", "0418Pé")


class TestDeterministicPipeline:
    def test_seed_and_stream_fix_everything(self):
        seed = otp.build_seed(1491809436)
        runs = []
        for _ in range(2):
            rng = otp.rng_from_seed(seed)
            pairs = otp.generate_pairs(rng=rng)
            table = otp.build_table(pairs, table_id="t", now=0.0)
            challenge = otp.generate_challenge(rng, now=0.0)
            runs.append((pairs, table.cells, challenge.coordinates))
        assert runs[0] == runs[1]

    def test_salted_streams_differ(self):
        seed = otp.build_seed(1491809436)
        a = otp.generate_pairs(rng=otp.rng_from_seed(seed, salt="0"))
        b = otp.generate_pairs(rng=otp.rng_from_seed(seed, salt="1"))
        assert a != b
