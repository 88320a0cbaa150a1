import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kodec.bitcore import (
    BitString,
    Dyadic,
    RandomSource,
    ceil_log2_div,
    ceil_log2_ratio,
    dot_mod2,
    first_primes,
    is_prime,
    primes_of_bitlen,
    random_prime,
    residue,
)

# Prime-counting values pi(2^L) from the standard tables.
_PI_POW2 = {
    1: 1, 2: 2, 3: 4, 4: 6, 5: 11, 6: 18, 7: 31, 8: 54, 9: 97, 10: 172,
    11: 309, 12: 564, 13: 1028, 14: 1900, 15: 3512, 16: 6542, 17: 12251,
    18: 23000, 19: 43390, 20: 82025,
}


def bits_strategy(max_len=256):
    return st.text(alphabet="01", min_size=0, max_size=max_len)


class TestBitString:
    def test_value_msb_first(self):
        assert BitString("1011").value == 11
        assert BitString("0001").value == 1
        assert len(BitString("0001")) == 4

    def test_empty(self):
        empty = BitString("")
        assert len(empty) == 0 and empty.value == 0

    def test_from_int_range(self):
        with pytest.raises(ValueError):
            BitString.from_int(4, 2)
        with pytest.raises(ValueError):
            BitString.from_int(-1, 2)

    def test_indexing(self):
        x = BitString("101")
        assert [x[0], x[1], x[2]] == [1, 0, 1]
        assert list(x) == [1, 0, 1]

    def test_prefix(self):
        assert BitString("110101").prefix(3) == BitString("110")
        assert BitString("110101").prefix(0) == BitString("")

    def test_immutable(self):
        x = BitString("10")
        with pytest.raises(AttributeError):
            x.value = 3

    @given(bits_strategy())
    def test_bytes_roundtrip(self, bits):
        x = BitString(bits)
        assert BitString.from_bytes(x.to_bytes(), x.n) == x

    @given(bits_strategy())
    def test_to01_roundtrip(self, bits):
        assert BitString(bits).to01() == bits


class TestDotMod2:
    def test_examples(self):
        assert dot_mod2(BitString("101"), BitString("110")) == 1
        assert dot_mod2(BitString("00000"), BitString("10110")) == 0
        assert dot_mod2(BitString("1111"), BitString("1111")) == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dot_mod2(BitString("10"), BitString("100"))

    @given(bits_strategy(64), st.randoms())
    def test_matches_bitwise_sum(self, bits, rnd):
        x = BitString(bits)
        r = BitString("".join(rnd.choice("01") for _ in range(x.n)))
        expected = sum(a * b for a, b in zip(x, r)) % 2
        assert dot_mod2(x, r) == expected


class TestResidue:
    def test_examples(self):
        assert residue(BitString("1011"), 7) == 4
        assert residue(BitString("0000"), 13) == 0

    def test_pow2_127_mod_3(self):
        # oracle: square-and-multiply from scratch
        acc = 1
        for _ in range(127):
            acc = (acc * 2) % 3
        assert acc == 2
        assert residue(BitString.from_int(1 << 127, 128), 3) == 2

    def test_rejects_small_modulus(self):
        with pytest.raises(ValueError):
            residue(BitString("1"), 1)

    @given(bits_strategy(256), st.integers(min_value=2, max_value=10**9))
    @settings(max_examples=200)
    def test_matches_schoolbook_oracle(self, bits, p):
        x = BitString(bits)
        acc = 0
        for bit in bits:
            acc = (acc * 2 + int(bit)) % p
        assert residue(x, p) == acc


def _trial_division_primes(lo, hi):
    out = []
    for n in range(max(2, lo), hi):
        if all(n % d for d in range(2, int(n**0.5) + 1)):
            out.append(n)
    return out


class TestPrimes:
    def test_small_listings(self):
        assert primes_of_bitlen(1) == []
        assert primes_of_bitlen(2) == [2, 3]
        assert primes_of_bitlen(3) == [5, 7]
        assert primes_of_bitlen(4) == [11, 13]
        assert len(primes_of_bitlen(5)) == 5

    @pytest.mark.parametrize("bitlen", [4, 5, 6, 7, 8, 9, 10])
    def test_matches_trial_division(self, bitlen):
        lo, hi = 1 << (bitlen - 1), 1 << bitlen
        assert primes_of_bitlen(bitlen) == _trial_division_primes(lo, hi)

    @pytest.mark.parametrize("bitlen", [8, 12, 16, 20])
    def test_counts_match_prime_counting(self, bitlen):
        count = _PI_POW2[bitlen] - _PI_POW2[bitlen - 1]
        assert len(primes_of_bitlen(bitlen)) == count

    def test_cap_enforced(self):
        with pytest.raises(ValueError, match="cap"):
            primes_of_bitlen(29)

    def test_first_primes(self):
        assert first_primes(10) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
        assert first_primes(0) == []
        assert first_primes(512)[-1] == 3671  # oracle: 512th prime
        assert len(first_primes(512)) == 512

    def test_first_primes_agree_with_sieve(self):
        primes = first_primes(200)
        assert primes == _trial_division_primes(2, primes[-1] + 1)


def _independent_is_prime(n, rounds=40):
    """Test-local Miller-Rabin with randomized bases; separate code path."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    rnd = random.Random(0xC0FFEE ^ n)
    for _ in range(rounds):
        a = rnd.randrange(2, max(3, n - 1))
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class TestRandomPrime:
    def test_bitlen_2(self):
        outcomes = {random_prime(2, RandomSource(0, s)) for s in range(32)}
        assert outcomes == {2, 3}

    def test_bitlen_5_support(self):
        # oracle: sieve of [16, 32)
        allowed = set(_trial_division_primes(16, 32))
        assert allowed == {17, 19, 23, 29, 31}
        outcomes = {random_prime(5, RandomSource(3, s)) for s in range(64)}
        assert outcomes <= allowed
        assert len(outcomes) >= 4

    def test_reproducible(self):
        a = random_prime(40, RandomSource(9, 9))
        b = random_prime(40, RandomSource(9, 9))
        assert a == b

    @pytest.mark.parametrize("bitlen", [2, 3, 8, 17, 40, 80, 130])
    def test_exact_bitlen_and_primality(self, bitlen):
        for s in range(5):
            p = random_prime(bitlen, RandomSource(11, s))
            assert p.bit_length() == bitlen
            assert _independent_is_prime(p)

    def test_rejects_tiny_bitlen(self):
        with pytest.raises(ValueError):
            random_prime(1, RandomSource(0))


class TestIsPrime:
    def test_agrees_with_independent_checker(self):
        rnd = random.Random(5)
        for _ in range(300):
            n = rnd.randrange(2, 1 << 48)
            assert is_prime(n) == _independent_is_prime(n), n

    def test_small_values(self):
        primes_below_60 = set(_trial_division_primes(2, 60))
        for n in range(60):
            assert is_prime(n) == (n in primes_below_60)


class TestRandomSource:
    def test_replay(self):
        a = RandomSource(7, 3)
        b = RandomSource(7, 3)
        assert [a.getrandbits(13) for _ in range(20)] == [
            b.getrandbits(13) for _ in range(20)
        ]

    def test_streams_differ(self):
        a = RandomSource(7, 0).getrandbits(64)
        b = RandomSource(7, 1).getrandbits(64)
        assert a != b

    def test_bit_accounting(self):
        rng = RandomSource(1)
        rng.getrandbits(10)
        rng.bitstring(7)
        assert rng.bits_consumed == 17
        rng.getrandbits(0)
        assert rng.bits_consumed == 17

    def test_randbelow_range(self):
        rng = RandomSource(2)
        values = {rng.randbelow(10) for _ in range(300)}
        assert values == set(range(10))

    def test_fork_replayable(self):
        parent = RandomSource(5, 5)
        child = parent.fork()
        replant = RandomSource(child.seed, child.stream)
        assert child.getrandbits(32) == replant.getrandbits(32)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RandomSource(-1)
        with pytest.raises(ValueError):
            RandomSource(0, 1 << 64)


class TestDyadic:
    def test_validation(self):
        with pytest.raises(ValueError):
            Dyadic(0, 0)
        with pytest.raises(ValueError):
            Dyadic(5, 2)  # 5/4 > 1
        assert float(Dyadic(1, 3)) == 0.125

    def test_halved(self):
        assert Dyadic(3, 2).halved() == Dyadic(3, 3)

    def test_ceil_log2(self):
        assert ceil_log2_ratio(1, 1) == 0
        assert ceil_log2_ratio(120, 1) == 7
        assert ceil_log2_ratio(128, 1) == 7
        assert ceil_log2_ratio(129, 1) == 8
        # ceil(log2(16 / (1/4))) = ceil(log2 64) = 6
        assert ceil_log2_div(16, Dyadic(1, 2)) == 6
        assert ceil_log2_div(2, Dyadic(1, 0)) == 1
