"""Bit strings, exact residue arithmetic, prime generation, and seeded randomness.

Everything downstream builds on three contracts fixed here: BitString values
are immutable and read their bits as a number with the most significant bit
first; a RandomSource replays an identical bit stream for an identical
(seed, stream) pair, with distinct streams independent; and primality testing
is a deterministic function of the candidate.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .wire import pack_bits, unpack_bits

PRIME_ENUM_MAX_BITLEN = 28  # exhaustive prime listing stays desk-sized below this
PRIME_RETRY_CAP = 10**6     # rejection draws before declaring an internal fault

_U64 = 1 << 64


class BitString:
    """Immutable fixed-length bit sequence.

    Bit 0 is the leftmost bit and the most significant when the string is
    read as an integer, so ``BitString("1011")`` has value 11. The empty
    string (length 0, value 0) is allowed.
    """

    __slots__ = ("n", "value")

    def __init__(self, bits: str = ""):
        if bits and set(bits) - {"0", "1"}:
            raise ValueError("bit string may contain only '0' and '1'")
        object.__setattr__(self, "n", len(bits))
        object.__setattr__(self, "value", int(bits, 2) if bits else 0)

    @classmethod
    def from_int(cls, value: int, length: int) -> "BitString":
        if length < 0:
            raise ValueError("negative length")
        if value < 0 or value.bit_length() > length:
            raise ValueError(f"value {value} does not fit in {length} bits")
        out = cls.__new__(cls)
        object.__setattr__(out, "n", length)
        object.__setattr__(out, "value", value)
        return out

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls.from_int(0, length)

    @classmethod
    def from_bytes(cls, data: bytes, length: int | None = None) -> "BitString":
        if length is None:
            length = 8 * len(data)
        return cls.from_int(unpack_bits(data, length), length)

    def to_bytes(self) -> bytes:
        """Packed big-endian bytes, first bit in the high bit of the first byte."""
        return pack_bits(self.value, self.n)

    def to01(self) -> str:
        return format(self.value, f"0{self.n}b") if self.n else ""

    def prefix(self, k: int) -> "BitString":
        if not 0 <= k <= self.n:
            raise ValueError("prefix length out of range")
        return BitString.from_int(self.value >> (self.n - k), k)

    def __setattr__(self, name, value):
        raise AttributeError("BitString is immutable")

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError("bit index out of range")
        return (self.value >> (self.n - 1 - i)) & 1

    def __iter__(self):
        for i in range(self.n):
            yield self[i]

    def __xor__(self, other: "BitString") -> "BitString":
        if self.n != other.n:
            raise ValueError("length mismatch")
        return BitString.from_int(self.value ^ other.value, self.n)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitString)
            and self.n == other.n
            and self.value == other.value
        )

    def __hash__(self) -> int:
        return hash((self.n, self.value))

    def __repr__(self) -> str:
        return f'BitString("{self.to01()}")'


class RandomSource:
    """Reproducible bit source keyed by a 64-bit (seed, stream) pair.

    The same pair always replays the same stream; distinct stream ids are
    independent, which is what lets Monte Carlo trials run in parallel and
    still be replayable one by one. Drawn bits are counted in
    ``bits_consumed`` so randomness budgets can be asserted.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= seed < _U64 or not 0 <= stream < _U64:
            raise ValueError("seed and stream must be 64-bit non-negative values")
        self.seed = seed
        self.stream = stream
        digest = hashlib.sha256(
            b"kodec.rng.v1" + seed.to_bytes(8, "big") + stream.to_bytes(8, "big")
        ).digest()
        self._rng = random.Random(int.from_bytes(digest, "big"))
        self.bits_consumed = 0

    def getrandbits(self, k: int) -> int:
        if k < 0:
            raise ValueError("negative bit count")
        if k == 0:
            return 0
        self.bits_consumed += k
        return self._rng.getrandbits(k)

    def randbelow(self, bound: int) -> int:
        """Uniform draw from [0, bound) by rejection, so the bit accounting
        stays exact."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        k = (bound - 1).bit_length()
        while True:
            value = self.getrandbits(k)
            if value < bound:
                return value

    def bitstring(self, length: int) -> BitString:
        return BitString.from_int(self.getrandbits(length), length)

    def fork(self) -> "RandomSource":
        """Derive a child source whose (seed, stream) pair can be recorded and
        replayed independently of this source's remaining stream."""
        return RandomSource(self.getrandbits(64), self.getrandbits(64))

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, stream={self.stream})"


@dataclass(frozen=True)
class Dyadic:
    """Exact dyadic rational num / 2**log_den in (0, 1].

    Error parameters are kept dyadic so every length formula is computed in
    integer arithmetic and round-trips config and wire encodings exactly.
    """

    num: int
    log_den: int

    def __post_init__(self):
        if self.log_den < 0:
            raise ValueError("log_den must be non-negative")
        if not 1 <= self.num <= (1 << self.log_den):
            raise ValueError("dyadic value must lie in (0, 1]")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.num, 1 << self.log_den)

    def halved(self) -> "Dyadic":
        return Dyadic(self.num, self.log_den + 1)

    def div_pow2(self, t: int) -> "Dyadic":
        if t < 0:
            raise ValueError("negative shift")
        return Dyadic(self.num, self.log_den + t)

    def __float__(self) -> float:
        return self.num / (1 << self.log_den)

    def __str__(self) -> str:
        return f"{self.num}/2^{self.log_den}"


def ceil_log2_ratio(num: int, den: int) -> int:
    """Smallest non-negative t with 2**t * den >= num."""
    if num <= 0 or den <= 0:
        raise ValueError("ratio parts must be positive")
    t = max(0, num.bit_length() - den.bit_length() - 1)
    while (den << t) < num:
        t += 1
    return t


def ceil_log2_div(n: int, eps: Dyadic) -> int:
    """ceil(log2(n / eps)) computed exactly."""
    return ceil_log2_ratio(n << eps.log_den, eps.num)


def dot_mod2(x: BitString, r: BitString) -> int:
    """Inner product of two equal-length bit strings over GF(2)."""
    if x.n != r.n:
        raise ValueError(f"length mismatch: {x.n} vs {r.n}")
    return (x.value & r.value).bit_count() & 1


def residue(x: BitString, p: int) -> int:
    """x mod p with x read as a number; exact for any length."""
    if p < 2:
        raise ValueError("modulus must be at least 2")
    return x.value % p


# Strong-pseudoprime witnesses: this set is known to be exact for every
# candidate below 3_317_044_064_679_887_385_961_981 (~2^81).
_MR_BASES_SMALL = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_MR_DETERMINISTIC_LIMIT = 3_317_044_064_679_887_385_961_981
# Above that limit the same fixed procedure runs the first 40 primes as
# witnesses: still a deterministic function of the candidate, documented as
# heuristic rather than proven.
_MR_BASES_LARGE = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149,
    151, 157, 163, 167, 173,
)


def _strong_probable_prime(n: int, base: int) -> bool:
    if base % n == 0:
        return True
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    x = pow(base, d, n)
    if x in (1, n - 1):
        return True
    for _ in range(r - 1):
        x = x * x % n
        if x == n - 1:
            return True
    return False


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin over fixed witness sets."""
    if n < 2:
        return False
    for p in _MR_BASES_SMALL:
        if n % p == 0:
            return n == p
    bases = _MR_BASES_SMALL if n < _MR_DETERMINISTIC_LIMIT else _MR_BASES_LARGE
    return all(_strong_probable_prime(n, b) for b in bases)


def random_prime(bitlen: int, rng: RandomSource) -> int:
    """Uniform prime of bit length exactly bitlen, by rejection sampling.

    Candidates are drawn uniformly from the dyadic interval with the top bit
    forced; for bitlen > 2 the low bit is forced as well, which maps each even
    candidate to its odd successor and keeps the distribution uniform over the
    (all odd) primes of that length.
    """
    if bitlen < 2:
        raise ValueError("bit length must be at least 2")
    for _ in range(PRIME_RETRY_CAP):
        candidate = (1 << (bitlen - 1)) | rng.getrandbits(bitlen - 1)
        if bitlen > 2:
            candidate |= 1
        if is_prime(candidate):
            return candidate
    raise RuntimeError(
        f"no prime of bit length {bitlen} after {PRIME_RETRY_CAP} draws; "
        "the rejection loop should terminate long before this"
    )


def _odd_primes_upto(limit: int) -> np.ndarray:
    """Odd primes below limit via a plain sieve on odd numbers."""
    if limit <= 3:
        return np.empty(0, dtype=np.int64)
    half = np.ones(limit // 2, dtype=bool)  # index i represents 2i + 1
    half[0] = False
    for i in range(1, (int(limit**0.5) + 1) // 2 + 1):
        if half[i]:
            p = 2 * i + 1
            half[(p * p) // 2::p] = False
    return 2 * np.nonzero(half)[0].astype(np.int64) + 1


def primes_of_bitlen(bitlen: int) -> list[int]:
    """All primes in [2^(bitlen-1), 2^bitlen), ascending, by segmented sieve."""
    if bitlen > PRIME_ENUM_MAX_BITLEN:
        raise ValueError(
            f"bit length {bitlen} exceeds the exhaustive cap "
            f"{PRIME_ENUM_MAX_BITLEN}"
        )
    if bitlen < 2:
        return []
    lo = 1 << (bitlen - 1)
    hi = 1 << bitlen
    base = _odd_primes_upto(int(hi**0.5) + 1)
    # odd candidates lo+1, lo+3, ..., hi-1
    seg = np.ones((hi - lo) // 2, dtype=bool)
    for p in base:
        p = int(p)
        start = max(p * p, ((lo + p - 1) // p) * p)
        if start % 2 == 0:
            start += p
        if start < hi:
            seg[(start - lo - 1) // 2::p] = False
    out = (lo + 1 + 2 * np.nonzero(seg)[0]).tolist()
    if bitlen == 2:
        out = [2] + out
    return out


def first_primes(count: int) -> list[int]:
    """The first `count` primes, ascending."""
    if count < 0:
        raise ValueError("negative count")
    if count == 0:
        return []
    import math

    bound = 16
    if count >= 6:
        n = float(count)
        bound = int(n * (math.log(n) + math.log(math.log(n)))) + 16
    while True:
        odd = _odd_primes_upto(bound)
        primes = [2] + odd.tolist()
        if len(primes) >= count:
            return primes[:count]
        bound *= 2
