"""Fingerprinting primitives: random-prime residues and shared-seed parity sketches.

Both sketches identify one string among a bounded set of candidates. The
prime fingerprint stores x mod p for a random prime p sized so that, for all
but an eps fraction of primes, no other candidate shares the residue. The
parity sketch stores inner products of x with replayable random strings.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .bitcore import (
    BitString,
    Dyadic,
    RandomSource,
    ceil_log2_div,
    dot_mod2,
    random_prime,
    residue,
)
from .descriptions import DescriptionSystem, enumerate_candidates
from .wire import decode_varint, encode_varint, expect_magic, take_bytes

# Slack added to the prime bit length. With this value the dyadic interval of
# primes provably holds at least 2^b * n / eps primes across the desk-scale
# parameter grid (checked exhaustively in the test suite).
C_TILDE = 8

_FP_MAGIC = b"KF01"


def fingerprint_bitlen(n: int, b: int, eps: Dyadic) -> int:
    """Mandated prime bit length: 2*b + 2*ceil(log2(n/eps)) + C_TILDE."""
    if n < 1 or b < 1:
        raise ValueError("n and b must be positive")
    return 2 * b + 2 * ceil_log2_div(n, eps) + C_TILDE


@dataclass(frozen=True)
class Fingerprint:
    """Residue fingerprint (n, b, p, x mod p) with its encoding context."""

    n: int
    b: int
    eps: Dyadic
    p: int
    residue: int

    def __post_init__(self):
        if not 0 <= self.residue < self.p:
            raise ValueError("residue out of range")
        if self.p < 2:
            raise ValueError("modulus must be at least 2")

    def to_bytes(self) -> bytes:
        plen = (self.p.bit_length() + 7) // 8
        return (
            _FP_MAGIC
            + encode_varint(self.n)
            + encode_varint(self.b)
            + encode_varint(self.eps.num)
            + encode_varint(self.eps.log_den)
            + encode_varint(plen)
            + self.p.to_bytes(plen, "big")
            + self.residue.to_bytes(plen, "big")
        )

    @classmethod
    def parse(cls, data: bytes, offset: int = 0) -> tuple["Fingerprint", int]:
        pos = expect_magic(data, _FP_MAGIC, offset)
        n, pos = decode_varint(data, pos)
        b, pos = decode_varint(data, pos)
        num, pos = decode_varint(data, pos)
        log_den, pos = decode_varint(data, pos)
        plen, pos = decode_varint(data, pos)
        praw, pos = take_bytes(data, pos, plen)
        rraw, pos = take_bytes(data, pos, plen)
        p = int.from_bytes(praw, "big")
        if plen == 0 or (p.bit_length() + 7) // 8 != plen:
            raise ValueError("prime field is not minimal-width")
        return cls(n, b, Dyadic(num, log_den), p, int.from_bytes(rraw, "big")), pos

    @classmethod
    def from_bytes(cls, data: bytes) -> "Fingerprint":
        fp, pos = cls.parse(data)
        if pos != len(data):
            raise ValueError("trailing bytes after fingerprint")
        return fp


def prime_fp_encode(
    x: BitString,
    b: int,
    eps: Dyadic,
    rng: RandomSource,
    force_prime: int | None = None,
) -> Fingerprint:
    """Fingerprint x against a fresh random prime of the mandated length.

    force_prime bypasses the draw; it exists so tests can stage residue
    collisions deliberately.
    """
    if b < 1:
        raise ValueError("candidate bound must be positive")
    p = force_prime if force_prime is not None else random_prime(
        fingerprint_bitlen(x.n, b, eps), rng
    )
    return Fingerprint(x.n, b, eps, p, residue(x, p))


def prime_fp_decode(
    fp: Fingerprint, w: bytes, sys: DescriptionSystem
) -> BitString | None:
    """First enumerated candidate matching the stored residue, or None.

    None means either the prime draw was one of the bad eps-fraction or the
    target's complexity under w was not below fp.b in the first place.
    """
    for u in enumerate_candidates(sys, w, fp.b, fp.n):
        if residue(u, fp.p) == fp.residue:
            return u
    return None


def bad_prime_fraction(
    x: BitString, candidates: Iterable[BitString], primes: Sequence[int]
) -> Fraction:
    """Exact fraction of primes under which some candidate collides with x."""
    cand = list(candidates)
    if any(u == x for u in cand):
        raise ValueError("x must not be among the candidates")
    if not primes:
        raise ValueError("empty prime set")
    bad = 0
    for p in primes:
        rx = residue(x, p)
        if any(residue(u, p) == rx for u in cand):
            bad += 1
    return Fraction(bad, len(primes))


def parity_count(n: int, k: int, eps: Dyadic) -> int:
    """Number of parity bits: k + ceil(log2(2n/eps))."""
    if n < 1 or k < 0:
        raise ValueError("n must be positive and k non-negative")
    return k + ceil_log2_div(2 * n, eps)


@dataclass(frozen=True)
class ParitySketch:
    """Parities of x against random strings replayable from the stored key."""

    n: int
    ell: int
    key: tuple[int, int]  # (seed, stream) of the source that generated the r_i
    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != self.ell:
            raise ValueError("bit count disagrees with ell")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("parity bits must be 0 or 1")

    def masks(self) -> Iterable[BitString]:
        src = RandomSource(*self.key)
        for _ in range(self.ell):
            yield src.bitstring(self.n)


def parity_encode(
    x: BitString, k: int, eps: Dyadic, rng: RandomSource
) -> ParitySketch:
    """Sketch x with k + ceil(log2(2n/eps)) parities of fresh random strings."""
    ell = parity_count(x.n, k, eps)
    child = rng.fork()
    key = (child.seed, child.stream)
    gen = RandomSource(*key)
    bits = tuple(dot_mod2(x, gen.bitstring(x.n)) for _ in range(ell))
    return ParitySketch(x.n, ell, key, bits)


def parity_matches(sk: ParitySketch, y: BitString) -> bool:
    """Whether y reproduces every parity in the sketch (early exit)."""
    if y.n != sk.n:
        raise ValueError("length mismatch")
    for want, r in zip(sk.bits, sk.masks()):
        if dot_mod2(y, r) != want:
            return False
    return True


def parity_decode(
    sk: ParitySketch, k: int, sys: DescriptionSystem, z: bytes
) -> BitString | None:
    """First enumerated y with complexity <= k matching all parities, or None.

    The threshold here is non-strict (complexity <= k) while the prime
    decoder uses a strict bound; the two decoders keep their own conventions
    deliberately.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    for y in enumerate_candidates(sys, z, k + 1, sk.n):
        if parity_matches(sk, y):
            return y
    return None
