"""Extractor tables and families: exhaustive certification, output-load
analysis, and the seeded evaluators the compressor draws its k-bit values from.

A table f: [N] x [D] -> [M] is certified as a (k, eps)-extractor by checking
every source set of size exactly 2^k; larger sets are mixtures of those, so
their deviation cannot exceed the maximum over exact-size sets. A direct
checker that really iterates every |A| >= 2^k and every output event exists
for micro instances and pins that reduction down in tests.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .bitcore import BitString, Dyadic, RandomSource, ceil_log2_div, is_prime
from .wire import decode_varint, encode_varint, expect_magic, take_bytes

EXHAUSTIVE_CHECK_CAP = 10**8  # bound on C(N, 2^k) * (2^k * D + M)
TABLE_SEARCH_CAP = 10**5

_TABLE_MAGIC = b"KX01"


class FamilySearchError(RuntimeError):
    """Random-table search exhausted its attempt budget."""

    def __init__(self, message: str, best_deviation: Fraction):
        super().__init__(f"{message} (best deviation found: {best_deviation})")
        self.best_deviation = best_deviation


class ExtractorTable:
    """Total map [N] x [D] -> [M] with M a power of two."""

    def __init__(self, N: int, D: int, M: int, entries):
        if N < 1 or D < 1 or M < 1:
            raise ValueError("dimensions must be positive")
        if M & (M - 1):
            raise ValueError("M must be a power of two")
        arr = np.asarray(entries, dtype=np.int64)
        if arr.shape != (N, D):
            raise ValueError(f"entries must have shape ({N}, {D})")
        if arr.size and (arr.min() < 0 or arr.max() >= M):
            raise ValueError("entries out of range")
        self.N = N
        self.D = D
        self.M = M
        self.entries = arr
        self.entries.setflags(write=False)
        self._row_hist: np.ndarray | None = None

    @classmethod
    def random(cls, N: int, D: int, M: int, rng: RandomSource) -> "ExtractorTable":
        bits = (M - 1).bit_length()
        rows = [[rng.getrandbits(bits) for _ in range(D)] for _ in range(N)]
        return cls(N, D, M, rows)

    def row_histograms(self) -> np.ndarray:
        """(N, M) counts of each output value per source row."""
        if self._row_hist is None:
            hist = np.zeros((self.N, self.M), dtype=np.int64)
            for a in range(self.N):
                hist[a] = np.bincount(self.entries[a], minlength=self.M)
            self._row_hist = hist
            self._row_hist.setflags(write=False)
        return self._row_hist

    def truncated(self, k_bits: int) -> "ExtractorTable":
        """Prefix restriction: outputs cut to their first k_bits bits."""
        m_bits = (self.M - 1).bit_length()
        if not 0 <= k_bits <= m_bits:
            raise ValueError("prefix width out of range")
        return ExtractorTable(
            self.N, self.D, 1 << k_bits, self.entries >> (m_bits - k_bits)
        )

    def to_bytes(self) -> bytes:
        width = max(1, ((self.M - 1).bit_length() + 7) // 8)
        out = bytearray(_TABLE_MAGIC)
        out += encode_varint(self.N)
        out += encode_varint(self.D)
        out += encode_varint(self.M)
        for a in range(self.N):
            for d in range(self.D):
                out += int(self.entries[a, d]).to_bytes(width, "big")
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ExtractorTable":
        pos = expect_magic(data, _TABLE_MAGIC)
        N, pos = decode_varint(data, pos)
        D, pos = decode_varint(data, pos)
        M, pos = decode_varint(data, pos)
        width = max(1, ((M - 1).bit_length() + 7) // 8)
        raw, pos = take_bytes(data, pos, N * D * width)
        if pos != len(data):
            raise ValueError("trailing bytes after table")
        flat = [
            int.from_bytes(raw[i * width:(i + 1) * width], "big")
            for i in range(N * D)
        ]
        return cls(N, D, M, np.array(flat, dtype=np.int64).reshape(N, D))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ExtractorTable)
            and (self.N, self.D, self.M) == (other.N, other.D, other.M)
            and np.array_equal(self.entries, other.entries)
        )


@dataclass(frozen=True)
class ExtractorCheck:
    """Outcome of a certification run: a certificate, or the first violating
    source/event pair with its exact deviation."""

    certified: bool
    k: int
    eps: Dyadic
    max_deviation: Fraction
    counterexample: tuple[tuple[int, ...], frozenset, Fraction] | None
    sets_checked: int


def _deviation_allowed(eps: Dyadic, ad: int, m: int) -> int:
    # excess/(ad*m) <= eps  <=>  excess <= floor(eps.num * ad * m / 2^log_den)
    return (eps.num * ad * m) >> eps.log_den


def is_extractor(table: ExtractorTable, k: int, eps: Dyadic) -> ExtractorCheck:
    """Exhaustive (k, eps)-extractor check over all source sets of size 2^k.

    The per-set test uses the fact that the worst event B is the set of
    outputs with positive excess, so a single pass over [M] finds the maximum
    deviation exactly.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    N, D, M = table.N, table.D, table.M
    size = 1 << k
    if size > N:
        return ExtractorCheck(True, k, eps, Fraction(0), None, 0)
    cost = comb(N, size) * (size * D + M)
    if cost > EXHAUSTIVE_CHECK_CAP:
        raise ValueError(
            f"exhaustive check cost {cost} exceeds cap {EXHAUSTIVE_CHECK_CAP}; "
            "use a statistical validation instead"
        )
    R = table.row_histograms()
    ad = size * D
    allowed = min(_deviation_allowed(eps, ad, M), ad * M)
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(N), size)),
        dtype=np.intp,
    ).reshape(-1, size)
    sums = R[combos].sum(axis=1)
    excess = np.maximum(sums * M - ad, 0).sum(axis=1)
    violating = excess > allowed
    if violating.any():
        i = int(np.argmax(violating))
        A = tuple(int(a) for a in combos[i])
        B = frozenset(int(y) for y in range(M) if sums[i, y] * M > ad)
        dev = Fraction(int(excess[i]), ad * M)
        return ExtractorCheck(False, k, eps, dev, (A, B, dev), len(combos))
    max_dev = Fraction(int(excess.max()), ad * M)
    return ExtractorCheck(True, k, eps, max_dev, None, len(combos))


def is_extractor_direct(table: ExtractorTable, k: int, eps: Dyadic) -> ExtractorCheck:
    """Literal-definition checker: every A with |A| >= 2^k, every B. Only for
    micro instances; this is the oracle the fast path is validated against."""
    N, D, M = table.N, table.D, table.M
    if N > 12:
        raise ValueError("direct checker is for micro instances (N <= 12)")
    size = 1 << k
    if size > N:
        return ExtractorCheck(True, k, eps, Fraction(0), None, 0)
    R = table.row_histograms()
    eps_frac = eps.fraction
    max_dev = Fraction(0)
    checked = 0
    for m in range(size, N + 1):
        for A in itertools.combinations(range(N), m):
            checked += 1
            counts = R[list(A)].sum(axis=0)
            ad = m * D
            for r in range(M + 1):
                for B in itertools.combinations(range(M), r):
                    hits = int(sum(counts[y] for y in B))
                    dev = abs(Fraction(hits, ad) - Fraction(r, M))
                    if dev > max_dev:
                        max_dev = dev
                    if dev > eps_frac:
                        return ExtractorCheck(
                            False, k, eps, dev, (A, frozenset(B), dev), checked
                        )
    return ExtractorCheck(True, k, eps, max_dev, None, checked)


def bad_set(table: ExtractorTable, S, load_factor) -> set[int]:
    """Outputs whose preimage load within S strictly exceeds load_factor times
    the average D|S|/M."""
    S = sorted(set(S))
    if not S:
        raise ValueError("S must be non-empty")
    b = Fraction(load_factor)
    counts = table.row_histograms()[S].sum(axis=0)
    lhs_scale = table.M * b.denominator
    rhs = b.numerator * table.D * len(S)
    return {y for y in range(table.M) if int(counts[y]) * lhs_scale > rhs}


def poor_elements(table: ExtractorTable, S, eps: Dyadic) -> set[int]:
    """Elements of S for which more than a 2*eps fraction of seeds land on a
    (1/eps)-bad output."""
    S = sorted(set(S))
    if not S:
        raise ValueError("S must be non-empty")
    bad = bad_set(table, S, Fraction(1 << eps.log_den, eps.num))
    out = set()
    for x in S:
        hits = sum(1 for i in range(table.D) if int(table.entries[x, i]) in bad)
        if hits << eps.log_den > 2 * eps.num * table.D:
            out.add(x)
    return out


@dataclass(frozen=True)
class PoorReport:
    """Bad outputs and poor sources for one (S, eps, k) configuration."""

    S: frozenset
    bad: frozenset
    poor: frozenset
    load_factor: Fraction
    eps: Dyadic
    k: int | None


def poor_report(table: ExtractorTable, S, eps: Dyadic, k: int | None = None) -> PoorReport:
    load = Fraction(1 << eps.log_den, eps.num)
    return PoorReport(
        frozenset(S),
        frozenset(bad_set(table, S, load)),
        frozenset(poor_elements(table, S, eps)),
        load,
        eps,
        k,
    )


def check_poor_bound(table: ExtractorTable, k: int, eps: Dyadic, S) -> bool:
    """Whether fewer than 2^k elements of S are poor. False for a certified
    (k, eps) table would falsify the counting argument the decoder rests on."""
    return len(poor_elements(table, S, eps)) < (1 << k)


def preimage_load(table: ExtractorTable, S, y: int) -> int:
    """|{(x, i) in S x [D] : f(x, i) = y}|."""
    S = sorted(set(S))
    return int(table.row_histograms()[S].sum(axis=0)[y])


def certify_random_table(
    N: int,
    D: int,
    M: int,
    k: int,
    eps: Dyadic,
    seed: int,
    max_attempts: int = TABLE_SEARCH_CAP,
) -> tuple[ExtractorTable, int, ExtractorCheck]:
    """Draw random tables until one certifies; returns (table, attempts, check)."""
    best = Fraction(1)
    for attempt in range(max_attempts):
        table = ExtractorTable.random(N, D, M, RandomSource(seed, attempt))
        check = is_extractor(table, k, eps)
        if check.certified:
            return table, attempt + 1, check
        best = min(best, check.max_deviation)
    raise FamilySearchError(
        f"no certifying table in {max_attempts} attempts", best
    )


_modulus_cache: dict[int, int] = {}


def _modulus_for(n: int) -> int:
    """Smallest prime above 2^n; the permutation domain for hash families."""
    if n not in _modulus_cache:
        p = (1 << n) + 1
        while not is_prime(p):
            p += 2
        _modulus_cache[n] = p
    return _modulus_cache[n]


class ExtractorFamily:
    """Family of seeded maps {0,1}^n x [D] -> {0,1}^n whose k-bit prefixes act
    as extractors.

    Table mode wraps a brute-force-certified ExtractorTable (micro n only).
    Hash mode evaluates x -> first n bits of (a_i * x + b_i mod p) for a fixed
    prime p > 2^n and per-seed coefficients derived deterministically from
    (n, eps, seed); it is validated statistically, never certified.
    """

    def __init__(
        self,
        n: int,
        eps: Dyadic,
        log_d: int,
        kind: str,
        seed: int = 0,
        table: ExtractorTable | None = None,
        certified: bool = False,
    ):
        if kind not in ("table", "hash"):
            raise ValueError("kind must be 'table' or 'hash'")
        if kind == "table":
            if table is None:
                raise ValueError("table mode requires a table")
            if table.N != 1 << n or table.M != 1 << n or table.D != 1 << log_d:
                raise ValueError("table shape disagrees with family parameters")
        self.n = n
        self.eps = eps
        self.log_d = log_d
        self.kind = kind
        self.seed = seed
        self.table = table
        self.certified = certified
        self._coeffs: dict[int, tuple[int, int]] = {}

    @property
    def D(self) -> int:
        return 1 << self.log_d

    def _key64(self) -> int:
        digest = hashlib.sha256(
            b"kodec.family.v1"
            + self.n.to_bytes(4, "big")
            + self.eps.num.to_bytes(8, "big")
            + self.eps.log_den.to_bytes(4, "big")
            + self.seed.to_bytes(8, "big")
        ).digest()
        return int.from_bytes(digest[:8], "big")

    def _coeffs_for(self, i: int) -> tuple[int, int]:
        if i not in self._coeffs:
            p = _modulus_for(self.n)
            src = RandomSource(self._key64(), i)
            self._coeffs[i] = (1 + src.randbelow(p - 1), src.randbelow(p))
        return self._coeffs[i]

    def eval(self, x: BitString, i: int) -> BitString:
        if x.n != self.n:
            raise ValueError(f"input length {x.n}, family expects {self.n}")
        if not 0 <= i < self.D:
            raise ValueError("seed index out of range")
        if self.kind == "table":
            return BitString.from_int(int(self.table.entries[x.value, i]), self.n)
        a, b = self._coeffs_for(i)
        y = (a * x.value + b) % _modulus_for(self.n)
        return BitString.from_int(y & ((1 << self.n) - 1), self.n)

    def eval_prefix(self, x: BitString, i: int, k: int) -> BitString:
        return self.eval(x, i).prefix(k)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_coeffs"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


def build_family(
    n: int,
    eps: Dyadic,
    mode: str = "hash",
    seed: int = 0,
    log_d_cap: int = 16,
) -> ExtractorFamily:
    """Build an extractor family for n-bit strings.

    Table mode (n <= 4) searches random tables until every prefix k <= n
    certifies exhaustively; hash mode returns the affine family with
    D = 2^(ceil(log2(n/eps))^2), capped at 2^log_d_cap.
    """
    if n < 1:
        raise ValueError("n must be positive")
    q = ceil_log2_div(n, eps)
    if mode == "hash":
        return ExtractorFamily(n, eps, min(q * q, log_d_cap), "hash", seed=seed)
    if mode != "table":
        raise ValueError("mode must be 'table' or 'hash'")
    if n > 4:
        raise ValueError("table mode is limited to n <= 4")
    log_d = min(q * q, 4)
    N = M = 1 << n
    D = 1 << log_d
    best = Fraction(1)
    for attempt in range(TABLE_SEARCH_CAP):
        table = ExtractorTable.random(N, D, M, RandomSource(seed, attempt))
        worst = Fraction(0)
        ok = True
        for k in range(1, n + 1):
            check = is_extractor(table.truncated(k), k, eps)
            worst = max(worst, check.max_deviation)
            if not check.certified:
                ok = False
                break
        if ok:
            return ExtractorFamily(
                n, eps, log_d, "table", seed=seed, table=table, certified=True
            )
        best = min(best, worst)
    raise FamilySearchError(
        f"no table family for n={n} in {TABLE_SEARCH_CAP} attempts", best
    )


def extract_with_seed(
    fam: ExtractorFamily, x: BitString, k: int, rng: RandomSource
) -> tuple[BitString, int]:
    """k-bit extracted value of x under a fresh uniform seed; returns the seed
    index too, for white-box tests. The index costs exactly log2(D) random
    bits, which is the whole randomness budget of this step."""
    if not 0 <= k <= fam.n:
        raise ValueError("k out of range")
    i = rng.getrandbits(fam.log_d)
    return fam.eval_prefix(x, i, k), i


def sample_family_deviation(
    fam: ExtractorFamily,
    k: int,
    rng: RandomSource,
    sets: int = 4,
) -> Fraction:
    """Statistical validation for hash families: exact deviation of the k-bit
    prefix on `sets` random source sets of size 2^k. Returns the worst
    deviation seen; k is capped so the full evaluation stays desk-sized."""
    if not 1 <= k <= fam.n:
        raise ValueError("k out of range")
    size = 1 << k
    if size * fam.D * sets > 10**7:
        raise ValueError("sample too large; lower k or sets")
    m = size
    worst = Fraction(0)
    for _ in range(sets):
        chosen: set[int] = set()
        while len(chosen) < size:
            chosen.add(rng.getrandbits(fam.n))
        counts = np.zeros(m, dtype=np.int64)
        for xv in chosen:
            x = BitString.from_int(xv, fam.n)
            for i in range(fam.D):
                counts[fam.eval_prefix(x, i, k).value] += 1
        ad = size * fam.D
        excess = int(np.maximum(counts * m - ad, 0).sum())
        worst = max(worst, Fraction(excess, ad * m))
    return worst
