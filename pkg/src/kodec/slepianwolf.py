"""Distributed compression: independent per-party encoders, a joint decoder,
rate-profile checking, and correlated-source generators for the simulator.

Each party compresses its own string at an adjusted rate with private
randomness; the receiver decodes every party against the other parties'
messages. The harness is in-process: transport is a list of PartyMessage
values, which negative tests may drop or reorder.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

from .bitcore import BitString, Dyadic, RandomSource, ceil_log2_div, ceil_log2_ratio
from .codec import CompressedBlob, compress, decompress
from .descriptions import DescriptionSystem, PlantedSystem
from .wire import (
    canonical_tuple,
    decode_varint,
    encode_varint,
    expect_magic,
    take_bytes,
)

# Rate adjustment each encoder adds per other party. The asymptotic analysis
# wants asymptotic_step_bits() below, but at desk scale that exceeds n and
# every message would degenerate to a literal; this measured value is what the
# planted scenarios actually consume, with margin.
SW_B_STEP = 16

# Multiplier in the analysis-level step bound; kept for reporting only.
SW_STEP_C = 4

# Message-size envelope, measured on this wire format and frozen.
SW_DELTA = 4
SW_H = 448

# Modeled description cost of repeating a string already present in the
# condition (tuple bookkeeping included).
COPY_COST = 8

PROFILE_MAX_PARTIES = 8

_MSG_MAGIC = b"KS01"


def asymptotic_step_bits(n: int, ell: int, eps: Dyadic, c: int = SW_STEP_C) -> int:
    """Analysis-level per-step rate adjustment c*ell*ceil(log2((n+2)/eps))^2.

    Desk-scale note: for n around 64 this exceeds n itself, which is exactly
    the degenerate regime where sending the string verbatim is shorter; the
    live encoders therefore use SW_B_STEP and fall back to literals when even
    that overflows.
    """
    q = ceil_log2_div(n + 2, eps)
    return c * ell * q * q


def sw_eps_internal(eps: Dyadic, ell: int) -> Dyadic:
    """Per-party error budget: eps / 2^ceil(log2(ell^2)), the dyadic-safe
    sharpening of dividing by ell^2."""
    if ell < 1:
        raise ValueError("ell must be positive")
    return eps.div_pow2(ceil_log2_ratio(ell * ell, 1))


@dataclass(frozen=True)
class SwProfile:
    """Per-party rate budgets against a shared side condition."""

    ell: int
    k: tuple[int, ...]
    n: int
    eps: Dyadic
    z: bytes = b""

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError("ell must be positive")
        if len(self.k) != self.ell:
            raise ValueError("one rate per party required")
        if any(ki < 0 for ki in self.k):
            raise ValueError("rates must be non-negative")


@dataclass(frozen=True)
class PartyMessage:
    """One party's transmission: a compressed blob, or the string verbatim
    when the adjusted rate already reaches the string length."""

    party: int
    ell: int
    literal: bool
    blob: CompressedBlob | None = None
    x: BitString | None = None

    def __post_init__(self):
        if not 0 <= self.party < self.ell:
            raise ValueError("party index out of range")
        if self.literal and self.x is None:
            raise ValueError("literal message requires the string")
        if not self.literal and self.blob is None:
            raise ValueError("non-literal message requires a blob")

    def bit_length(self) -> int:
        return 8 * len(self.to_bytes())

    def to_bytes(self) -> bytes:
        head = (
            _MSG_MAGIC
            + encode_varint(self.party)
            + encode_varint(self.ell)
            + bytes([1 if self.literal else 0])
        )
        if self.literal:
            return head + encode_varint(self.x.n) + self.x.to_bytes()
        return head + self.blob.to_bytes()

    @classmethod
    def parse(cls, data: bytes, offset: int = 0) -> tuple["PartyMessage", int]:
        pos = expect_magic(data, _MSG_MAGIC, offset)
        party, pos = decode_varint(data, pos)
        ell, pos = decode_varint(data, pos)
        flag, pos = take_bytes(data, pos, 1)
        if flag == b"\x01":
            n, pos = decode_varint(data, pos)
            raw, pos = take_bytes(data, pos, (n + 7) // 8)
            return cls(party, ell, True, x=BitString.from_bytes(raw, n)), pos
        if flag != b"\x00":
            raise ValueError("bad literal flag")
        blob, pos = CompressedBlob.parse(data, pos)
        return cls(party, ell, False, blob=blob), pos

    @classmethod
    def from_bytes(cls, data: bytes) -> "PartyMessage":
        msg, pos = cls.parse(data)
        if pos != len(data):
            raise ValueError("trailing bytes after message")
        return msg


def effective_rate(k: int, ell: int) -> int:
    """Adjusted per-party rate k + (ell-1)*SW_B_STEP, floored at 1."""
    return max(1, k + (ell - 1) * SW_B_STEP)


def sw_encode(
    x: BitString,
    party: int,
    k: int,
    ell: int,
    eps: Dyadic,
    fam,
    rng: RandomSource,
) -> PartyMessage:
    """Encode one party's string at adjusted rate, with private randomness.

    Parties never see each other: the interface takes no other-party input,
    so byte-identical (x, parameters, seed) yield byte-identical messages
    whatever the rest of the tuple does.
    """
    if k < 0:
        raise ValueError("rate must be non-negative")
    k_eff = effective_rate(k, ell)
    if k_eff >= x.n:
        return PartyMessage(party, ell, True, x=x)
    blob = compress(x, k_eff, sw_eps_internal(eps, ell), fam, rng)
    return PartyMessage(party, ell, False, blob=blob)


def sw_decode(
    msgs: list[PartyMessage], z: bytes, sys: DescriptionSystem
) -> list[BitString | None]:
    """Decode every party against the other parties' messages.

    Message order does not matter; exactly one message per party is required.
    Failures are reported per party (None), successes are returned alongside.
    """
    if not msgs:
        raise ValueError("no messages")
    ell = msgs[0].ell
    if any(m.ell != ell for m in msgs):
        raise ValueError("inconsistent party counts")
    by_party = {m.party: m for m in msgs}
    if len(by_party) != len(msgs) or set(by_party) != set(range(ell)):
        raise ValueError("need exactly one message per party")
    ordered = [by_party[i] for i in range(ell)]
    out: list[BitString | None] = []
    for i in range(ell):
        msg = ordered[i]
        if msg.literal:
            out.append(msg.x)
            continue
        others = [ordered[j].to_bytes() for j in range(ell) if j != i]
        out.append(decompress(msg.blob, canonical_tuple(*others, z), sys))
    return out


def tuple_bitstring(xs: list[BitString]) -> BitString:
    """Multi-string query value: the canonical tuple of the packed strings,
    read as one bit string. Singleton queries use the bare string instead."""
    data = canonical_tuple(*(x.to_bytes() for x in xs))
    return BitString.from_bytes(data)


def subset_condition(xs, others: tuple[int, ...], z: bytes) -> bytes:
    """Condition carrying the strings of `others` (ascending) plus z."""
    return canonical_tuple(*(xs[j].to_bytes() for j in sorted(others)), z)


def check_profile(
    xs: tuple[BitString, ...], profile: SwProfile, sys: DescriptionSystem
) -> dict[frozenset, bool | None]:
    """Per-subset rate check: for each non-empty S, whether the complexity of
    x_S given the complementary strings and z is within the summed rates.
    Unknown complexities yield None for that subset."""
    ell = profile.ell
    if ell > PROFILE_MAX_PARTIES:
        raise ValueError(f"profile check capped at {PROFILE_MAX_PARTIES} parties")
    if len(xs) != ell:
        raise ValueError("one string per party required")
    out: dict[frozenset, bool | None] = {}
    for size in range(1, ell + 1):
        for S in combinations(range(ell), size):
            others = tuple(j for j in range(ell) if j not in S)
            cond = subset_condition(xs, others, profile.z)
            query = xs[S[0]] if size == 1 else tuple_bitstring([xs[i] for i in S])
            c = sys.complexity(query, cond)
            budget = sum(profile.k[i] for i in S)
            out[frozenset(S)] = None if c is None else c <= budget
    return out


@dataclass(frozen=True)
class SourceSpec:
    """Correlation shape of the simulated sources."""

    kind: str  # identical | bitflip | independent
    t: int = 0

    def __post_init__(self):
        if self.kind not in ("identical", "bitflip", "independent"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "bitflip" and self.t < 0:
            raise ValueError("flip count must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "SourceSpec":
        if text.startswith("bitflip:"):
            return cls("bitflip", int(text.split(":", 1)[1]))
        return cls(text)

    def __str__(self) -> str:
        return f"bitflip:{self.t}" if self.kind == "bitflip" else self.kind


def flip_cost(n: int, t: int) -> int:
    """Modeled cost of naming t flipped positions: ceil(log2 C(n,t)) +
    ceil(log2 n)."""
    return ceil_log2_ratio(comb(n, t), 1) + ceil_log2_ratio(n, 1)


def flip2_cost(n: int, t: int) -> int:
    """Cost between two strings that each differ from a common base in t
    positions: up to 2t flips, any count."""
    total = sum(comb(n, m) for m in range(min(2 * t, n) + 1))
    return ceil_log2_ratio(total, 1) + ceil_log2_ratio(n, 1)


class CorrelationModel:
    """Assigned conditional complexities for a generated tuple.

    pair_cost(i, j) prices describing party i's string from party j's;
    cond_cost(S, T) prices a whole subset from another via a cheapest-anchor
    chain, with the first member paid in full when T is empty.
    """

    def __init__(self, spec: SourceSpec, ell: int, n: int):
        self.spec = spec
        self.ell = ell
        self.n = n

    def pair_cost(self, i: int, j: int) -> int:
        if self.spec.kind == "identical":
            return COPY_COST
        if self.spec.kind == "independent":
            return self.n
        if i == 0 or j == 0:
            return flip_cost(self.n, self.spec.t)
        return flip2_cost(self.n, self.spec.t)

    def cond_cost(self, S, T) -> int:
        S = sorted(set(S))
        known = set(T)
        if known & set(S):
            raise ValueError("S and T must be disjoint")
        total = 0
        for i in S:
            if known:
                total += min(self.pair_cost(i, j) for j in known)
            else:
                total += self.n
            known.add(i)
        return total


def gen_correlated(
    spec: SourceSpec,
    ell: int,
    n: int,
    rng: RandomSource,
    z: bytes = b"",
) -> tuple[tuple[BitString, ...], PlantedSystem]:
    """Generate a correlated tuple plus a planted system carrying the model's
    conditional complexities for every profile subset.

    Decode-time conditions depend on the actual messages, so those plants are
    added after encoding (see harness.plant_decode_conditions).
    """
    if ell < 1:
        raise ValueError("ell must be positive")
    if spec.kind == "bitflip" and spec.t > n:
        raise ValueError("flip count exceeds string length")
    base = rng.bitstring(n)
    xs: list[BitString] = [base]
    for _ in range(1, ell):
        if spec.kind == "identical":
            xs.append(base)
        elif spec.kind == "independent":
            xs.append(rng.bitstring(n))
        else:
            positions: set[int] = set()
            while len(positions) < spec.t:
                positions.add(rng.randbelow(n))
            noise = 0
            for pos in positions:
                noise |= 1 << (n - 1 - pos)
            xs.append(base ^ BitString.from_int(noise, n))
    model = CorrelationModel(spec, ell, n)
    system = PlantedSystem()
    for size in range(1, ell + 1):
        for S in combinations(range(ell), size):
            others = tuple(j for j in range(ell) if j not in S)
            cond = subset_condition(tuple(xs), others, z)
            query = xs[S[0]] if size == 1 else tuple_bitstring([xs[i] for i in S])
            system.plant(cond, query, model.cond_cost(S, others))
    return tuple(xs), system


def sw_message_bound(n: int, k: int, ell: int, eps: Dyadic) -> int:
    """Frozen envelope on one party's serialized message, in bits."""
    q = ceil_log2_div(n, eps)
    return k + SW_DELTA * ell * q * q + SW_H
