"""Trial runners for the verification suites.

Every trial is a pure function of (parameters, seed, trial index): stream ids
are allocated deterministically per trial, so a log row can be reproduced in
isolation and worker pools cannot change results.

Planted scenarios assign complexities from the generative model. The plant
for a decode condition exists only when the declared rate covers the model's
conditional cost for that party; a rate below the profile therefore leaves
the string outside the enumerable candidate set, which is the failure the
negative controls measure.
"""

from __future__ import annotations

from .bitcore import BitString, Dyadic, RandomSource
from .codec import CompressedBlob, compress, decode_condition, decompress, overhead_bound
from .descriptions import PlantedSystem, ToyVM
from .extractor import ExtractorFamily, build_family
from .sketch import bad_prime_fraction, parity_count, parity_encode, parity_matches
from .slepianwolf import (
    CorrelationModel,
    PartyMessage,
    SourceSpec,
    SwProfile,
    check_profile,
    effective_rate,
    subset_condition,
    sw_decode,
    sw_encode,
    sw_eps_internal,
    sw_message_bound,
)
from .wire import canonical_tuple

# Residual complexity assigned after conditioning on an extracted value:
# max(0, cost - rate) plus this slack.
PROP1_SLACK = 8

# Rate margin the positive scenarios add on top of the modeled costs.
RATE_MARGIN = 8

DEFAULT_DECOYS = 16

_STREAM_STRIDE = 16  # per-trial stream ids: trial * stride + role


def trial_stream(trial: int, role: int = 0) -> int:
    if role >= _STREAM_STRIDE:
        raise ValueError("role exceeds stream stride")
    return trial * _STREAM_STRIDE + role


def harness_family(n: int, eps: Dyadic, seed: int = 0) -> ExtractorFamily:
    """Hash family sized for scenario runs: built at the internal (halved)
    error and with the seed space capped so decoding stays desk-sized."""
    return build_family(n, eps.halved(), mode="hash", seed=seed, log_d_cap=10)


def _distinct_decoys(
    rng: RandomSource, n: int, count: int, avoid: set[BitString]
) -> list[BitString]:
    out: list[BitString] = []
    seen = set(avoid)
    while len(out) < count:
        cand = rng.bitstring(n)
        if cand not in seen:
            seen.add(cand)
            out.append(cand)
    return out


def plant_single_source(
    system: PlantedSystem,
    x: BitString,
    blob: CompressedBlob,
    z: bytes,
    model_cost: int,
    rng: RandomSource,
    decoys: int = DEFAULT_DECOYS,
) -> None:
    """Plant the decode condition for one compressed string.

    Decoys go in first so a residue collision really can return the wrong
    string; x itself is planted only when its rate covered the modeled cost.
    """
    w = decode_condition(blob.fvalue, z)
    residual = max(0, model_cost - blob.k) + PROP1_SLACK
    bound = blob.fp.b
    for decoy in _distinct_decoys(rng, x.n, decoys, {x}):
        system.plant(w, decoy, min(PROP1_SLACK, bound - 1))
    if residual < bound and blob.k >= model_cost:
        system.plant(w, x, residual)


def roundtrip_trial(
    n: int,
    k: int,
    eps: Dyadic,
    fam: ExtractorFamily,
    seed: int,
    trial: int,
    system_kind: str = "planted",
    decoys: int = DEFAULT_DECOYS,
) -> dict:
    """One compress/decompress round trip; returns the log row.

    The planted scenario assigns x the conditional cost k, the tightest value
    for which the rate promise still holds.
    """
    rng = RandomSource(seed, trial_stream(trial))
    x = rng.bitstring(n)
    before = rng.bits_consumed
    blob = compress(x, k, eps, fam, rng)
    rand_bits = rng.bits_consumed - before
    if system_kind == "planted":
        z = b""
        system: PlantedSystem | ToyVM = PlantedSystem()
        plant_single_source(system, x, blob, z, k, rng, decoys)
    elif system_kind == "toyvm":
        if n % 8:
            raise ValueError("toyvm scenarios need byte-aligned n")
        z = x.to_bytes()
        system = ToyVM(step_budget=512, max_program_len=12)
    else:
        raise ValueError(f"unknown system {system_kind!r}")
    result = decompress(blob, z, system)
    return {
        "trial": trial,
        "success": int(result == x),
        "blob_bits": blob.bit_length(),
        "bound_bits": overhead_bound(n, k, eps),
        "rand_bits": rand_bits,
    }


def scenario_rates(model: CorrelationModel, margin: int = RATE_MARGIN) -> list[int]:
    """Per-party rates that satisfy every subset of the model with margin."""
    ell = model.ell
    rates = [
        model.cond_cost((i,), tuple(j for j in range(ell) if j != i)) + margin
        for i in range(ell)
    ]
    from itertools import combinations

    changed = True
    while changed:
        changed = False
        for size in range(1, ell + 1):
            for S in combinations(range(ell), size):
                others = tuple(j for j in range(ell) if j not in S)
                need = model.cond_cost(S, others) + margin
                have = sum(rates[i] for i in S)
                if have < need:
                    rates[S[0]] += need - have
                    changed = True
    return rates


def plant_decode_conditions(
    system: PlantedSystem,
    xs: tuple[BitString, ...],
    msgs: list[PartyMessage],
    rates: list[int],
    model: CorrelationModel,
    z: bytes,
    rng: RandomSource,
    decoys: int = DEFAULT_DECOYS,
) -> None:
    """Materialize the per-party decode conditions for the joint decoder."""
    ell = len(msgs)
    ordered = sorted(msgs, key=lambda m: m.party)
    for i in range(ell):
        msg = ordered[i]
        if msg.literal:
            continue
        others = [ordered[j].to_bytes() for j in range(ell) if j != i]
        w_base = canonical_tuple(*others, z)
        w = decode_condition(msg.blob.fvalue, w_base)
        complement = tuple(j for j in range(ell) if j != i)
        cost = model.cond_cost((i,), complement)
        residual = max(0, cost - msg.blob.k) + PROP1_SLACK
        bound = msg.blob.fp.b
        for decoy in _distinct_decoys(rng, xs[i].n, decoys, {xs[i]}):
            system.plant(w, decoy, min(PROP1_SLACK, bound - 1))
        if residual < bound and rates[i] >= cost:
            system.plant(w, xs[i], residual)


def sw_trial(
    spec: SourceSpec,
    ell: int,
    n: int,
    eps: Dyadic,
    fam: ExtractorFamily,
    seed: int,
    trial: int,
    force_zero_party: int | None = None,
    decoys: int = DEFAULT_DECOYS,
) -> dict:
    """One full multi-party round: generate, encode, plant, decode."""
    from .slepianwolf import gen_correlated

    gen_rng = RandomSource(seed, trial_stream(trial, 0))
    z = b""
    xs, system = gen_correlated(spec, ell, n, gen_rng, z)
    model = CorrelationModel(spec, ell, n)
    rates = scenario_rates(model)
    if force_zero_party is not None:
        rates[force_zero_party] = 0
    profile = SwProfile(ell, tuple(rates), n, eps, z)
    verdicts = check_profile(xs, profile, system)
    profile_ok = all(v is True for v in verdicts.values())
    msgs = [
        sw_encode(
            xs[i], i, rates[i], ell, eps, fam,
            RandomSource(seed, trial_stream(trial, 1 + i)),
        )
        for i in range(ell)
    ]
    plant_decode_conditions(system, xs, msgs, rates, model, z, gen_rng, decoys)
    decoded = sw_decode(msgs, z, system)
    per_party = [int(decoded[i] == xs[i]) for i in range(ell)]
    return {
        "trial": trial,
        "success": int(all(per_party)),
        "per_party": "".join(str(b) for b in per_party),
        "profile_ok": int(profile_ok),
        "msg_bits": ",".join(str(m.bit_length()) for m in msgs),
        "bound_bits": ",".join(
            str(sw_message_bound(n, rates[i], ell, eps)) for i in range(ell)
        ),
        "literal": "".join("1" if m.literal else "0" for m in msgs),
    }


def reduced_profile_trial(
    spec: SourceSpec,
    ell: int,
    n: int,
    eps: Dyadic,
    fam: ExtractorFamily,
    seed: int,
    trial: int,
) -> bool:
    """Induction-step surrogate: after conditioning on the last party's
    message, the remaining parties' profile with budgets k_i + SW_B_STEP must
    still pass."""
    from itertools import combinations

    from .slepianwolf import SW_B_STEP, gen_correlated

    if ell < 2:
        raise ValueError("needs at least two parties")
    gen_rng = RandomSource(seed, trial_stream(trial, 0))
    z = b""
    xs, _ = gen_correlated(spec, ell, n, gen_rng, z)
    model = CorrelationModel(spec, ell, n)
    rates = scenario_rates(model)
    last = ell - 1
    msg = sw_encode(
        xs[last], last, rates[last], ell, eps, fam,
        RandomSource(seed, trial_stream(trial, 1 + last)),
    )
    z_reduced = canonical_tuple(msg.to_bytes(), z)
    reduced_xs = xs[:last]
    system = PlantedSystem()
    from .slepianwolf import tuple_bitstring

    for size in range(1, last + 1):
        for S in combinations(range(last), size):
            others = tuple(j for j in range(last) if j not in S)
            cond = subset_condition(reduced_xs, others, z_reduced)
            query = (
                reduced_xs[S[0]] if size == 1
                else tuple_bitstring([reduced_xs[i] for i in S])
            )
            if rates[last] >= model.cond_cost((last,), others):
                cost = model.cond_cost(S, others + (last,)) + PROP1_SLACK
            else:
                cost = model.cond_cost(S, others)
            system.plant(cond, query, cost)
    budgets = tuple(rates[i] + SW_B_STEP for i in range(last))
    reduced = SwProfile(last, budgets, n, eps, z_reduced)
    verdicts = check_profile(reduced_xs, reduced, system)
    return all(v is True for v in verdicts.values())


def prime_claim_trial(
    n: int, s: int, eps: Dyadic, primes: list[int], seed: int, trial: int
) -> dict:
    """One exhaustive bad-prime-fraction measurement over a random instance."""
    rng = RandomSource(seed, trial_stream(trial))
    x = rng.bitstring(n)
    cands = _distinct_decoys(rng, n, s, {x})
    frac = bad_prime_fraction(x, cands, primes)
    return {
        "trial": trial,
        "success": int(frac <= eps.fraction),
        "bad_count": int(frac * len(primes)),
        "prime_count": len(primes),
    }


def parity_sketch_params(n: int, ell_bits: int) -> tuple[int, Dyadic]:
    """(k, eps) pair giving exactly ell_bits parity bits for length n."""
    eps = Dyadic(1, 0)
    base = parity_count(n, 0, eps)
    if ell_bits < base:
        raise ValueError(f"need at least {base} parity bits at this length")
    return ell_bits - base, eps


def parity_collision_trial(
    x: BitString, y: BitString, ell_bits: int, seed: int, trial: int
) -> dict:
    """Sketch x, test whether y matches every parity."""
    k, eps = parity_sketch_params(x.n, ell_bits)
    rng = RandomSource(seed, trial_stream(trial))
    sk = parity_encode(x, k, eps, rng)
    return {"trial": trial, "success": int(parity_matches(sk, y))}


def random_subset(rng: RandomSource, universe: int) -> list[int]:
    """Non-empty uniform subset of range(universe)."""
    while True:
        mask = rng.getrandbits(universe)
        if mask:
            return [i for i in range(universe) if (mask >> i) & 1]
