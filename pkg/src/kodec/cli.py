"""Command-line driver: suite execution, run logs, and statistics.

Logs are line-delimited and deterministic: identical configs (same seed)
produce byte-identical files, which the determinism checks rely on. Wall
clock time is therefore kept out of the file unless --stamp is passed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from fractions import Fraction

from .bitcore import Dyadic, RandomSource, ceil_log2_div, first_primes
from .codec import RAND_GAMMA, overhead_bound
from .extractor import (
    FamilySearchError,
    certify_random_table,
    check_poor_bound,
    poor_elements,
)
from .harness import (
    harness_family,
    parity_collision_trial,
    parity_sketch_params,
    prime_claim_trial,
    random_subset,
    roundtrip_trial,
    sw_trial,
    trial_stream,
)
from .sketch import parity_count
from .slepianwolf import SourceSpec, sw_eps_internal

LOG_HEADER = "# kodec-log v1"
SETUP_STREAM = 1 << 62  # stream id reserved for per-run setup draws

SUITES = (
    "compress-roundtrip",
    "sw",
    "prime-claim",
    "extractor-certify",
    "lemma3",
    "parity",
)

_INT_FIELDS = {
    "n", "k", "eps_num", "eps_log_den", "parties", "trials", "seed",
    "threads", "N", "D", "M",
}


@dataclass
class RunConfig:
    """Parameters of one suite run; round-trips through flat key = value text."""

    suite: str
    n: int = 16
    k: int = 8
    eps_num: int = 1
    eps_log_den: int = 3
    parties: int = 2
    trials: int = 100
    seed: int = 0
    scenario: str = "identical"
    system: str = "planted"
    out: str = ""
    threads: int = 0
    N: int = 16
    D: int = 4
    M: int = 4
    stamp: bool = False

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}")
        for name in ("n", "k", "trials", "seed", "parties", "N", "D", "M"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        Dyadic(self.eps_num, self.eps_log_den)  # validates range
        if self.system not in ("planted", "toyvm"):
            raise ValueError(f"unknown system {self.system!r}")
        SourceSpec.parse(self.scenario)  # validates shape

    @property
    def eps(self) -> Dyadic:
        return Dyadic(self.eps_num, self.eps_log_den)

    def to_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if f.name == "stamp":
                value = int(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values: dict = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad config line: {raw!r}")
            key = key.strip()
            value = value.strip()
            if key in _INT_FIELDS:
                values[key] = int(value)
            elif key == "stamp":
                values[key] = bool(int(value))
            else:
                values[key] = value
        return cls(**values)


@dataclass
class RunRecord:
    """In-memory result of one run; the log file is its deterministic image."""

    config: RunConfig
    columns: list[str]
    rows: list[dict]
    aggregates: dict
    failures: list[str]
    notes: list[str]
    timestamp: float

    @property
    def passed(self) -> bool:
        return not self.failures


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


# Execution details that cannot change results; kept out of the log so that
# identical experiments give byte-identical files whatever ran them.
_NON_RESULT_FIELDS = ("out", "threads", "stamp")


def render_log(record: RunRecord) -> str:
    lines = [LOG_HEADER, f"# suite {record.config.suite}"]
    if record.config.stamp:
        lines.append(f"# timestamp {record.timestamp:.3f}")
    for line in record.config.to_text().strip().splitlines():
        if line.split(" = ")[0] in _NON_RESULT_FIELDS:
            continue
        lines.append(f"# config {line}")
    for note in record.notes:
        lines.append(f"# note {note}")
    lines.append("\t".join(record.columns))
    for row in record.rows:
        lines.append("\t".join(_fmt(row[c]) for c in record.columns))
    for key in sorted(record.aggregates):
        lines.append(f"# agg {key} {_fmt(record.aggregates[key])}")
    for failure in record.failures:
        lines.append(f"# fail {failure}")
    return "\n".join(lines) + "\n"


def parse_log(text: str) -> tuple[str, list[str], list[dict], dict]:
    """Returns (suite, columns, rows, aggregates) from a log file."""
    suite = ""
    columns: list[str] = []
    rows: list[dict] = []
    aggregates: dict = {}
    lines = text.splitlines()
    if not lines or lines[0] != LOG_HEADER:
        raise ValueError("not a kodec log")
    for line in lines[1:]:
        if line.startswith("# suite "):
            suite = line[len("# suite "):]
        elif line.startswith("# agg "):
            _, _, rest = line.partition("# agg ")
            key, _, value = rest.partition(" ")
            aggregates[key] = value
        elif line.startswith("#") or not line.strip():
            continue
        elif not columns:
            columns = line.split("\t")
        else:
            parts = line.split("\t")
            if len(parts) != len(columns):
                raise ValueError("row width disagrees with header")
            rows.append(dict(zip(columns, parts)))
    return suite, columns, rows, aggregates


def _aggregate(columns: list[str], rows: list[dict]) -> dict:
    agg: dict = {"trials": len(rows)}
    if not rows:
        return agg
    if "success" in columns:
        successes = sum(int(r["success"]) for r in rows)
        agg["successes"] = successes
        agg["success_rate"] = successes / len(rows)
    for col in columns:
        if col in ("trial", "success") or not isinstance(rows[0][col], int):
            continue
        values = [int(r[col]) for r in rows]
        agg[f"mean_{col}"] = sum(values) / len(values)
        agg[f"max_{col}"] = max(values)
    return agg


def _binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials) if trials else 0.0


# --- per-suite trial dispatch -------------------------------------------------

_WORKER: dict = {}


def _family_for(config: RunConfig):
    eps = config.eps
    if config.suite == "sw":
        eps = sw_eps_internal(eps, config.parties)
    return harness_family(config.n, eps, seed=config.seed)


def _suite_columns(config: RunConfig) -> list[str]:
    if config.suite == "compress-roundtrip":
        return ["trial", "success", "blob_bits", "bound_bits", "rand_bits"]
    if config.suite == "sw":
        return [
            "trial", "success", "per_party", "profile_ok",
            "msg_bits", "bound_bits", "literal",
        ]
    if config.suite == "prime-claim":
        return ["trial", "success", "bad_count", "prime_count"]
    if config.suite == "extractor-certify":
        return ["trial", "success", "attempts", "sets_checked"]
    if config.suite == "lemma3":
        return ["trial", "success", "poor_count", "bound"]
    if config.suite == "parity":
        return ["trial", "success"]
    raise ValueError(config.suite)


def _setup_for(config: RunConfig) -> dict:
    """Per-run shared objects, all derived deterministically from the config."""
    setup: dict = {}
    if config.suite in ("compress-roundtrip", "sw"):
        setup["fam"] = _family_for(config)
    elif config.suite == "prime-claim":
        eps = config.eps
        count = -(-config.k * config.n * (1 << eps.log_den) // eps.num)
        setup["primes"] = first_primes(count)
    elif config.suite == "lemma3":
        table, attempts, _ = certify_random_table(
            config.N, config.D, config.M, config.k, config.eps, config.seed
        )
        setup["table"] = table
        setup["attempts"] = attempts
    elif config.suite == "parity":
        rng = RandomSource(config.seed, SETUP_STREAM)
        x = rng.bitstring(config.n)
        while True:
            y = rng.bitstring(config.n)
            if y != x:
                break
        setup["x"] = x
        setup["y"] = y
        setup["ell_bits"] = parity_count(config.n, config.k, config.eps)
    return setup


def _run_trial(config: RunConfig, setup: dict, trial: int) -> dict:
    if config.suite == "compress-roundtrip":
        return roundtrip_trial(
            config.n, config.k, config.eps, setup["fam"], config.seed, trial,
            system_kind=config.system,
        )
    if config.suite == "sw":
        return sw_trial(
            SourceSpec.parse(config.scenario), config.parties, config.n,
            config.eps, setup["fam"], config.seed, trial,
        )
    if config.suite == "prime-claim":
        return prime_claim_trial(
            config.n, config.k, config.eps, setup["primes"], config.seed, trial
        )
    if config.suite == "extractor-certify":
        try:
            _, attempts, check = certify_random_table(
                config.N, config.D, config.M, config.k, config.eps,
                config.seed + trial,
            )
            return {
                "trial": trial, "success": 1,
                "attempts": attempts, "sets_checked": check.sets_checked,
            }
        except FamilySearchError:
            return {"trial": trial, "success": 0, "attempts": -1, "sets_checked": 0}
    if config.suite == "lemma3":
        rng = RandomSource(config.seed, trial_stream(trial, 2))
        S = random_subset(rng, config.N)
        poor = len(poor_elements(setup["table"], S, config.eps))
        bound = 1 << config.k
        return {
            "trial": trial, "success": int(poor < bound),
            "poor_count": poor, "bound": bound,
        }
    if config.suite == "parity":
        return parity_collision_trial(
            setup["x"], setup["y"], setup["ell_bits"], config.seed, trial
        )
    raise ValueError(config.suite)


def _worker_init(config_text: str) -> None:
    config = RunConfig.from_text(config_text)
    _WORKER["config"] = config
    _WORKER["setup"] = _setup_for(config)


def _worker_trial(trial: int) -> dict:
    return _run_trial(_WORKER["config"], _WORKER["setup"], trial)


def resolve_threads(config: RunConfig) -> int:
    if config.threads > 0:
        return config.threads
    env = os.environ.get("KODEC_THREADS", "")
    if env.strip():
        value = int(env)
        if value < 1:
            raise ValueError("KODEC_THREADS must be positive")
        return value
    return os.cpu_count() or 1


def _check_assertions(config: RunConfig, setup: dict, rows: list[dict],
                      aggregates: dict) -> tuple[list[str], list[str]]:
    failures: list[str] = []
    notes: list[str] = []
    eps = config.eps
    trials = len(rows)
    if config.suite == "compress-roundtrip":
        p0 = (1.0 - float(eps) / 2.0) ** 2
        threshold = p0 - 3.0 * _binomial_sigma(p0, trials)
        notes.append(f"success threshold {threshold:.6f}")
        if trials and aggregates["success_rate"] < threshold:
            failures.append(
                f"roundtrip success {aggregates['success_rate']:.6f} "
                f"below {threshold:.6f}"
            )
        over = [r["trial"] for r in rows if r["blob_bits"] > r["bound_bits"]]
        if over:
            failures.append(f"blob over length bound in trials {over[:5]}")
        q = ceil_log2_div(config.n, eps)
        budget = RAND_GAMMA * q * q
        hungry = [r["trial"] for r in rows if r["rand_bits"] > budget]
        if hungry:
            failures.append(f"random-bit budget {budget} exceeded in {hungry[:5]}")
    elif config.suite == "sw":
        p0 = 1.0 - float(eps)
        threshold = p0 - 3.0 * _binomial_sigma(p0, trials)
        notes.append(f"success threshold {threshold:.6f}")
        if trials and all(int(r["profile_ok"]) for r in rows):
            if aggregates["success_rate"] < threshold:
                failures.append(
                    f"sw success {aggregates['success_rate']:.6f} "
                    f"below {threshold:.6f}"
                )
        bad_len = [
            r["trial"] for r in rows
            if any(
                int(m) > int(b)
                for m, b in zip(r["msg_bits"].split(","), r["bound_bits"].split(","))
            )
        ]
        if bad_len:
            failures.append(f"message over length bound in trials {bad_len[:5]}")
    elif config.suite in ("prime-claim", "lemma3", "extractor-certify"):
        bad = [r["trial"] for r in rows if not int(r["success"])]
        if bad:
            failures.append(f"{config.suite} failed in trials {bad[:5]}")
    elif config.suite == "parity":
        ell = setup["ell_bits"]
        p0 = 2.0 ** -ell
        sigma = _binomial_sigma(p0, trials)
        notes.append(f"collision target {p0:.8f} sigma {sigma:.8f}")
        if trials:
            rate = aggregates["success_rate"]
            if abs(rate - p0) > 3.0 * sigma:
                failures.append(
                    f"collision rate {rate:.8f} outside 3 sigma of {p0:.8f}"
                )
    return failures, notes


def run(config: RunConfig) -> RunRecord:
    """Execute a suite and return its record; pure given the config."""
    setup = _setup_for(config)
    columns = _suite_columns(config)
    threads = resolve_threads(config)
    trials = list(range(config.trials))
    if threads > 1 and config.trials > 1:
        chunk = max(1, config.trials // (8 * threads))
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_worker_init,
            initargs=(config.to_text(),),
        ) as pool:
            rows = list(pool.map(_worker_trial, trials, chunksize=chunk))
    else:
        rows = [_run_trial(config, setup, t) for t in trials]
    aggregates = _aggregate(columns, rows)
    failures, notes = _check_assertions(config, setup, rows, aggregates)
    if config.suite == "lemma3":
        notes.append(f"table certified after {setup['attempts']} attempts")
        notes.append(f"table {setup['table'].to_bytes().hex()}")
    record = RunRecord(config, columns, rows, aggregates, failures, notes, time.time())
    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            fh.write(render_log(record))
    return record


# --- stats and verification ---------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = 3.0) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _percentile(sorted_values: list[int], q: float) -> int:
    if not sorted_values:
        return 0
    idx = min(len(sorted_values) - 1, int(math.ceil(q * len(sorted_values))) - 1)
    return sorted_values[max(0, idx)]


def stats_summary(logs: list[str]) -> dict:
    """Aggregate statistics over homogeneous run logs."""
    suites = set()
    total_trials = 0
    total_successes = 0
    lengths: list[int] = []
    for text in logs:
        suite, columns, rows, _ = parse_log(text)
        suites.add(suite)
        if len(suites) > 1:
            raise ValueError(f"mixed suites in stats input: {sorted(suites)}")
        total_trials += len(rows)
        total_successes += sum(int(r["success"]) for r in rows if "success" in r)
        for r in rows:
            if "blob_bits" in r:
                lengths.append(int(r["blob_bits"]))
            elif "msg_bits" in r:
                lengths.extend(int(v) for v in r["msg_bits"].split(","))
    lengths.sort()
    rate = total_successes / total_trials if total_trials else 0.0
    low, high = wilson_interval(total_successes, total_trials)
    out = {
        "suite": next(iter(suites)) if suites else "",
        "records": len(logs),
        "trials": total_trials,
        "successes": total_successes,
        "success_rate": rate,
        "wilson_low": low,
        "wilson_high": high,
    }
    if lengths:
        out["len_p50"] = _percentile(lengths, 0.50)
        out["len_p90"] = _percentile(lengths, 0.90)
        out["len_max"] = lengths[-1]
    return out


# Row columns that hold strings (flag vectors, comma lists), per suite; every
# other column is an integer. Needed so a re-parsed log aggregates exactly as
# the original in-memory rows did.
_SUITE_STRING_COLS = {
    "sw": {"per_party", "msg_bits", "bound_bits", "literal"},
}


def verify_log(text: str) -> list[str]:
    """Recompute aggregates from rows; returns discrepancies (empty = clean)."""
    suite, columns, raw_rows, logged = parse_log(text)
    string_cols = _SUITE_STRING_COLS.get(suite, set())
    rows = []
    for raw in raw_rows:
        row = {}
        for col, value in raw.items():
            row[col] = value if col in string_cols else int(value)
        rows.append(row)
    recomputed = _aggregate(columns, rows)
    problems = []
    for key, value in recomputed.items():
        want = _fmt(value)
        got = logged.get(key)
        if got != want:
            problems.append(f"aggregate {key}: logged {got!r}, recomputed {want!r}")
    for key in logged:
        if key not in recomputed:
            problems.append(f"aggregate {key}: not recomputable from rows")
    return problems


# --- argument parsing ----------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=16, help="string length in bits")
    p.add_argument("--k", type=int, default=8,
                   help="rate bits (candidate count for prime-claim)")
    p.add_argument("--eps-num", type=int, default=1, dest="eps_num")
    p.add_argument("--eps-log-den", type=int, default=3, dest="eps_log_den")
    p.add_argument("--parties", type=int, default=2)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", default="identical",
                   help="identical, bitflip:<t>, or independent")
    p.add_argument("--system", default="planted", choices=["planted", "toyvm"])
    p.add_argument("--out", default="", help="write the run log here")
    p.add_argument("--threads", type=int, default=0,
                   help="worker pool size (default: KODEC_THREADS or cpu count)")
    p.add_argument("--stamp", action="store_true",
                   help="include a wall-clock timestamp comment in the log")
    p.add_argument("--N", type=int, default=16, help="table source size")
    p.add_argument("--D", type=int, default=4, help="table seed count")
    p.add_argument("--M", type=int, default=4, help="table output size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kodec",
        description="verification suites for fingerprint compression and "
                    "distributed coding",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for suite in SUITES:
        p = sub.add_parser(suite)
        _add_common(p)
    p_stats = sub.add_parser("stats")
    p_stats.add_argument("logs", nargs="+")
    p_stats.add_argument("--json", action="store_true")
    p_verify = sub.add_parser("verify-log")
    p_verify.add_argument("logs", nargs="+")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        suite=args.command,
        n=args.n, k=args.k,
        eps_num=args.eps_num, eps_log_den=args.eps_log_den,
        parties=args.parties, trials=args.trials, seed=args.seed,
        scenario=args.scenario, system=args.system, out=args.out,
        threads=args.threads, N=args.N, D=args.D, M=args.M,
        stamp=args.stamp,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "stats":
            logs = [open(path, encoding="utf-8").read() for path in args.logs]
            summary = stats_summary(logs)
            if args.json:
                import json

                print(json.dumps(summary, sort_keys=True))
            else:
                for key in sorted(summary):
                    print(f"{key}\t{_fmt(summary[key])}")
            return 0
        if args.command == "verify-log":
            bad = False
            for path in args.logs:
                problems = verify_log(open(path, encoding="utf-8").read())
                for problem in problems:
                    print(f"FAIL {path}: {problem}")
                    bad = True
                if not problems:
                    print(f"PASS {path}: aggregates match rows")
            return 1 if bad else 0
        config = config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    record = run(config)
    for note in record.notes:
        if not note.startswith("table "):
            print(f"note: {note}")
    for key in sorted(record.aggregates):
        print(f"{key}\t{_fmt(record.aggregates[key])}")
    for failure in record.failures:
        print(f"FAIL {failure}")
    if record.passed:
        print(f"PASS {config.suite}")
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
