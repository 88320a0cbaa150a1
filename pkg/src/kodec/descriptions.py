"""Candidate enumeration behind a length bound.

A DescriptionSystem stands in for conditional description complexity: given a
condition and a bound b it streams every string it considers describable in
fewer than b bits. Two implementations ship: PlantedSystem, a test oracle with
hand-assigned complexities, and ToyVM, a tiny stack machine whose programs are
bit strings, so "description length" is literal.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from typing import Iterator

from .bitcore import BitString
from .wire import split_canonical_tuple


class IntegrityError(RuntimeError):
    """A description system violated one of its structural invariants."""


class DescriptionSystem(ABC):
    @abstractmethod
    def candidates(self, z: bytes, bound: int, length: int) -> Iterator[BitString]:
        """Stream the distinct length-`length` strings with complexity < bound
        under condition z, in a deterministic order."""

    @abstractmethod
    def complexity(self, x: BitString, z: bytes) -> int | None:
        """Assigned or measured complexity of x given z; None when unknown."""


def enumerate_candidates(
    sys: DescriptionSystem, z: bytes, bound: int, length: int
) -> Iterator[BitString]:
    """Validated candidate stream: enforces the strict 2^bound count limit,
    distinctness, and the length contract while passing items through."""
    if bound < 0:
        raise ValueError("bound must be non-negative")
    if length < 1:
        raise ValueError("length must be positive")
    if bound == 0:
        return
    limit = 1 << bound
    seen: set[int] = set()
    for item in sys.candidates(z, bound, length):
        if item.n != length:
            raise IntegrityError(f"candidate of length {item.n}, expected {length}")
        if item.value in seen:
            raise IntegrityError("duplicate candidate in enumeration")
        seen.add(item.value)
        if len(seen) >= limit:
            raise IntegrityError(f"enumeration reached {limit} items for bound {bound}")
        yield item


class PlantedSystem(DescriptionSystem):
    """Oracle with explicitly assigned complexities.

    Strings are planted per condition in insertion order; enumeration returns
    exactly the planted strings whose assigned complexity is below the bound.
    """

    def __init__(self):
        self._table: dict[bytes, list[tuple[BitString, int]]] = {}

    def plant(self, z: bytes, x: BitString, complexity: int) -> None:
        """Assign a complexity; replanting the same value is a no-op, a
        conflicting value is an error (the oracle must stay single-valued)."""
        if complexity < 0:
            raise ValueError("complexity must be non-negative")
        row = self._table.setdefault(bytes(z), [])
        for s, c in row:
            if s == x:
                if c != complexity:
                    raise ValueError(
                        f"{x!r} already planted at {c}, refusing {complexity}"
                    )
                return
        row.append((x, complexity))

    def candidates(self, z: bytes, bound: int, length: int) -> Iterator[BitString]:
        for s, c in self._table.get(bytes(z), []):
            if c < bound and s.n == length:
                yield s

    def complexity(self, x: BitString, z: bytes) -> int | None:
        for s, c in self._table.get(bytes(z), []):
            if s == x:
                return c
        return None

    def conditions(self) -> list[bytes]:
        return list(self._table)

    def entries(self, z: bytes) -> list[tuple[BitString, int]]:
        return list(self._table.get(bytes(z), []))

    def to_config_lines(self) -> list[str]:
        """Flat key-value dump, one plant per index, loadable by from_config_lines."""
        lines = []
        i = 0
        for z, row in self._table.items():
            for s, c in row:
                lines.append(f"plant.{i}.cond = {z.hex()}")
                lines.append(f"plant.{i}.x = {s.to01()}")
                lines.append(f"plant.{i}.c = {c}")
                i += 1
        return lines

    @classmethod
    def from_config_lines(cls, lines: list[str]) -> "PlantedSystem":
        fields: dict[int, dict[str, str]] = {}
        for line in lines:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key.startswith("plant."):
                continue
            _, idx, name = key.split(".")
            fields.setdefault(int(idx), {})[name] = value
        out = cls()
        for idx in sorted(fields):
            entry = fields[idx]
            out.plant(
                bytes.fromhex(entry["cond"]),
                BitString(entry["x"]),
                int(entry["c"]),
            )
        return out


class VmOutcome(enum.Enum):
    """Non-producing results of a ToyVM run."""

    DIVERGED = "diverged"
    DECODE_ERROR = "decode-error"
    NO_OUTPUT = "no-output"


_OP_OUT = 0
_OP_COND = 1
_OP_LIT = 2
_OP_LOOP = 3

_STACK_LIMIT = 64


def _encode_gamma(value: int) -> str:
    """Elias gamma code for value >= 1."""
    if value < 1:
        raise ValueError("gamma codes start at 1")
    body = format(value, "b")
    return "0" * (len(body) - 1) + body


def _decode_gamma(bits: BitString, pos: int) -> tuple[int, int]:
    zeros = 0
    while pos < bits.n and bits[pos] == 0:
        zeros += 1
        pos += 1
    if pos + zeros + 1 > bits.n:
        raise ValueError("truncated gamma code")
    value = 0
    for _ in range(zeros + 1):
        value = (value << 1) | bits[pos]
        pos += 1
    return value, pos


def _decode_program(program: BitString) -> list[tuple[int, object]] | None:
    """Parse a program into instructions; None when the bits do not form a
    whole number of instructions. Each operand carries its own width, so the
    instruction stream is self-delimiting."""
    instrs: list[tuple[int, object]] = []
    pos = 0
    try:
        while pos < program.n:
            if pos + 2 > program.n:
                return None
            op = (program[pos] << 1) | program[pos + 1]
            pos += 2
            if op == _OP_COND:
                index, pos = _decode_gamma(program, pos)
                instrs.append((op, index))
            elif op == _OP_LIT:
                length_plus, pos = _decode_gamma(program, pos)
                length = length_plus - 1
                if pos + length > program.n:
                    return None
                value = 0
                for _ in range(length):
                    value = (value << 1) | program[pos]
                    pos += 1
                instrs.append((op, BitString.from_int(value, length)))
            else:
                instrs.append((op, None))
    except ValueError:
        return None
    return instrs


def _condition_components(z: bytes) -> list[bytes]:
    """Component view of a condition: index 1 is the whole byte string; when z
    parses exactly as a canonical tuple its components follow."""
    comps = [z]
    try:
        comps.extend(split_canonical_tuple(z))
    except ValueError:
        pass
    return comps


def toyvm_run(
    program: BitString, z: bytes, step_budget: int
) -> BitString | VmOutcome:
    """Run a ToyVM program against condition z.

    Returns the output string if an OUT executes within the budget,
    DECODE_ERROR for malformed programs, DIVERGED when the budget runs out,
    and NO_OUTPUT when execution halts without producing anything. Everything
    except a BitString counts as non-producing.
    """
    if step_budget < 0:
        raise ValueError("negative step budget")
    instrs = _decode_program(program)
    if instrs is None:
        return VmOutcome.DECODE_ERROR
    comps = _condition_components(z)
    stack: list[BitString] = []
    pc = 0
    steps = 0
    while pc < len(instrs):
        if steps >= step_budget:
            return VmOutcome.DIVERGED
        steps += 1
        op, arg = instrs[pc]
        pc += 1
        if op == _OP_OUT:
            if not stack:
                return VmOutcome.NO_OUTPUT
            return stack.pop()
        if op == _OP_COND:
            if not 1 <= arg <= len(comps):
                return VmOutcome.NO_OUTPUT
            data = comps[arg - 1]
            stack.append(BitString.from_bytes(data))
        elif op == _OP_LIT:
            stack.append(arg)
        else:  # _OP_LOOP
            pc = 0
        if len(stack) > _STACK_LIMIT:
            return VmOutcome.NO_OUTPUT
    return VmOutcome.NO_OUTPUT


def echo_condition_program(index: int = 1) -> BitString:
    """Program that outputs condition component `index` verbatim."""
    return BitString("01" + _encode_gamma(index) + "00")


def literal_program(x: BitString) -> BitString:
    """Program that outputs the literal string x."""
    return BitString("10" + _encode_gamma(x.n + 1) + x.to01() + "00")


def loop_program() -> BitString:
    """Program that never halts."""
    return BitString("11")


# Description length of the two-instruction echo program: measured once from
# the instruction encoding and relied on by copy-correlation scenarios.
COPY_PROGRAM_BITS = len(echo_condition_program())


class ToyVM(DescriptionSystem):
    """Resource-bounded description system over the ToyVM.

    complexity(x, z) is the length of the shortest program (at most
    max_program_len bits) that outputs x within step_budget steps, or None if
    no such program exists at that size. Enumeration runs every program of
    length below min(bound, max_program_len + 1), so it sees exactly the
    strings whose known complexity is below the bound.
    """

    def __init__(self, step_budget: int = 256, max_program_len: int = 12):
        if step_budget < 1 or max_program_len < 1:
            raise ValueError("budget and program length must be positive")
        self.step_budget = step_budget
        self.max_program_len = max_program_len

    def _run_all(self, z: bytes, max_len: int) -> Iterator[tuple[BitString, int]]:
        for length in range(1, max_len + 1):
            for code in range(1 << length):
                program = BitString.from_int(code, length)
                out = toyvm_run(program, z, self.step_budget)
                if isinstance(out, BitString):
                    yield out, length

    def candidates(self, z: bytes, bound: int, length: int) -> Iterator[BitString]:
        max_len = min(bound - 1, self.max_program_len)
        seen: set[BitString] = set()
        for out, _ in self._run_all(z, max_len):
            if out.n == length and out not in seen:
                seen.add(out)
                yield out

    def complexity(self, x: BitString, z: bytes) -> int | None:
        for out, length in self._run_all(z, self.max_program_len):
            if out == x:
                return length
        return None
