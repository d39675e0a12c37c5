"""Parsimonious CNF encodings of the keystream generators.

Each generator step is written as equations over fresh Tseitin variables.
Variables are numbered key bits first (``1..n``), then keystream bits
(``n+1..n+L``), then auxiliaries in allocation order.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import singledispatch
from typing import Any, Iterable, Sequence

from .cnf import Clause, Cnf, PartialAssignment
from .generators import (
    A51,
    A51Spec,
    Generator,
    GiffordSpec,
    LfsrSpec,
    SummationSpec,
    ThresholdSpec,
    int_to_bits,
)
from .solver import Conflict, propagate_only

logger = logging.getLogger(__name__)


class EncodingError(ValueError):
    """Raised for unusable encoding requests or keystreams."""


# -- gate clause groups -------------------------------------------------------
# Literals are signed variable indices; ``u`` may itself be negative.


def tseitin_and(u: int, a: int, b: int) -> tuple[Clause, ...]:
    return (Clause.of(-u, a), Clause.of(-u, b), Clause.of(u, -a, -b))


def tseitin_xor(u: int, inputs: Sequence[int]) -> tuple[Clause, ...]:
    """``u <-> inputs[0] ^ ... ^ inputs[-1]``, one clause per input valuation."""
    clauses = []
    for values in itertools.product((0, 1), repeat=len(inputs)):
        parity = sum(values) & 1
        head = u if parity else -u
        body = tuple(-lit if value else lit for lit, value in zip(inputs, values))
        clauses.append(Clause((head,) + body))
    return tuple(clauses)


def tseitin_threshold(u: int, inputs: Sequence[int], threshold: int) -> tuple[Clause, ...]:
    """``u <-> (at least threshold of inputs are true)``."""
    n = len(inputs)
    if not 1 <= threshold <= n:
        raise EncodingError(f"threshold {threshold} outside 1..{n}")
    clauses = [
        Clause((u,) + tuple(-lit for lit in subset))
        for subset in itertools.combinations(inputs, threshold)
    ]
    clauses.extend(
        Clause((-u,) + subset) for subset in itertools.combinations(inputs, n - threshold + 1)
    )
    return tuple(clauses)


def tseitin_majority(u: int, a: int, b: int, c: int) -> tuple[Clause, ...]:
    return tseitin_threshold(u, (a, b, c), 2)


def tseitin_mux(u: int, sel: int, t: int, f: int) -> tuple[Clause, ...]:
    """``u <-> (sel ? t : f)``; the last two clauses are redundant but help propagation."""
    return (
        Clause.of(-sel, -t, u),
        Clause.of(-sel, t, -u),
        Clause.of(sel, -f, u),
        Clause.of(sel, f, -u),
        Clause.of(-t, -f, u),
        Clause.of(t, f, -u),
    )


class GateBuilder:
    """Fresh-variable allocator and clause sink."""

    def __init__(self, reserved: int) -> None:
        self.num_vars = reserved
        self.reserved = reserved
        self.clauses: list[Clause] = []

    @property
    def aux_count(self) -> int:
        return self.num_vars - self.reserved

    def fresh(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def emit(self, group: Iterable[Clause]) -> None:
        self.clauses.extend(group)

    def and_(self, a: int, b: int) -> int:
        u = self.fresh()
        self.emit(tseitin_and(u, a, b))
        return u

    def xor(self, inputs: Sequence[int], out: int | None = None) -> int:
        """XOR chain built from two-input gates; ``out`` names the final variable."""
        if not inputs:
            raise EncodingError("xor of no inputs")
        if len(inputs) == 1:
            if out is None:
                return inputs[0]
            self.emit(tseitin_xor(out, inputs))
            return out
        acc = inputs[0]
        for pos, lit in enumerate(inputs[1:], start=2):
            target = out if (pos == len(inputs) and out is not None) else self.fresh()
            self.emit(tseitin_xor(target, (acc, lit)))
            acc = target
        return acc

    def xor3(self, a: int, b: int, c: int) -> int:
        u = self.fresh()
        self.emit(tseitin_xor(u, (a, b, c)))
        return u

    def majority(self, a: int, b: int, c: int) -> int:
        u = self.fresh()
        self.emit(tseitin_majority(u, a, b, c))
        return u

    def threshold(self, inputs: Sequence[int], threshold: int, out: int | None = None) -> int:
        u = self.fresh() if out is None else out
        self.emit(tseitin_threshold(u, inputs, threshold))
        return u

    def mux(self, sel: int, t: int, f: int) -> int:
        if t == f:
            return t
        u = self.fresh()
        self.emit(tseitin_mux(u, sel, t, f))
        return u

    def false(self) -> int:
        u = self.fresh()
        self.emit((Clause.of(-u),))
        return u

    def full_adder(self, a: int, b: int, c: int) -> tuple[int, int]:
        return self.xor3(a, b, c), self.majority(a, b, c)

    def half_adder(self, a: int, b: int) -> tuple[int, int]:
        return self.xor((a, b)), self.and_(a, b)

    def reduce_columns(self, columns: list[list[int]], width: int) -> list[int]:
        """Carry-save reduction of weighted bit columns to one bit per column.

        ``columns[j]`` holds bits of weight ``2**j``. Carries out of column
        ``width - 1`` are dropped. Empty columns become constant false.
        """
        columns = [list(col) for col in columns] + [[] for _ in range(width - len(columns))]
        result = []
        for j in range(width):
            col = columns[j]
            while len(col) > 1:
                if len(col) >= 3:
                    a, b, c = col.pop(0), col.pop(0), col.pop(0)
                    s, carry = self.full_adder(a, b, c)
                else:
                    a, b = col.pop(0), col.pop(0)
                    s, carry = self.half_adder(a, b)
                col.append(s)
                if j + 1 < width:
                    columns[j + 1].append(carry)
            result.append(col[0] if col else self.false())
        return result

    def shift(self, state: Sequence[int], spec: LfsrSpec) -> tuple[int, ...]:
        feedback = self.xor([state[tap - 1] for tap in sorted(spec.feedback_taps)])
        return (feedback,) + tuple(state[:-1])


@dataclass(frozen=True)
class Encoding:
    cnf: Cnf
    key_vars: tuple[int, ...]
    keystream_vars: tuple[int, ...]
    aux_count: int
    generator: Generator

    @property
    def key_length(self) -> int:
        return len(self.key_vars)


def _registers(key_vars: Sequence[int], lengths: Sequence[int]) -> list[tuple[int, ...]]:
    out = []
    offset = 0
    for length in lengths:
        out.append(tuple(key_vars[offset : offset + length]))
        offset += length
    return out


def _finish(
    builder: GateBuilder,
    generator: Generator,
    key_vars: tuple[int, ...],
    keystream_vars: tuple[int, ...],
) -> Encoding:
    cnf = Cnf(
        num_vars=builder.num_vars,
        clauses=tuple(builder.clauses),
        input_vars=key_vars,
        keystream_vars=keystream_vars,
    )
    logger.info(
        "Encoded %s: L=%d, %d vars (%d aux), %d clauses",
        generator.name,
        len(keystream_vars),
        cnf.num_vars,
        builder.aux_count,
        cnf.num_clauses,
    )
    return Encoding(cnf, key_vars, keystream_vars, builder.aux_count, generator)


def _start(generator: Generator, length: int) -> tuple[GateBuilder, tuple[int, ...], tuple[int, ...]]:
    if length < 1:
        raise EncodingError("keystream length must be >= 1")
    n = generator.key_length
    key_vars = tuple(range(1, n + 1))
    keystream_vars = tuple(range(n + 1, n + length + 1))
    return GateBuilder(n + length), key_vars, keystream_vars


def encode_a51(length: int, spec: A51Spec = A51) -> Encoding:
    """One majority/clocking/shift/output template per keystream bit."""
    builder, key_vars, keystream_vars = _start(spec, length)
    states = _registers(key_vars, spec.register_lengths)
    clock_idx = [cell - 1 for cell in spec.clocking_cells]
    for g in keystream_vars:
        bits = [state[idx] for state, idx in zip(states, clock_idx)]
        maj = builder.majority(*bits)
        new_states = []
        for state, reg, bit in zip(states, spec.registers, bits):
            # chi <-> not (bit xor maj): the register moves when it agrees with the majority
            chi = builder.fresh()
            builder.emit(tseitin_xor(-chi, (bit, maj)))
            shifted = builder.shift(state, reg)
            new_states.append(
                tuple(builder.mux(chi, moved, kept) for moved, kept in zip(shifted, state))
            )
        states = new_states
        builder.xor([state[-1] for state in states], out=g)
    return _finish(builder, spec, key_vars, keystream_vars)


def encode_threshold(spec: ThresholdSpec, length: int) -> Encoding:
    builder, key_vars, keystream_vars = _start(spec, length)
    states = _registers(key_vars, spec.register_lengths)
    for g in keystream_vars:
        states = [builder.shift(state, reg) for state, reg in zip(states, spec.registers)]
        builder.threshold([state[-1] for state in states], spec.threshold, out=g)
    return _finish(builder, spec, key_vars, keystream_vars)


def encode_summation(spec: SummationSpec, length: int) -> Encoding:
    builder, key_vars, keystream_vars = _start(spec, length)
    width = spec.carry_bits
    parts = _registers(key_vars, spec.register_lengths)
    carry = parts[0]  # MSB first
    states = parts[1:]
    r = len(spec.registers)
    for value in range(r, 1 << width):
        pattern = int_to_bits(value, width)
        builder.emit((Clause(tuple(-v if bit else v for v, bit in zip(carry, pattern))),))
    for g in keystream_vars:
        states = [builder.shift(state, reg) for state, reg in zip(states, spec.registers)]
        columns: list[list[int]] = [[state[-1] for state in states]]
        for j, bit in enumerate(reversed(carry)):
            while len(columns) <= j:
                columns.append([])
            columns[j].append(bit)
        total = builder.reduce_columns(columns, width + 1)
        builder.emit(tseitin_xor(g, (total[0],)))
        carry = tuple(reversed(total[1 : width + 1]))
    return _finish(builder, spec, key_vars, keystream_vars)


def encode_gifford(length: int, spec: GiffordSpec | None = None) -> Encoding:
    """``length`` is in bits and must be a multiple of 8."""
    spec = spec or GiffordSpec()
    if length % 8:
        raise EncodingError("Gifford keystream length must be a multiple of 8 bits")
    builder, key_vars, keystream_vars = _start(spec, length)
    cells = _registers(key_vars, spec.register_lengths)
    steps = length // 8
    for step in range(steps):
        low = _multiply_low16(builder, cells[0] + cells[2], cells[4] + cells[7])
        out_bits = [low[15 - k] for k in range(8)]
        for g, bit in zip(keystream_vars[8 * step : 8 * step + 8], out_bits):
            builder.emit(tseitin_xor(g, (bit,)))
        if step + 1 < steps:
            cells = [_gifford_feedback(builder, cells)] + cells[:7]
    return _finish(builder, spec, key_vars, keystream_vars)


def _multiply_low16(builder: GateBuilder, a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Bits 0..15 (LSB first) of the product of two MSB-first 16-bit operands."""
    a_lsb = list(reversed(a))
    b_lsb = list(reversed(b))
    columns: list[list[int]] = [[] for _ in range(16)]
    for i in range(16):
        for j in range(16 - i):
            columns[i + j].append(builder.and_(a_lsb[i], b_lsb[j]))
    return builder.reduce_columns(columns, 16)


def _gifford_feedback(builder: GateBuilder, cells: Sequence[tuple[int, ...]]) -> tuple[int, ...]:
    b1, b2, b8 = cells[0], cells[1], cells[7]
    head = []
    for k in range(8):
        terms = [b1[k], b2[max(k - 1, 0)]]
        if k < 7:
            terms.append(b8[k + 1])
        head.append(builder.xor(terms))
    return tuple(head)


@singledispatch
def encode(generator: Any, length: int) -> Encoding:
    """Encode ``length`` keystream bits of ``generator``."""
    raise EncodingError(f"unsupported generator {generator!r}")


@encode.register
def _(generator: A51Spec, length: int) -> Encoding:
    return encode_a51(length, generator)


@encode.register
def _(generator: ThresholdSpec, length: int) -> Encoding:
    return encode_threshold(generator, length)


@encode.register
def _(generator: SummationSpec, length: int) -> Encoding:
    return encode_summation(generator, length)


@encode.register
def _(generator: GiffordSpec, length: int) -> Encoding:
    return encode_gifford(length, generator)


def bind_keystream(enc: Encoding, bits: Sequence[int]) -> Cnf:
    """Fix the first ``len(bits)`` keystream variables with unit clauses."""
    if len(bits) > len(enc.keystream_vars):
        raise EncodingError(
            f"keystream has {len(bits)} bits, encoding covers {len(enc.keystream_vars)}"
        )
    units = [
        Clause.of(var if int(bit) else -var) for var, bit in zip(enc.keystream_vars, bits)
    ]
    if not units:
        return enc.cnf
    return enc.cnf.with_clauses(units)


def key_assignment(enc: Encoding, key: Sequence[int]) -> PartialAssignment:
    if len(key) != len(enc.key_vars):
        raise EncodingError(f"key has {len(key)} bits, encoding expects {len(enc.key_vars)}")
    return PartialAssignment.from_bits(enc.key_vars, key)


def honest_assignment(enc: Encoding, key: Sequence[int]) -> PartialAssignment:
    """Total assignment obtained from ``key`` by unit propagation alone."""
    result = propagate_only(enc.cnf, key_assignment(enc, key))
    if isinstance(result, Conflict):
        raise EncodingError("key contradicts the encoding")
    if len(result) != enc.cnf.num_vars:
        raise EncodingError(
            f"propagation left {enc.cnf.num_vars - len(result)} variables unassigned"
        )
    return result
