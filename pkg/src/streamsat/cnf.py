"""Propositional core types: literals, clauses, CNF formulas and assignments.

Variables are 1-based, as in DIMACS. Literals are stored as signed integers
inside clauses; :class:`Literal` is the readable view of one of them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

logger = logging.getLogger(__name__)


class CnfInputError(ValueError):
    """Raised when a clause, formula or assignment is malformed."""


@dataclass(frozen=True, order=True)
class Literal:
    variable: int
    positive: bool = True

    def __post_init__(self) -> None:
        if not isinstance(self.variable, int) or self.variable < 1:
            raise CnfInputError(f"variable index must be >= 1, got {self.variable!r}")

    def __neg__(self) -> "Literal":
        return Literal(self.variable, not self.positive)

    def to_int(self) -> int:
        return self.variable if self.positive else -self.variable

    @classmethod
    def from_int(cls, value: int) -> "Literal":
        if value == 0:
            raise CnfInputError("0 is not a literal")
        return cls(abs(value), value > 0)


@dataclass(frozen=True)
class Clause:
    """Disjunction of literals without repeats or complementary pairs."""

    lits: tuple[int, ...]

    def __post_init__(self) -> None:
        lits = tuple(self.lits)
        seen: set[int] = set()
        for lit in lits:
            if not isinstance(lit, int) or isinstance(lit, bool) or lit == 0:
                raise CnfInputError(f"invalid literal {lit!r}")
            if lit in seen:
                raise CnfInputError(f"repeated literal {lit} in clause {lits}")
            if -lit in seen:
                raise CnfInputError(f"complementary literals {abs(lit)} in clause {lits}")
            seen.add(lit)
        object.__setattr__(self, "lits", lits)

    @classmethod
    def of(cls, *lits: int) -> "Clause":
        return cls(tuple(lits))

    @property
    def literals(self) -> tuple[Literal, ...]:
        return tuple(Literal.from_int(lit) for lit in self.lits)

    @property
    def max_var(self) -> int:
        return max((abs(lit) for lit in self.lits), default=0)

    def is_empty(self) -> bool:
        return not self.lits

    def __len__(self) -> int:
        return len(self.lits)

    def __iter__(self) -> Iterator[int]:
        return iter(self.lits)


EMPTY_CLAUSE = Clause(())


def _default_names(input_vars: Sequence[int]) -> tuple[str, ...]:
    return tuple(f"x{pos}" for pos in range(1, len(input_vars) + 1))


@dataclass(frozen=True)
class Cnf:
    """Clause database with marked input and keystream variables.

    ``input_names`` runs parallel to ``input_vars`` and defaults to
    ``x1 .. xn``. ``keystream_vars[t-1]`` is the variable of output bit t.
    """

    num_vars: int
    clauses: tuple[Clause, ...] = ()
    input_vars: tuple[int, ...] = ()
    input_names: tuple[str, ...] = field(default=())
    keystream_vars: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        clauses = tuple(self.clauses)
        input_vars = tuple(self.input_vars)
        names = tuple(self.input_names) or _default_names(input_vars)
        keystream_vars = tuple(self.keystream_vars)
        if self.num_vars < 0:
            raise CnfInputError("num_vars must be non-negative")
        for clause in clauses:
            if clause.max_var > self.num_vars:
                raise CnfInputError(
                    f"clause {clause.lits} references a variable above num_vars={self.num_vars}"
                )
        for label, seq in (("input", input_vars), ("keystream", keystream_vars)):
            if len(set(seq)) != len(seq):
                raise CnfInputError(f"{label} variables must be distinct")
            for var in seq:
                if not 1 <= var <= self.num_vars:
                    raise CnfInputError(f"{label} variable {var} out of range")
        if len(names) != len(input_vars):
            raise CnfInputError("input_names must match input_vars")
        for name in names:
            # names end up as one token of a ``c input`` line
            if not name or any(ch.isspace() for ch in name):
                raise CnfInputError(f"input name {name!r} must be a non-empty token without whitespace")
        object.__setattr__(self, "clauses", clauses)
        object.__setattr__(self, "input_vars", input_vars)
        object.__setattr__(self, "input_names", names)
        object.__setattr__(self, "keystream_vars", keystream_vars)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def has_empty_clause(self) -> bool:
        return any(clause.is_empty() for clause in self.clauses)

    def occurring_vars(self) -> set[int]:
        return {abs(lit) for clause in self.clauses for lit in clause.lits}

    def with_clauses(self, extra: Iterable[Clause]) -> "Cnf":
        """Return a copy with ``extra`` appended, keeping all annotations."""
        return Cnf(
            num_vars=self.num_vars,
            clauses=self.clauses + tuple(extra),
            input_vars=self.input_vars,
            input_names=self.input_names,
            keystream_vars=self.keystream_vars,
        )

    def _replace_clauses(self, clauses: tuple[Clause, ...]) -> "Cnf":
        return Cnf(
            num_vars=self.num_vars,
            clauses=clauses,
            input_vars=self.input_vars,
            input_names=self.input_names,
            keystream_vars=self.keystream_vars,
        )


@dataclass(frozen=True, eq=True)
class PartialAssignment:
    """Variable bindings; each variable is bound at most once."""

    bindings: Mapping[int, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frozen: dict[int, bool] = {}
        for var, value in dict(self.bindings).items():
            if not isinstance(var, int) or var < 1:
                raise CnfInputError(f"invalid variable {var!r} in assignment")
            frozen[var] = bool(value)
        object.__setattr__(self, "bindings", MappingProxyType(frozen))

    def __hash__(self) -> int:
        return hash(frozenset(self.bindings.items()))

    def __reduce__(self) -> tuple:
        return (PartialAssignment, (dict(self.bindings),))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartialAssignment):
            return NotImplemented
        return dict(self.bindings) == dict(other.bindings)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, bool | int]]) -> "PartialAssignment":
        bindings: dict[int, bool] = {}
        for var, value in pairs:
            if var in bindings:
                raise CnfInputError(f"variable {var} bound twice")
            bindings[var] = bool(value)
        return cls(bindings)

    @classmethod
    def from_bits(cls, variables: Sequence[int], bits: Sequence[int]) -> "PartialAssignment":
        if len(variables) != len(bits):
            raise CnfInputError("variables and bits differ in length")
        return cls.from_pairs(zip(variables, bits))

    def extend(self, other: "PartialAssignment") -> "PartialAssignment":
        """Union of two assignments; conflicting or repeated bindings are rejected."""
        return PartialAssignment.from_pairs(
            list(self.bindings.items()) + list(other.bindings.items())
        )

    def restrict(self, variables: Iterable[int]) -> "PartialAssignment":
        return PartialAssignment({v: self.bindings[v] for v in variables if v in self.bindings})

    def bits(self, variables: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(self.bindings[v]) for v in variables)

    def lits(self) -> tuple[int, ...]:
        return tuple(v if value else -v for v, value in sorted(self.bindings.items()))

    def __contains__(self, var: object) -> bool:
        return var in self.bindings

    def __getitem__(self, var: int) -> bool:
        return self.bindings[var]

    def __len__(self) -> int:
        return len(self.bindings)

    def get(self, var: int) -> bool | None:
        return self.bindings.get(var)


def substitute(cnf: Cnf, pa: PartialAssignment) -> Cnf:
    """Return ``cnf`` simplified by the bindings of ``pa``.

    Satisfied clauses are dropped and falsified literals removed. If some
    clause becomes empty the result holds the single canonical empty clause.
    Variable numbering and annotations are kept.
    """
    bindings = pa.bindings
    for var in bindings:
        if var > cnf.num_vars:
            raise CnfInputError(f"bound variable {var} exceeds num_vars={cnf.num_vars}")
    if not bindings:
        return cnf

    kept: list[Clause] = []
    for clause in cnf.clauses:
        remaining: list[int] = []
        satisfied = False
        for lit in clause.lits:
            value = bindings.get(abs(lit))
            if value is None:
                remaining.append(lit)
            elif value == (lit > 0):
                satisfied = True
                break
        if satisfied:
            continue
        if not remaining:
            return cnf._replace_clauses((EMPTY_CLAUSE,))
        kept.append(clause if len(remaining) == len(clause.lits) else Clause(tuple(remaining)))
    return cnf._replace_clauses(tuple(kept))


def evaluate(cnf: Cnf, full: PartialAssignment) -> bool:
    """Return True iff ``full`` satisfies every clause of ``cnf``.

    Every variable occurring in a clause must be bound.
    """
    bindings = full.bindings
    result = True
    for clause in cnf.clauses:
        clause_true = False
        for lit in clause.literals:
            value = bindings.get(lit.variable)
            if value is None:
                raise CnfInputError(f"variable {lit.variable} is unbound")
            if value == lit.positive:
                clause_true = True
        if not clause_true:
            result = False
    return result
