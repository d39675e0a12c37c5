"""DIMACS CNF reading and writing with input/keystream annotations."""
from __future__ import annotations

import logging
from pathlib import Path

from .cnf import Clause, Cnf, CnfInputError

logger = logging.getLogger(__name__)


class DimacsParseError(ValueError):
    """Malformed DIMACS text; ``line`` is 1-based."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


def _parse_int(token: str, lineno: int) -> int:
    if not token.isascii():
        raise DimacsParseError(lineno, f"expected an integer, got {token!r}")
    try:
        return int(token)
    except ValueError:
        raise DimacsParseError(lineno, f"expected an integer, got {token!r}") from None


def _lines(text: bytes | str) -> list[str]:
    """Split into lines; comments are UTF-8, everything else must be ASCII."""
    if isinstance(text, str):
        return text.splitlines()
    lines: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.lstrip().startswith(b"c"):
            lines.append(raw.decode("utf-8", errors="replace"))
            continue
        try:
            lines.append(raw.decode("ascii"))
        except UnicodeDecodeError:
            raise DimacsParseError(lineno, "non-ASCII byte outside a comment") from None
    return lines


def _annotation(parts: list[str], lineno: int) -> None:
    if len(parts) != 4:
        raise DimacsParseError(lineno, f"malformed 'c {parts[1]}' annotation: expected name and variable")


def parse_dimacs(text: bytes | str) -> Cnf:
    """Parse DIMACS CNF text.

    ``c input <name> <var>`` comments mark input variables (in order) and
    ``c keystream <t> <var>`` comments mark keystream variables. Clauses may
    span several lines. Comments may hold UTF-8; a malformed annotation is
    an error rather than a plain comment.
    """
    lines = _lines(text)

    header: tuple[int, int] | None = None
    input_vars: list[int] = []
    input_names: list[str] = []
    keystream: dict[int, int] = {}
    clauses: list[Clause] = []
    pending: list[int] = []
    pending_line = 0

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            parts = line.split()
            kind = parts[1] if len(parts) > 1 and parts[0] == "c" else None
            if kind == "input":
                _annotation(parts, lineno)
                input_names.append(parts[2])
                input_vars.append(_parse_int(parts[3], lineno))
            elif kind == "keystream":
                _annotation(parts, lineno)
                step = _parse_int(parts[2], lineno)
                if step in keystream:
                    raise DimacsParseError(lineno, f"keystream bit {step} annotated twice")
                keystream[step] = _parse_int(parts[3], lineno)
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsParseError(lineno, "duplicate problem line")
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsParseError(lineno, f"malformed header {line!r}")
            num_vars = _parse_int(parts[2], lineno)
            num_clauses = _parse_int(parts[3], lineno)
            if num_vars < 0 or num_clauses < 0:
                raise DimacsParseError(lineno, "negative counts in header")
            header = (num_vars, num_clauses)
            continue
        if header is None:
            raise DimacsParseError(lineno, "clause before problem line")
        for token in line.split():
            lit = _parse_int(token, lineno)
            if lit == 0:
                try:
                    clauses.append(Clause(tuple(pending)))
                except CnfInputError as exc:
                    raise DimacsParseError(pending_line or lineno, str(exc)) from None
                pending = []
                pending_line = 0
                continue
            if abs(lit) > header[0]:
                raise DimacsParseError(lineno, f"literal {lit} out of range")
            if not pending:
                pending_line = lineno
            pending.append(lit)

    last_line = len(lines)
    if header is None:
        raise DimacsParseError(max(last_line, 1), "missing problem line")
    if pending:
        raise DimacsParseError(pending_line, "clause is missing its terminating 0")
    if len(clauses) != header[1]:
        raise DimacsParseError(
            last_line, f"header declares {header[1]} clauses, found {len(clauses)}"
        )
    steps = sorted(keystream)
    if steps and steps != list(range(1, len(steps) + 1)):
        raise DimacsParseError(last_line, "keystream annotations must cover 1..L")

    try:
        return Cnf(
            num_vars=header[0],
            clauses=tuple(clauses),
            input_vars=tuple(input_vars),
            input_names=tuple(input_names),
            keystream_vars=tuple(keystream[t] for t in steps),
        )
    except CnfInputError as exc:
        raise DimacsParseError(last_line, str(exc)) from None


def write_dimacs(cnf: Cnf) -> bytes:
    """Render ``cnf`` as DIMACS, annotations first, then the problem line."""
    out: list[str] = []
    for name, var in zip(cnf.input_names, cnf.input_vars):
        out.append(f"c input {name} {var}\n")
    for step, var in enumerate(cnf.keystream_vars, start=1):
        out.append(f"c keystream {step} {var}\n")
    out.append(f"p cnf {cnf.num_vars} {cnf.num_clauses}\n")
    for clause in cnf.clauses:
        out.append(" ".join(str(lit) for lit in clause.lits + (0,)) + "\n")
    return "".join(out).encode("utf-8")


def read_dimacs(path: str | Path) -> Cnf:
    data = Path(path).read_bytes()
    cnf = parse_dimacs(data)
    logger.debug("Read %s: %d vars, %d clauses", path, cnf.num_vars, cnf.num_clauses)
    return cnf


def dump_dimacs(cnf: Cnf, path: str | Path) -> None:
    Path(path).write_bytes(write_dimacs(cnf))
    logger.info("Wrote %s (%d vars, %d clauses)", path, cnf.num_vars, cnf.num_clauses)
