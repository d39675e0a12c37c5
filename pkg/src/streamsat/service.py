"""Shared orchestration between the CLI and scripts."""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .cnf import Cnf, PartialAssignment
from .decomposition import (
    DecompositionSet,
    MinimizationTrace,
    PredictionParams,
    Strategy,
    minimize,
    power_variants,
    predict,
)
from .encoder import Encoding, bind_keystream, encode
from .generators import (
    Bits,
    Generator,
    GiffordSpec,
    bits_to_bytes,
    format_bits,
    format_key_hex,
    is_valid_key,
    keystream_bits,
    parse_bits,
    parse_key_hex,
    verify_key,
)
from .runner import AttackConfig, AttackResult, Batch, run_attack
from .solver import SolveResult, SolverConfig, solve

logger = logging.getLogger(__name__)


def random_key(generator: Generator, seed: int | None = None) -> Bits:
    """Uniformly random valid key."""
    rng = np.random.default_rng(seed)
    while True:
        key = tuple(int(b) for b in rng.integers(0, 2, size=generator.key_length))
        if is_valid_key(generator, key):
            return key


def observed_keystream(
    generator: Generator,
    length: int,
    *,
    keystream: Optional[str] = None,
    key_hex: Optional[str] = None,
    seed: Optional[int] = None,
) -> tuple[Bits, Optional[Bits]]:
    """Return ``(keystream, planted key)``.

    An explicit keystream wins; otherwise the keystream of ``key_hex`` or of
    a random key drawn from ``seed`` is simulated.
    """
    if keystream is not None:
        bits = parse_bits(keystream)
        if len(bits) < length:
            raise ValueError(f"keystream has {len(bits)} bits, {length} requested")
        return bits[:length], None
    key = parse_key_hex(generator, key_hex) if key_hex else random_key(generator, seed)
    return keystream_bits(generator, key, length), key


def keystream_run(generator: Generator, key_hex: str, length: int) -> Dict[str, Any]:
    key = parse_key_hex(generator, key_hex)
    bits = keystream_bits(generator, key, length)
    data: Dict[str, Any] = {
        "generator": generator.name,
        "key": format_key_hex(generator, key),
        "length": length,
        "keystream": format_bits(bits),
    }
    if isinstance(generator, GiffordSpec):
        data["hex"] = bits_to_bytes(bits).hex().upper()
    return data


def verify_run(generator: Generator, key_hex: str, keystream: str) -> Dict[str, Any]:
    key = parse_key_hex(generator, key_hex)
    bits = parse_bits(keystream)
    ok = verify_key(generator, key, bits)
    return {
        "generator": generator.name,
        "key": format_key_hex(generator, key),
        "length": len(bits),
        "verified": ok,
    }


def encode_run(
    generator: Generator, length: int, keystream: Optional[Sequence[int]] = None
) -> tuple[Encoding, Cnf]:
    enc = encode(generator, length)
    cnf = bind_keystream(enc, keystream) if keystream is not None else enc.cnf
    return enc, cnf


def _outcome_row(outcome: Any) -> Dict[str, Any]:
    return {
        "decomposition": outcome.decomposition.format(),
        "power": outcome.decomposition.power,
        "tau": outcome.tau,
        "T": outcome.T,
        "status": outcome.status.value,
        "abort": outcome.abort.value,
        "cells_solved": outcome.cells_solved,
        "sample_size": outcome.sample_size,
    }


def predict_run(
    cnf: Cnf,
    decomposition: DecompositionSet,
    params: PredictionParams,
    solver_config: SolverConfig,
    *,
    workers: int = 1,
) -> Dict[str, Any]:
    outcome = predict(cnf, decomposition, params, solver_config, workers=workers)
    return _outcome_row(outcome)


def prediction_grid(
    generator: Generator,
    keystream: Sequence[int],
    base: DecompositionSet,
    powers: Sequence[int],
    lengths: Sequence[int],
    params: PredictionParams,
    solver_config: SolverConfig,
    *,
    workers: int = 1,
) -> Dict[str, Any]:
    """Predictions for every (decomposition power, keystream length) pair."""
    if max(lengths) > len(keystream):
        raise ValueError(f"keystream has {len(keystream)} bits, grid needs {max(lengths)}")
    rows: List[Dict[str, Any]] = []
    for length in lengths:
        enc = encode(generator, length)
        cnf = bind_keystream(enc, keystream[:length])
        variants = power_variants(base, enc.key_vars, powers)
        for power in powers:
            outcome = predict(cnf, variants[power], params, solver_config, workers=workers)
            row = _outcome_row(outcome)
            row["length"] = length
            rows.append(row)
            logger.info("Grid cell d=%d L=%d: %s", power, length, row["status"])
    return {
        "generator": generator.name,
        "powers": list(powers),
        "lengths": list(lengths),
        "rows": rows,
    }


def format_grid(grid: Dict[str, Any]) -> List[str]:
    """Render a power x length table of predicted times."""
    lengths = grid["lengths"]
    cells = {(row["power"], row["length"]): row for row in grid["rows"]}
    lines = ["power\t" + "\t".join(str(length) for length in lengths)]
    for power in grid["powers"]:
        values = []
        for length in lengths:
            row = cells[(power, length)]
            values.append("undefined" if row["T"] is None else f"{row['T']:.4g}")
        lines.append(f"{power}\t" + "\t".join(values))
    return lines


def optimize_run(
    cnf: Cnf,
    initial: DecompositionSet,
    strategy: Strategy | str,
    params: PredictionParams,
    solver_config: SolverConfig,
    *,
    patience: int = 3,
    workers: int = 1,
) -> tuple[Dict[str, Any], MinimizationTrace]:
    best, trace = minimize(
        cnf, initial, strategy, params, solver_config, patience=patience, workers=workers
    )
    incumbent = trace.records[-1].incumbent_T if trace.records else None
    return (
        {
            "initial": initial.format(),
            "best": best.format(),
            "power": best.power,
            "T": incumbent,
            "evaluations": len(trace),
            "dominated": trace.dominated_count(),
        },
        trace,
    )


def solve_run(
    cnf: Cnf,
    decomposition: DecompositionSet,
    cell: Sequence[int],
    solver_config: SolverConfig,
) -> tuple[Dict[str, Any], SolveResult]:
    """Solve ``cnf``, or one cell of it when ``cell`` gives the decomposition bits."""
    assumptions: Optional[PartialAssignment] = None
    if decomposition.power:
        if len(cell) != decomposition.power:
            raise ValueError(f"cell has {len(cell)} bits, decomposition has {decomposition.power}")
        decomposition.validate(cnf)
        assumptions = decomposition.assignment(cell)
    result = solve(cnf, assumptions, solver_config)
    data: Dict[str, Any] = {
        "status": result.status.value.lower(),
        "inputs": format_bits(result.model.bits(cnf.input_vars)) if result.model is not None else None,
    }
    return data, result


def attack_run(
    generator: Generator,
    keystream: Sequence[int],
    decomposition: DecompositionSet,
    config: AttackConfig,
    *,
    batches: Optional[Sequence[Batch]] = None,
) -> tuple[Dict[str, Any], AttackResult]:
    enc = encode(generator, len(keystream))
    result = run_attack(enc, keystream, decomposition, config, batches=batches)
    data = {
        "generator": generator.name,
        "status": result.status.value,
        "keys": [format_key_hex(generator, key) for key in result.keys],
        "verified": list(result.verified),
        "cells_solved": result.cells_solved,
        "cells_skipped": result.cells_skipped,
        "batches": len(result.batches),
        "wall_time": result.wall_time,
    }
    return data, result


def parse_int_list(text: str) -> List[int]:
    """``"128,144"`` or ``"29-33"`` style lists."""
    values: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values

