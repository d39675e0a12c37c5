"""Decomposition sets, cell sampling and runtime prediction.

A decomposition set is an ordered subset of the input variables. Each of its
``2**d`` value vectors turns the CNF into one cell; :func:`predict`
extrapolates the total time of the whole family from a sample of cells and
:func:`minimize` walks chains of shrinking sets looking for the cheapest.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
from concurrent.futures import FIRST_COMPLETED, Executor, ProcessPoolExecutor, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Callable, Iterator, Sequence, TextIO

import numpy as np

from .cnf import Cnf, PartialAssignment, substitute
from .config import get_settings
from .generators import A51Spec, Generator, GiffordSpec, SummationSpec, ThresholdSpec
from .solver import SolverConfig, Status, solve

logger = logging.getLogger(__name__)

Bits = tuple[int, ...]

DEFAULT_A51_DECOMPOSITION = "1-9,20-30,42-52"


class DecompositionError(ValueError):
    """Invalid decomposition set or range list."""


class UndefinedPredictionError(RuntimeError):
    """The prediction is undefined at the initial decomposition set."""


@dataclass(frozen=True)
class DecompositionSet:
    variables: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        variables = tuple(int(v) for v in self.variables)
        if len(set(variables)) != len(variables):
            raise DecompositionError("decomposition variables must be distinct")
        if any(v < 1 for v in variables):
            raise DecompositionError("decomposition variables must be >= 1")
        object.__setattr__(self, "variables", variables)

    @property
    def power(self) -> int:
        return len(self.variables)

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self) -> Iterator[int]:
        return iter(self.variables)

    @classmethod
    def parse(cls, text: str) -> "DecompositionSet":
        """Parse a range list such as ``1-9,20-30,42-52``; ``-`` or ``""`` is empty."""
        text = text.strip()
        if text in ("", "-"):
            return cls(())
        variables: list[int] = []
        for part in text.split(","):
            part = part.strip()
            try:
                if "-" in part:
                    lo_text, hi_text = part.split("-", 1)
                    lo, hi = int(lo_text), int(hi_text)
                    if hi < lo:
                        raise DecompositionError(f"descending range {part!r}")
                    variables.extend(range(lo, hi + 1))
                else:
                    variables.append(int(part))
            except ValueError as exc:
                if isinstance(exc, DecompositionError):
                    raise
                raise DecompositionError(f"malformed range {part!r}") from None
        return cls(tuple(variables))

    def format(self) -> str:
        if not self.variables:
            return "-"
        runs: list[list[int]] = []
        for v in self.variables:
            if runs and v == runs[-1][-1] + 1:
                runs[-1].append(v)
            else:
                runs.append([v])
        return ",".join(str(r[0]) if len(r) == 1 else f"{r[0]}-{r[-1]}" for r in runs)

    def __str__(self) -> str:
        return self.format()

    def validate(self, cnf: Cnf) -> None:
        inputs = set(cnf.input_vars)
        missing = [v for v in self.variables if v not in inputs]
        if missing:
            raise DecompositionError(
                f"variables {missing[:5]} are not input variables of the formula"
            )

    def without(self, var: int) -> "DecompositionSet":
        return DecompositionSet(tuple(v for v in self.variables if v != var))

    def without_last(self) -> "DecompositionSet":
        return DecompositionSet(self.variables[:-1])

    def assignment(self, bits: Sequence[int]) -> PartialAssignment:
        return PartialAssignment.from_bits(self.variables, bits)

    def vectors(self) -> Iterator[Bits]:
        """All ``2**d`` vectors in lexicographic order, first variable most significant."""
        return itertools.product((0, 1), repeat=self.power)


def cells(cnf: Cnf, decomposition: DecompositionSet) -> Iterator[Cnf]:
    """Yield the substituted formula of every cell, in vector order."""
    decomposition.validate(cnf)
    for vector in decomposition.vectors():
        yield substitute(cnf, decomposition.assignment(vector))


# -- prediction ---------------------------------------------------------------


@dataclass(frozen=True)
class PredictionParams:
    q: int = 1000
    r: int = 4096
    g_budget: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.q < 1 or self.r < 1:
            raise ValueError("Q and R must be >= 1")
        if self.g_budget is not None and self.g_budget <= 0:
            raise ValueError("g_budget must be positive")


@dataclass(frozen=True)
class CellSample:
    vectors: tuple[Bits, ...]
    exact: bool
    power: int

    @property
    def scale(self) -> float:
        """Factor turning the summed cell time into the family estimate."""
        if self.exact:
            return 1.0
        return float(2**self.power) / len(self.vectors)

    def cells(self, cnf: Cnf, decomposition: DecompositionSet) -> Iterator[Cnf]:
        for vector in self.vectors:
            yield substitute(cnf, decomposition.assignment(vector))


def sample_cells(cnf: Cnf, decomposition: DecompositionSet, params: PredictionParams) -> CellSample:
    """All cells when ``2**d <= R``, else ``Q`` i.i.d. uniform vectors from ``seed``."""
    decomposition.validate(cnf)
    d = decomposition.power
    if 2**d <= params.r:
        return CellSample(tuple(decomposition.vectors()), True, d)
    rng = np.random.default_rng(params.seed)
    draws = rng.integers(0, 2, size=(params.q, d), dtype=np.int8)
    vectors = tuple(tuple(int(b) for b in row) for row in draws)
    return CellSample(vectors, False, d)


class PredictionStatus(str, Enum):
    ESTIMATED = "estimated"
    EXACT = "exact"
    UNDEFINED = "undefined"


class AbortReason(str, Enum):
    NONE = "none"
    DOMINATED = "dominated"
    BUDGET = "budget"


@dataclass(frozen=True)
class PredictionOutcome:
    decomposition: DecompositionSet
    tau: float
    T: float | None
    status: PredictionStatus
    cells_solved: int
    sample_size: int
    abort: AbortReason = AbortReason.NONE
    sat_cells: int = 0

    @property
    def defined(self) -> bool:
        return self.T is not None


def default_g_budget(
    cnf: Cnf,
    decomposition: DecompositionSet,
    params: PredictionParams,
    solver_config: SolverConfig | None = None,
    probes: int = 5,
) -> float:
    """``10 * Q * median`` of a few probe cells, at least 60 seconds."""
    sample = sample_cells(cnf, decomposition, params)
    times = []
    for vector in sample.vectors[:probes]:
        result = solve(substitute(cnf, decomposition.assignment(vector)), None, solver_config)
        times.append(result.stats.wall_time)
    median = float(np.median(times)) if times else 0.0
    budget = max(60.0, 10.0 * len(sample.vectors) * median)
    logger.debug("g budget for %s: %.2fs (median probe %.4fs)", decomposition, budget, median)
    return budget


def _outcome(
    decomposition: DecompositionSet,
    sample: CellSample,
    tau: float,
    solved: int,
    sat: int,
    abort: AbortReason,
) -> PredictionOutcome:
    if abort is not AbortReason.NONE:
        status, T = PredictionStatus.UNDEFINED, None
    elif sample.exact:
        status, T = PredictionStatus.EXACT, tau
    else:
        status, T = PredictionStatus.ESTIMATED, sample.scale * tau
    return PredictionOutcome(
        decomposition, tau, T, status, solved, len(sample.vectors), abort, sat
    )


def predict(
    cnf: Cnf,
    decomposition: DecompositionSet,
    params: PredictionParams | None = None,
    solver_config: SolverConfig | None = None,
    *,
    abort_above: float | None = None,
    workers: int = 1,
    backend: str | None = None,
) -> PredictionOutcome:
    """Predict the sequential time to solve the whole decomposition family.

    ``tau`` sums per-cell solver time. Evaluation stops with an undefined
    outcome once ``tau`` reaches the g budget, or once the running estimate
    exceeds ``abort_above`` (the incumbent of a minimisation).

    With ``workers > 1`` cells are solved on a pool of processes or threads;
    ``backend`` defaults to the ``STREAMSAT_BACKEND`` setting.
    """
    params = params or PredictionParams()
    solver_config = solver_config or SolverConfig()
    sample = sample_cells(cnf, decomposition, params)
    budget = params.g_budget
    if budget is None:
        budget = default_g_budget(cnf, decomposition, params, solver_config)

    if workers > 1:
        threads = get_settings().uses_threads if backend is None else backend == "thread"
        outcome = _predict_parallel(
            cnf, decomposition, sample, budget, solver_config, abort_above, workers, threads
        )
    else:
        outcome = _predict_sequential(cnf, decomposition, sample, budget, solver_config, abort_above)
    logger.info(
        "Prediction d=%d: status=%s T=%s tau=%.3fs cells=%d/%d",
        decomposition.power,
        outcome.status.value,
        "-" if outcome.T is None else f"{outcome.T:.6g}",
        outcome.tau,
        outcome.cells_solved,
        outcome.sample_size,
    )
    return outcome


def _predict_sequential(
    cnf: Cnf,
    decomposition: DecompositionSet,
    sample: CellSample,
    budget: float,
    solver_config: SolverConfig,
    abort_above: float | None,
) -> PredictionOutcome:
    tau = 0.0
    solved = sat = 0
    for cell in sample.cells(cnf, decomposition):
        result = solve(cell, None, solver_config.capped(budget - tau))
        tau += result.stats.wall_time
        solved += 1
        sat += result.status is Status.SAT
        if tau >= budget or result.status is Status.BUDGET_EXCEEDED:
            return _outcome(decomposition, sample, tau, solved, sat, AbortReason.BUDGET)
        if abort_above is not None and sample.scale * tau > abort_above:
            return _outcome(decomposition, sample, tau, solved, sat, AbortReason.DOMINATED)
    return _outcome(decomposition, sample, tau, solved, sat, AbortReason.NONE)


_worker_cnf: Cnf | None = None
_worker_config: SolverConfig | None = None


def _init_cell_worker(cnf: Cnf, solver_config: SolverConfig) -> None:
    global _worker_cnf, _worker_config
    _worker_cnf = cnf
    _worker_config = solver_config


def _cell_time(
    cnf: Cnf, solver_config: SolverConfig | None, variables: tuple[int, ...], vector: Bits
) -> tuple[Status, float]:
    cell = substitute(cnf, PartialAssignment.from_bits(variables, vector))
    result = solve(cell, None, solver_config)
    return result.status, result.stats.wall_time


def _solve_cell(variables: tuple[int, ...], vector: Bits) -> tuple[Status, float]:
    assert _worker_cnf is not None
    return _cell_time(_worker_cnf, _worker_config, variables, vector)


def _predict_parallel(
    cnf: Cnf,
    decomposition: DecompositionSet,
    sample: CellSample,
    budget: float,
    solver_config: SolverConfig,
    abort_above: float | None,
    workers: int,
    threads: bool = False,
) -> PredictionOutcome:
    tau = 0.0
    solved = sat = 0
    abort = AbortReason.NONE
    config = solver_config.capped(budget)
    pool: Executor
    task: Callable[[tuple[int, ...], Bits], tuple[Status, float]]
    if threads:
        pool = ThreadPoolExecutor(max_workers=workers)
        task = partial(_cell_time, cnf, config)
    else:
        pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_cell_worker, initargs=(cnf, config))
        task = _solve_cell
    with pool:
        pending = {pool.submit(task, decomposition.variables, vector) for vector in sample.vectors}
        while pending and abort is AbortReason.NONE:
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            for future in done:
                status, elapsed = future.result()
                tau += elapsed
                solved += 1
                sat += status is Status.SAT
                if tau >= budget or status is Status.BUDGET_EXCEEDED:
                    abort = AbortReason.BUDGET
                elif abort_above is not None and sample.scale * tau > abort_above:
                    abort = AbortReason.DOMINATED
        for future in pending:
            future.cancel()
    return _outcome(decomposition, sample, tau, solved, sat, abort)


# -- minimisation -------------------------------------------------------------


class Strategy(str, Enum):
    REMOVE_LAST = "remove-last"
    GREEDY_BEST = "greedy-best"


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    outcome: PredictionOutcome
    accepted: bool
    incumbent_T: float

    @property
    def decomposition(self) -> DecompositionSet:
        return self.outcome.decomposition


@dataclass
class MinimizationTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def add(self, outcome: PredictionOutcome, accepted: bool, incumbent_T: float) -> None:
        self.records.append(TraceRecord(len(self.records), outcome, accepted, incumbent_T))

    def __len__(self) -> int:
        return len(self.records)

    def dominated_count(self) -> int:
        return sum(r.outcome.abort is AbortReason.DOMINATED for r in self.records)

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream)
        writer.writerow(
            ["iteration", "power", "tau", "T", "status", "abort", "accepted", "incumbent_T", "decomposition"]
        )
        for r in self.records:
            o = r.outcome
            writer.writerow(
                [
                    r.iteration,
                    o.decomposition.power,
                    f"{o.tau:.6f}",
                    "" if o.T is None else f"{o.T:.6g}",
                    o.status.value,
                    o.abort.value,
                    int(r.accepted),
                    f"{r.incumbent_T:.6g}",
                    o.decomposition.format(),
                ]
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)


def minimize(
    cnf: Cnf,
    initial: DecompositionSet,
    strategy: Strategy | str = Strategy.REMOVE_LAST,
    params: PredictionParams | None = None,
    solver_config: SolverConfig | None = None,
    *,
    patience: int = 3,
    min_power: int = 1,
    workers: int = 1,
) -> tuple[DecompositionSet, MinimizationTrace]:
    """Search a chain of shrinking decomposition sets for the smallest prediction.

    ``remove-last`` drops the last variable each step and stops after
    ``patience`` consecutive candidates that do not beat the incumbent.
    ``greedy-best`` tries every single removal and continues from the best
    one while it improves. Candidates are abandoned as soon as their running
    estimate exceeds the incumbent. ``workers`` is passed on to every prediction.
    """
    strategy = Strategy(strategy)
    params = params or PredictionParams()
    solver_config = solver_config or SolverConfig()
    if initial.power == 0:
        raise DecompositionError("initial decomposition set is empty")
    initial.validate(cnf)
    if params.g_budget is None:
        params = replace(params, g_budget=default_g_budget(cnf, initial, params, solver_config))

    trace = MinimizationTrace()
    first = predict(cnf, initial, params, solver_config, workers=workers)
    if first.T is None:
        raise UndefinedPredictionError(
            f"prediction is undefined at {initial.format()} (d={initial.power}); "
            "start from a larger decomposition set or raise the g budget"
        )
    best, best_T = initial, first.T
    trace.add(first, True, best_T)

    if strategy is Strategy.REMOVE_LAST:
        current = initial
        misses = 0
        while current.power > min_power and misses < patience:
            candidate = current.without_last()
            outcome = predict(cnf, candidate, params, solver_config, abort_above=best_T, workers=workers)
            improved = outcome.T is not None and outcome.T < best_T
            if improved:
                best, best_T = candidate, outcome.T  # type: ignore[assignment]
                misses = 0
            else:
                misses += 1
            trace.add(outcome, improved, best_T)
            current = candidate
    else:
        current = initial
        while current.power > min_power:
            round_best: DecompositionSet | None = None
            for var in current.variables:
                candidate = current.without(var)
                outcome = predict(cnf, candidate, params, solver_config, abort_above=best_T, workers=workers)
                improved = outcome.T is not None and outcome.T < best_T
                if improved:
                    best, best_T = candidate, outcome.T  # type: ignore[assignment]
                    round_best = candidate
                trace.add(outcome, improved, best_T)
            if round_best is None:
                break
            current = round_best

    logger.info("Minimisation kept d=%d with T=%.6g after %d evaluations", best.power, best_T, len(trace))
    return best, trace


# -- decomposition set builders -------------------------------------------


def register_prefix_set(lengths: Sequence[int], upto: Sequence[int], offset: int = 0) -> DecompositionSet:
    """Cells ``1..upto[r]`` of every register ``r``, registers laid out from ``offset + 1``."""
    variables: list[int] = []
    start = offset
    for length, last in zip(lengths, upto):
        if not 0 <= last <= length:
            raise DecompositionError(f"cell {last} outside register of length {length}")
        variables.extend(range(start + 1, start + last + 1))
        start += length
    return DecompositionSet(tuple(variables))


def first_registers_set(lengths: Sequence[int], count: int, offset: int = 0) -> DecompositionSet:
    """All cells of the first ``count`` registers."""
    return register_prefix_set(lengths[:count], lengths[:count], offset)


def key_prefix_set(n: int) -> DecompositionSet:
    return DecompositionSet(tuple(range(1, n + 1)))


def default_decomposition(generator: Generator) -> DecompositionSet:
    """Starting set used for each generator family."""
    if isinstance(generator, A51Spec):
        return register_prefix_set(generator.register_lengths, generator.clocking_cells)
    if isinstance(generator, ThresholdSpec):
        lengths = generator.register_lengths
        return first_registers_set(lengths, max(1, len(lengths) - 2))
    if isinstance(generator, SummationSpec):
        lengths = tuple(reg.length for reg in generator.registers)
        return first_registers_set(lengths, max(1, len(lengths) - 1), offset=generator.carry_bits)
    if isinstance(generator, GiffordSpec):
        return key_prefix_set(32)
    raise DecompositionError(f"no default decomposition for {generator!r}")


def power_variants(
    base: DecompositionSet, inputs: Sequence[int], powers: Sequence[int]
) -> dict[int, DecompositionSet]:
    """Neighbouring sets of the given powers: drop trailing variables or append unused inputs."""
    spare = [v for v in inputs if v not in set(base.variables)]
    variants: dict[int, DecompositionSet] = {}
    for power in powers:
        if power < 0 or power > base.power + len(spare):
            raise DecompositionError(f"cannot build a decomposition set of power {power}")
        if power <= base.power:
            variants[power] = DecompositionSet(base.variables[:power])
        else:
            variants[power] = DecompositionSet(base.variables + tuple(spare[: power - base.power]))
    return variants
