"""Job batches and the parallel attack over a decomposition family.

The family of ``2**d`` cells is split into ``2**k`` batches by fixing the
first ``k`` decomposition variables. Workers take batches from one shared
queue and solve their cells in order; a shared event stops everybody once a
key is found (first mode), the deadline passes or the user interrupts.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import multiprocessing
import queue
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence, TextIO

from .cnf import Cnf, PartialAssignment, substitute
from .decomposition import DecompositionSet
from .encoder import Encoding, bind_keystream
from .generators import format_key_hex, verify_key
from .solver import CancelToken, SolverConfig, Status, solve, solve_all

logger = logging.getLogger(__name__)

Bits = tuple[int, ...]

_POLL_SECONDS = 0.1


class BatchError(ValueError):
    """Invalid batch split or manifest."""


class KeyVerificationError(RuntimeError):
    """A decoded key does not reproduce the keystream."""


@dataclass(frozen=True)
class Batch:
    """Cells ``(prefix | beta)`` for every ``beta`` of length ``d - k``."""

    index: int
    prefix: Bits
    decomposition: DecompositionSet

    @property
    def k(self) -> int:
        return len(self.prefix)

    @property
    def d(self) -> int:
        return self.decomposition.power

    @property
    def cell_count(self) -> int:
        return 2 ** (self.d - self.k)

    def vectors(self) -> Iterator[Bits]:
        for beta in itertools.product((0, 1), repeat=self.d - self.k):
            yield self.prefix + beta


def _prefix_bits(value: int, width: int) -> Bits:
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def iter_batches(decomposition: DecompositionSet, k: int) -> Iterator[Batch]:
    if not 0 <= k <= decomposition.power:
        raise BatchError(f"k={k} must lie in 0..{decomposition.power}")
    for p in range(1, 2**k + 1):
        yield Batch(p, _prefix_bits(p - 1, k), decomposition)


def make_batches(decomposition: DecompositionSet, k: int) -> list[Batch]:
    """Split the family into ``2**k`` batches; batch ``p`` has prefix ``p - 1`` in binary."""
    return list(iter_batches(decomposition, k))


def choose_k(d: int, workers: int) -> int:
    """Smallest ``k`` with ``2**k >= 4 * workers``, capped at ``d``."""
    if workers < 1:
        raise BatchError("workers must be >= 1")
    return min(d, max(0, math.ceil(math.log2(4 * workers))))


class AttackMode(str, Enum):
    FIRST = "first"
    ALL = "all"


class AttackStatus(str, Enum):
    FOUND = "found"
    EXHAUSTED = "exhausted"
    DEADLINE = "deadline"
    INTERRUPTED = "interrupted"


@dataclass(frozen=True)
class AttackConfig:
    workers: int = 1
    k: int | None = None
    mode: AttackMode = AttackMode.FIRST
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    deadline: float | None = None
    backend: str = "process"

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", AttackMode(self.mode))
        if self.workers < 1:
            raise BatchError("workers must be >= 1")
        if self.k is not None and self.k < 0:
            raise BatchError("k must be >= 0")
        if self.deadline is not None and self.deadline <= 0:
            raise BatchError("deadline must be positive")
        if self.backend not in ("process", "thread"):
            raise BatchError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class BatchReport:
    index: int
    keys: tuple[Bits, ...]
    cells_solved: int
    cells_skipped: int
    wall_time: float
    budget_hit: bool = False


@dataclass(frozen=True)
class AttackResult:
    status: AttackStatus
    keys: tuple[Bits, ...]
    verified: tuple[bool, ...]
    cells_solved: int
    cells_skipped: int
    batches: tuple[BatchReport, ...]
    wall_time: float

    @property
    def found(self) -> bool:
        return bool(self.keys)

    def write_timings_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream)
        writer.writerow(["batch", "cells_solved", "cells_skipped", "wall_time", "keys"])
        for report in sorted(self.batches, key=lambda r: r.index):
            writer.writerow(
                [report.index, report.cells_solved, report.cells_skipped, f"{report.wall_time:.6f}", len(report.keys)]
            )

    def timings_csv(self) -> str:
        buf = io.StringIO()
        self.write_timings_csv(buf)
        return buf.getvalue()


# -- per-batch work -----------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    """Everything a worker needs; sent once per worker."""

    cnf: Cnf
    key_vars: tuple[int, ...]
    decomposition: DecompositionSet
    mode: AttackMode
    solver_config: SolverConfig


def _decode_key(job: _Job, model: PartialAssignment, vector: Bits) -> Bits:
    """Key bits from the model with the cell vector laid over the decomposition variables."""
    fixed = dict(zip(job.decomposition.variables, vector))
    return tuple(int(fixed[v]) if v in fixed else int(model.bindings.get(v, False)) for v in job.key_vars)


def process_batch(job: _Job, batch: Batch, cancel: CancelToken | None = None) -> BatchReport:
    """Solve the cells of ``batch`` in order until done, found (first mode) or cancelled."""
    start = time.perf_counter()
    keys: list[Bits] = []
    solved = 0
    budget_hit = False
    free_keys = [v for v in job.key_vars if v not in set(job.decomposition.variables)]
    vectors = list(batch.vectors())
    for pos, vector in enumerate(vectors):
        if cancel is not None and cancel.is_set():
            return BatchReport(batch.index, tuple(keys), solved, len(vectors) - pos, time.perf_counter() - start, budget_hit)
        cell = substitute(job.cnf, job.decomposition.assignment(vector))
        if job.mode is AttackMode.FIRST:
            result = solve(cell, None, job.solver_config, cancel=cancel)
            if result.status is Status.INTERRUPTED:
                return BatchReport(batch.index, (), solved, len(vectors) - pos, time.perf_counter() - start, budget_hit)
            solved += result.status in (Status.SAT, Status.UNSAT)
            budget_hit |= result.status is Status.BUDGET_EXCEEDED
            if result.status is Status.SAT:
                assert result.model is not None
                keys.append(_decode_key(job, result.model, vector))
                return BatchReport(batch.index, tuple(keys), solved, len(vectors) - pos - 1, time.perf_counter() - start, budget_hit)
        else:
            if free_keys:
                found = solve_all(cell, job.solver_config, free_keys, cancel=cancel)
                models = found.models
                complete = found.complete
            else:
                single = solve(cell, None, job.solver_config, cancel=cancel)
                models = (single.model,) if single.model is not None else ()
                complete = single.status in (Status.SAT, Status.UNSAT)
            keys.extend(_decode_key(job, model, vector) for model in models)
            solved += complete
            budget_hit |= not complete and not (cancel is not None and cancel.is_set())
            if not complete and cancel is not None and cancel.is_set():
                return BatchReport(batch.index, tuple(keys), solved, len(vectors) - pos, time.perf_counter() - start, budget_hit)
    return BatchReport(batch.index, tuple(keys), solved, 0, time.perf_counter() - start, budget_hit)


def _worker_loop(job: _Job, tasks: Any, results: Any, cancel: Any) -> None:
    while True:
        batch = tasks.get()
        if batch is None:
            results.put(None)
            return
        if cancel.is_set():
            results.put(BatchReport(batch.index, (), 0, batch.cell_count, 0.0))
            continue
        try:
            report = process_batch(job, batch, cancel)
        except Exception as exc:  # pragma: no cover - surfaced by the coordinator
            results.put(("error", f"batch {batch.index}: {exc!r}"))
            results.put(None)
            return
        results.put(report)


# -- coordinator ------------------------------------------------------------


def _finish(
    enc: Encoding,
    keystream: Sequence[int],
    reports: list[BatchReport],
    missing_cells: int,
    mode: AttackMode,
    deadline_hit: bool,
    interrupted: bool,
    started: float,
) -> AttackResult:
    keys: list[Bits] = []
    for report in sorted(reports, key=lambda r: r.index):
        for key in report.keys:
            if key not in keys:
                keys.append(key)
    if mode is AttackMode.FIRST:
        keys = keys[:1]
    else:
        keys.sort()
    verified = []
    for key in keys:
        ok = verify_key(enc.generator, key, keystream)
        if not ok:
            raise KeyVerificationError(
                f"decoded key {format_key_hex(enc.generator, key)} does not reproduce the keystream"
            )
        verified.append(ok)
        logger.info("Recovered key %s", format_key_hex(enc.generator, key))

    solved = sum(r.cells_solved for r in reports)
    skipped = sum(r.cells_skipped for r in reports) + missing_cells
    budget_hit = any(r.budget_hit for r in reports)
    if interrupted:
        status = AttackStatus.INTERRUPTED
    elif mode is AttackMode.FIRST and keys:
        status = AttackStatus.FOUND
    elif deadline_hit or budget_hit or skipped:
        status = AttackStatus.DEADLINE
    elif keys:
        status = AttackStatus.FOUND
    else:
        status = AttackStatus.EXHAUSTED
    if status is AttackStatus.EXHAUSTED:
        logger.warning("No key in the whole family: wrong keystream or encoding")
    return AttackResult(
        status=status,
        keys=tuple(keys),
        verified=tuple(verified),
        cells_solved=solved,
        cells_skipped=skipped,
        batches=tuple(sorted(reports, key=lambda r: r.index)),
        wall_time=time.perf_counter() - started,
    )


def run_attack(
    enc: Encoding,
    keystream: Sequence[int],
    decomposition: DecompositionSet,
    config: AttackConfig | None = None,
    *,
    batches: Sequence[Batch] | None = None,
) -> AttackResult:
    """Bind ``keystream``, split the family into batches and solve it on a worker pool.

    With ``batches`` given (e.g. read from a manifest) only those batches run.
    Keys are verified against the simulator before they are returned.
    """
    config = config or AttackConfig()
    started = time.perf_counter()
    if len(keystream) != len(enc.keystream_vars):
        raise BatchError(
            f"keystream has {len(keystream)} bits, encoding covers {len(enc.keystream_vars)}"
        )
    cnf = bind_keystream(enc, keystream)
    decomposition.validate(cnf)
    if batches is None:
        k = config.k if config.k is not None else choose_k(decomposition.power, config.workers)
        batches = make_batches(decomposition, k)
    batches = list(batches)
    job = _Job(cnf, enc.key_vars, decomposition, config.mode, config.solver_config)
    workers = min(config.workers, len(batches)) or 1
    deadline = started + config.deadline if config.deadline is not None else None
    logger.info(
        "Attack: d=%d, %d batches, %d workers, mode=%s",
        decomposition.power,
        len(batches),
        workers,
        config.mode.value,
    )

    if workers == 1:
        reports, missing, deadline_hit, interrupted = _run_sequential(job, batches, deadline)
    else:
        reports, missing, deadline_hit, interrupted = _run_pool(job, batches, workers, config.backend, deadline)
    return _finish(enc, keystream, reports, missing, config.mode, deadline_hit, interrupted, started)


class _DeadlineEvent:
    """Cancellation flag that also trips once the deadline passes."""

    def __init__(self, deadline: float | None) -> None:
        self._event = threading.Event()
        self.deadline = deadline
        self.expired = False

    def set(self) -> None:
        self._event.set()

    def is_set(self) -> bool:
        if self._event.is_set():
            return True
        if self.deadline is not None and time.perf_counter() >= self.deadline:
            self.expired = True
            self._event.set()
            return True
        return False


def _run_sequential(
    job: _Job, batches: list[Batch], deadline: float | None
) -> tuple[list[BatchReport], int, bool, bool]:
    cancel = _DeadlineEvent(deadline)
    reports: list[BatchReport] = []
    interrupted = False
    try:
        for batch in batches:
            if cancel.is_set():
                break
            report = process_batch(job, batch, cancel)
            reports.append(report)
            if job.mode is AttackMode.FIRST and report.keys:
                break
    except KeyboardInterrupt:
        logger.warning("Interrupted; returning partial results")
        interrupted = True
    done = {r.index for r in reports}
    missing = sum(b.cell_count for b in batches if b.index not in done)
    return reports, missing, cancel.expired, interrupted


def _run_pool(
    job: _Job, batches: list[Batch], workers: int, backend: str, deadline: float | None
) -> tuple[list[BatchReport], int, bool, bool]:
    if backend == "thread":
        tasks: Any = queue.Queue()
        results: Any = queue.Queue()
        cancel: Any = threading.Event()
        pool = [
            threading.Thread(target=_worker_loop, args=(job, tasks, results, cancel), daemon=True)
            for _ in range(workers)
        ]
        empty: Any = queue.Empty
    else:
        ctx = multiprocessing.get_context()
        tasks = ctx.Queue()
        results = ctx.Queue()
        cancel = ctx.Event()
        pool = [
            ctx.Process(target=_worker_loop, args=(job, tasks, results, cancel), daemon=True)
            for _ in range(workers)
        ]
        empty = queue.Empty

    for batch in batches:
        tasks.put(batch)
    for _ in pool:
        tasks.put(None)
    for worker in pool:
        worker.start()

    reports: list[BatchReport] = []
    errors: list[str] = []
    finished = 0
    deadline_hit = False
    interrupted = False
    try:
        while finished < len(pool):
            if deadline is not None and not cancel.is_set() and time.perf_counter() >= deadline:
                logger.warning("Deadline reached; stopping workers")
                deadline_hit = True
                cancel.set()
            try:
                item = results.get(timeout=_POLL_SECONDS)
            except empty:
                continue
            if item is None:
                finished += 1
            elif isinstance(item, tuple):
                errors.append(item[1])
                cancel.set()
            else:
                reports.append(item)
                logger.debug("Batch %d done: %d cells, %.3fs", item.index, item.cells_solved, item.wall_time)
                if job.mode is AttackMode.FIRST and item.keys:
                    cancel.set()
    except KeyboardInterrupt:
        logger.warning("Interrupted; stopping workers and returning partial results")
        interrupted = True
        cancel.set()
        reports.extend(_drain(results, empty))
    finally:
        for worker in pool:
            worker.join(timeout=5)
        for worker in pool:
            if hasattr(worker, "terminate") and worker.is_alive():
                worker.terminate()

    if errors:
        raise RuntimeError("; ".join(errors))
    done = {r.index for r in reports}
    missing = sum(b.cell_count for b in batches if b.index not in done)
    return reports, missing, deadline_hit, interrupted


def _drain(results: Any, empty: Any) -> Iterable[BatchReport]:
    drained = []
    end = time.perf_counter() + 2.0
    while time.perf_counter() < end:
        try:
            item = results.get(timeout=_POLL_SECONDS)
        except empty:
            continue
        if isinstance(item, BatchReport):
            drained.append(item)
    return drained


# -- manifests ----------------------------------------------------------------


def write_manifest(
    decomposition: DecompositionSet, k: int, enc: Encoding | None, stream: TextIO
) -> int:
    """Write one ``<index> <prefix> <cell-count>`` line per batch; returns the batch count."""
    stream.write(f"# decomposition {decomposition.format()}\n")
    stream.write(f"# k {k}\n")
    if enc is not None:
        stream.write(f"# generator {enc.generator.name} length {len(enc.keystream_vars)}\n")
    count = 0
    for batch in iter_batches(decomposition, k):
        prefix = "".join(map(str, batch.prefix)) or "-"
        stream.write(f"{batch.index} {prefix} {batch.cell_count}\n")
        count += 1
    return count


def export_manifest(
    decomposition: DecompositionSet, k: int, enc: Encoding | None, path: str | Path
) -> int:
    with open(path, "w") as fh:
        count = write_manifest(decomposition, k, enc, fh)
    logger.info("Wrote %d batch records to %s", count, path)
    return count


def parse_manifest(text: str, decomposition: DecompositionSet | None = None) -> tuple[DecompositionSet, list[Batch]]:
    """Read a manifest back; the ``# decomposition`` header is used unless one is given."""
    found: DecompositionSet | None = None
    rows: list[tuple[int, Bits, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "decomposition":
                found = DecompositionSet.parse(parts[1])
            continue
        parts = line.split()
        if len(parts) != 3:
            raise BatchError(f"manifest line {lineno}: expected 3 fields")
        try:
            index, count = int(parts[0]), int(parts[2])
        except ValueError:
            raise BatchError(f"manifest line {lineno}: malformed numbers") from None
        prefix_text = "" if parts[1] == "-" else parts[1]
        if any(ch not in "01" for ch in prefix_text):
            raise BatchError(f"manifest line {lineno}: prefix must be bits")
        rows.append((index, tuple(int(ch) for ch in prefix_text), count, lineno))

    decomposition = decomposition or found
    if decomposition is None:
        raise BatchError("manifest has no decomposition header")
    batches = []
    for index, prefix, count, lineno in rows:
        batch = Batch(index, prefix, decomposition)
        if batch.k > batch.d or batch.cell_count != count:
            raise BatchError(f"manifest line {lineno}: batch does not match d={decomposition.power}")
        if not 1 <= index <= 2**batch.k or _prefix_bits(index - 1, batch.k) != prefix:
            raise BatchError(f"manifest line {lineno}: prefix does not match index {index}")
        batches.append(batch)
    return decomposition, batches


def read_manifest(path: str | Path, decomposition: DecompositionSet | None = None) -> tuple[DecompositionSet, list[Batch]]:
    return parse_manifest(Path(path).read_text(), decomposition)
