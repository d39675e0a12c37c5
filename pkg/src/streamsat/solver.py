"""Conflict-driven clause-learning SAT solver.

Two-watched-literal propagation, first-UIP learning and activity-based
branching. The knobs of :class:`SolverConfig` cover the tuning used for
keystream inversion: a head start in activity for input variables, no
activity decay, no random decisions and an optional decision restriction.

Internally a literal ``l`` is coded as ``2*abs(l) + (l < 0)``, so its
complement is ``code ^ 1``. A clause is a list of codes whose first two
entries are watched; the literal a clause implies sits at position 0.
"""
from __future__ import annotations

import heapq
import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Protocol, Sequence, Union

from .cnf import Cnf, CnfInputError, PartialAssignment, evaluate

logger = logging.getLogger(__name__)

_RESCALE_VAR = 1e100
_RESCALE_CLAUSE = 1e20
_CHECK_EVERY_DECISIONS = 256


class SolverInconsistencyError(RuntimeError):
    """A reported model does not satisfy its formula."""


class DecisionRestrictionError(RuntimeError):
    """Every allowed decision variable is assigned but the formula is not."""


class Status(str, Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    BUDGET_EXCEEDED = "BUDGET_EXCEEDED"
    INTERRUPTED = "INTERRUPTED"


class RestartPolicy(str, Enum):
    STANDARD = "standard"
    LUBY = "luby"
    OFF = "off"


class Phase(str, Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"
    SAVED = "saved"


class CancelToken(Protocol):
    def is_set(self) -> bool: ...


@dataclass(frozen=True)
class SolverConfig:
    """Solver tuning and budgets.

    The defaults are the inversion settings: input variables start with
    ``input_activity``, activities never decay and decisions are never
    random. :meth:`baseline` gives the conventional settings instead.

    ``restrict_decisions_to`` limits branching to the given variables; the
    rest must follow by propagation, as they do for the input variables of
    an encoded generator. Otherwise solving raises
    :class:`DecisionRestrictionError`.
    """

    input_priority: bool = True
    input_activity: float = 1.0
    decay_disabled: bool = True
    random_decisions_disabled: bool = True
    restrict_decisions_to: frozenset[int] | None = None
    restart: RestartPolicy = RestartPolicy.STANDARD
    phase: Phase = Phase.NEGATIVE
    max_conflicts: int | None = None
    max_time: float | None = None
    var_decay: float = 0.95
    clause_decay: float = 0.999
    random_var_freq: float = 0.02
    restart_first: int = 100
    restart_inc: float = 1.5
    learnt_size_factor: float = 1 / 3
    learnt_size_inc: float = 1.1
    min_learnts: int = 100
    seed: int = 91648253

    def __post_init__(self) -> None:
        object.__setattr__(self, "restart", RestartPolicy(self.restart))
        object.__setattr__(self, "phase", Phase(self.phase))
        if self.restrict_decisions_to is not None:
            object.__setattr__(
                self, "restrict_decisions_to", frozenset(self.restrict_decisions_to)
            )
        if self.max_conflicts is not None and self.max_conflicts <= 0:
            raise ValueError("max_conflicts must be positive when set")
        if self.max_time is not None and self.max_time <= 0:
            raise ValueError("max_time must be positive when set")
        if not 0 < self.var_decay <= 1 or not 0 < self.clause_decay <= 1:
            raise ValueError("decay factors must lie in (0, 1]")
        if not 0 <= self.random_var_freq <= 1:
            raise ValueError("random_var_freq must lie in [0, 1]")
        if self.restart_first < 1 or self.restart_inc <= 1:
            raise ValueError("restart_first must be >= 1 and restart_inc > 1")

    @classmethod
    def baseline(cls, **overrides: object) -> "SolverConfig":
        values: dict[str, object] = {
            "input_priority": False,
            "decay_disabled": False,
            "random_decisions_disabled": False,
        }
        values.update(overrides)
        return cls(**values)  # type: ignore[arg-type]

    def capped(self, max_time: float | None = None) -> "SolverConfig":
        """Copy whose time budget is at most ``max_time``."""
        if max_time is None:
            return self
        max_time = max(max_time, 1e-6)
        if self.max_time is not None:
            max_time = min(max_time, self.max_time)
        return replace(self, max_time=max_time)


@dataclass
class SolverStats:
    wall_time: float = 0.0
    decisions: int = 0
    conflicts: int = 0
    propagations: int = 0
    restarts: int = 0
    learnt_clauses: int = 0

    def as_text(self) -> str:
        return "".join(
            f"{name}={getattr(self, name)}\n"
            for name in ("wall_time", "decisions", "conflicts", "propagations", "restarts", "learnt_clauses")
        )

    def copy(self) -> "SolverStats":
        return replace(self)


@dataclass(frozen=True)
class SolveResult:
    status: Status
    model: PartialAssignment | None
    stats: SolverStats

    @property
    def satisfiable(self) -> bool:
        return self.status is Status.SAT


@dataclass(frozen=True)
class Conflict:
    """Unit propagation reached a falsified clause."""

    clause: tuple[int, ...] = ()


@dataclass(frozen=True)
class AllSatResult:
    models: tuple[PartialAssignment, ...]
    truncated: bool
    complete: bool
    status: Status
    stats: SolverStats = field(default_factory=SolverStats)


Assumptions = Union[PartialAssignment, Sequence[int], None]


def _code(lit: int) -> int:
    return 2 * lit if lit > 0 else -2 * lit + 1


def _lit(code: int) -> int:
    return -(code >> 1) if code & 1 else code >> 1


def luby(y: float, x: int) -> float:
    """``x``-th element (0-based) of the Luby sequence scaled by powers of ``y``."""
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x = x % size
    return y**seq


class Solver:
    """Stateful solver instance; one per thread or process."""

    def __init__(
        self,
        cnf: Cnf,
        config: SolverConfig | None = None,
        *,
        extra_decision_vars: Iterable[int] = (),
    ) -> None:
        self.cnf = cnf
        self.config = config or SolverConfig()
        n = cnf.num_vars
        self.num_vars = n
        self.values = [0] * (2 * n + 2)
        self.level = [0] * (n + 1)
        self.reason: list[list[int] | None] = [None] * (n + 1)
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.watches: list[list[list[int]]] = [[] for _ in range(2 * n + 2)]
        self.learnts: list[list[int]] = []
        self.clause_activity: dict[int, float] = {}
        self.cla_inc = 1.0
        self.var_inc = 1.0
        self.activity = [0.0] * (n + 1)
        self.polarity = [1] * (n + 1)
        self.seen = [False] * (n + 1)
        self.ok = True
        self.stats = SolverStats()
        self.rng = random.Random(self.config.seed)

        restricted = {v for v in (self.config.restrict_decisions_to or ()) if 1 <= v <= n}
        self.tier = [1] * (n + 1)
        for v in restricted:
            self.tier[v] = 0
        self.restricted = self.config.restrict_decisions_to is not None
        # with a restriction only its variables (and the caller's extras) are branched on
        decision = set(restricted) if self.restricted else cnf.occurring_vars()
        self.occurring = sorted(cnf.occurring_vars()) if self.restricted else []
        for v in extra_decision_vars:
            self._check_var(v)
            decision.add(v)
        self.decision_vars = sorted(decision)
        self.is_decision = [False] * (n + 1)
        for v in self.decision_vars:
            self.is_decision[v] = True
        if self.config.input_priority:
            for v in cnf.input_vars:
                self.activity[v] = self.config.input_activity
        self._rebuild_heap()

        for clause in cnf.clauses:
            if not self.add_clause(clause.lits):
                break
        self.max_learnts = max(
            len(cnf.clauses) * self.config.learnt_size_factor, float(self.config.min_learnts)
        )

    # -- bookkeeping ---------------------------------------------------------

    def _check_var(self, v: int) -> None:
        if not 1 <= v <= self.num_vars:
            raise CnfInputError(f"variable {v} outside 1..{self.num_vars}")

    def _rebuild_heap(self) -> None:
        values, tier, act = self.values, self.tier, self.activity
        self.heap = [(tier[v], -act[v], v) for v in self.decision_vars if values[2 * v] == 0]
        heapq.heapify(self.heap)

    def _decision_level(self) -> int:
        return len(self.trail_lim)

    def _enqueue(self, code: int, reason: list[int] | None) -> None:
        self.values[code] = 1
        self.values[code ^ 1] = -1
        v = code >> 1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(code)

    def _attach(self, clause: list[int]) -> None:
        self.watches[clause[0]].append(clause)
        self.watches[clause[1]].append(clause)

    def add_clause(self, lits: Iterable[int]) -> bool:
        """Add a clause at decision level 0; returns False once the formula is UNSAT."""
        if not self.ok:
            return False
        if self.trail_lim:
            self._cancel_until(0)
        codes: list[int] = []
        for lit in lits:
            self._check_var(abs(lit))
            code = _code(lit)
            value = self.values[code]
            if value == 1 or (code ^ 1) in codes:
                return True
            if value == -1 or code in codes:
                continue
            codes.append(code)
        if not codes:
            self.ok = False
            return False
        if len(codes) == 1:
            self._enqueue(codes[0], None)
            if self._propagate() is not None:
                self.ok = False
            return self.ok
        self._attach(codes)
        return True

    # -- propagation ---------------------------------------------------------

    def _propagate(self) -> list[int] | None:
        values, watches, trail = self.values, self.watches, self.trail
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            self.stats.propagations += 1
            false_lit = p ^ 1
            ws = watches[false_lit]
            i = j = 0
            end = len(ws)
            while i < end:
                clause = ws[i]
                i += 1
                if clause[0] == false_lit:
                    clause[0], clause[1] = clause[1], false_lit
                first = clause[0]
                if values[first] == 1:
                    ws[j] = clause
                    j += 1
                    continue
                for k in range(2, len(clause)):
                    if values[clause[k]] != -1:
                        clause[1], clause[k] = clause[k], false_lit
                        watches[clause[1]].append(clause)
                        break
                else:
                    ws[j] = clause
                    j += 1
                    if values[first] == -1:
                        while i < end:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                        del ws[j:]
                        self.qhead = len(trail)
                        return clause
                    self._enqueue(first, clause)
            del ws[j:]
        return None

    # -- conflict analysis ---------------------------------------------------

    def _bump_var(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > _RESCALE_VAR:
            for u in range(1, self.num_vars + 1):
                act[u] *= 1 / _RESCALE_VAR
            self.var_inc *= 1 / _RESCALE_VAR
            self._rebuild_heap()
        elif self.is_decision[v] and self.values[2 * v] == 0:
            heapq.heappush(self.heap, (self.tier[v], -act[v], v))

    def _bump_clause(self, clause: list[int]) -> None:
        key = id(clause)
        if key not in self.clause_activity:
            return
        self.clause_activity[key] += self.cla_inc
        if self.clause_activity[key] > _RESCALE_CLAUSE:
            for k in self.clause_activity:
                self.clause_activity[k] *= 1 / _RESCALE_CLAUSE
            self.cla_inc *= 1 / _RESCALE_CLAUSE

    def _analyze(self, confl: list[int]) -> tuple[list[int], int]:
        seen, level, reason, trail = self.seen, self.level, self.reason, self.trail
        current = len(self.trail_lim)
        learnt: list[int] = [0]
        to_clear: list[int] = []
        path = 0
        p = -1
        idx = len(trail) - 1
        clause: list[int] | None = confl
        while True:
            assert clause is not None
            self._bump_clause(clause)
            for q in clause if p == -1 else clause[1:]:
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    self._bump_var(v)
                    seen[v] = True
                    to_clear.append(v)
                    if level[v] >= current:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            clause = reason[p >> 1]
            seen[p >> 1] = False
            path -= 1
            if path == 0:
                break
        learnt[0] = p ^ 1

        minimized = [learnt[0]]
        for q in learnt[1:]:
            r = reason[q >> 1]
            if r is None or any(not seen[x >> 1] and level[x >> 1] > 0 for x in r[1:]):
                minimized.append(q)
        for v in to_clear:
            seen[v] = False

        if len(minimized) == 1:
            return minimized, 0
        best = 1
        for k in range(2, len(minimized)):
            if level[minimized[k] >> 1] > level[minimized[best] >> 1]:
                best = k
        minimized[1], minimized[best] = minimized[best], minimized[1]
        return minimized, level[minimized[1] >> 1]

    def _cancel_until(self, target: int) -> None:
        if len(self.trail_lim) <= target:
            return
        values, reason, polarity = self.values, self.reason, self.polarity
        stop = self.trail_lim[target]
        for i in range(len(self.trail) - 1, stop - 1, -1):
            code = self.trail[i]
            v = code >> 1
            values[code] = 0
            values[code ^ 1] = 0
            reason[v] = None
            polarity[v] = code & 1
            if self.is_decision[v]:
                heapq.heappush(self.heap, (self.tier[v], -self.activity[v], v))
        del self.trail[stop:]
        del self.trail_lim[target:]
        self.qhead = len(self.trail)
        if len(self.heap) > 4 * len(self.decision_vars) + 1024:
            self._rebuild_heap()

    def _locked(self, clause: list[int]) -> bool:
        return self.reason[clause[0] >> 1] is clause and self.values[clause[0]] == 1

    def _reduce_db(self) -> None:
        acts = self.clause_activity
        self.learnts.sort(key=lambda c: acts[id(c)])
        half = len(self.learnts) // 2
        extra_lim = self.cla_inc / max(len(self.learnts), 1)
        keep: list[list[int]] = []
        dropped: list[list[int]] = []
        for pos, clause in enumerate(self.learnts):
            if len(clause) > 2 and not self._locked(clause) and (
                pos < half or acts[id(clause)] < extra_lim
            ):
                dropped.append(clause)
            else:
                keep.append(clause)
        if not dropped:
            return
        gone = {id(c) for c in dropped}
        for lit in {c[0] for c in dropped} | {c[1] for c in dropped}:
            self.watches[lit] = [w for w in self.watches[lit] if id(w) not in gone]
        for key in gone:
            del acts[key]
        self.learnts = keep
        logger.debug("Reduced learnt clauses to %d (dropped %d)", len(keep), len(dropped))

    # -- search --------------------------------------------------------------

    def _pick_branch(self) -> int:
        values = self.values
        if not self.config.random_decisions_disabled and self.decision_vars:
            if self.rng.random() < self.config.random_var_freq:
                v = self.rng.choice(self.decision_vars)
                if values[2 * v] == 0:
                    return v
        heap, act = self.heap, self.activity
        while heap:
            _, neg_act, v = heapq.heappop(heap)
            if values[2 * v] != 0 or -neg_act != act[v]:
                continue
            return v
        return 0

    def _decision_code(self, v: int) -> int:
        phase = self.config.phase
        if phase is Phase.POSITIVE:
            return 2 * v
        if phase is Phase.SAVED:
            return 2 * v + self.polarity[v]
        return 2 * v + 1

    def _out_of_budget(self, deadline: float | None, cancel: CancelToken | None) -> Status | None:
        if cancel is not None and cancel.is_set():
            return Status.INTERRUPTED
        limit = self.config.max_conflicts
        if limit is not None and self.stats.conflicts >= limit:
            return Status.BUDGET_EXCEEDED
        if deadline is not None and time.perf_counter() >= deadline:
            return Status.BUDGET_EXCEEDED
        return None

    def _restart_limit(self, restarts: int) -> float:
        policy = self.config.restart
        if policy is RestartPolicy.OFF:
            return math.inf
        if policy is RestartPolicy.LUBY:
            return self.config.restart_first * luby(2, restarts)
        return self.config.restart_first * self.config.restart_inc**restarts

    def _search(
        self,
        nof_conflicts: float,
        assumptions: Sequence[int],
        deadline: float | None,
        cancel: CancelToken | None,
    ) -> Status | None:
        conflicts_here = 0
        while True:
            confl = self._propagate()
            if confl is not None:
                self.stats.conflicts += 1
                conflicts_here += 1
                if not self.trail_lim:
                    self.ok = False
                    return Status.UNSAT
                learnt, back = self._analyze(confl)
                self._cancel_until(back)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self._attach(learnt)
                    self.learnts.append(learnt)
                    self.clause_activity[id(learnt)] = 0.0
                    self._bump_clause(learnt)
                    self._enqueue(learnt[0], learnt)
                self.stats.learnt_clauses += 1
                if not self.config.decay_disabled:
                    self.var_inc /= self.config.var_decay
                self.cla_inc /= self.config.clause_decay
                stop = self._out_of_budget(deadline, cancel)
                if stop is not None:
                    return stop
                continue

            if conflicts_here >= nof_conflicts:
                self.stats.restarts += 1
                self._cancel_until(0)
                return None
            if len(self.learnts) - len(self.trail) >= self.max_learnts:
                self._reduce_db()

            next_code = 0
            while len(self.trail_lim) < len(assumptions):
                p = assumptions[len(self.trail_lim)]
                if self.values[p] == 1:
                    self.trail_lim.append(len(self.trail))
                elif self.values[p] == -1:
                    return Status.UNSAT
                else:
                    next_code = p
                    break
            if not next_code:
                v = self._pick_branch()
                if not v:
                    if self.restricted:
                        self._require_total()
                    return Status.SAT
                self.stats.decisions += 1
                if self.stats.decisions % _CHECK_EVERY_DECISIONS == 0:
                    stop = self._out_of_budget(deadline, cancel)
                    if stop is not None:
                        heapq.heappush(self.heap, (self.tier[v], -self.activity[v], v))
                        return stop
                next_code = self._decision_code(v)
            self.trail_lim.append(len(self.trail))
            self._enqueue(next_code, None)

    def _require_total(self) -> None:
        values = self.values
        for v in self.occurring:
            if values[2 * v] == 0:
                raise DecisionRestrictionError(
                    f"variable {v} is left unassigned once the allowed decision variables are set"
                )

    def _assumption_codes(self, assumptions: Assumptions) -> list[int]:
        if assumptions is None:
            return []
        lits = assumptions.lits() if isinstance(assumptions, PartialAssignment) else tuple(assumptions)
        codes = []
        for lit in lits:
            if lit == 0:
                raise CnfInputError("0 is not a literal")
            self._check_var(abs(lit))
            codes.append(_code(lit))
        return codes

    def _model(self) -> PartialAssignment:
        values = self.values
        return PartialAssignment({v: values[2 * v] == 1 for v in range(1, self.num_vars + 1)})

    def solve(
        self,
        assumptions: Assumptions = None,
        *,
        cancel: CancelToken | None = None,
        deadline: float | None = None,
    ) -> SolveResult:
        """Search for a model extending ``assumptions``.

        ``deadline`` is an absolute :func:`time.perf_counter` value; by
        default it is derived from ``config.max_time``. Counters in the
        returned stats are cumulative over this instance, ``wall_time``
        covers this call only.
        """
        start = time.perf_counter()
        if deadline is None and self.config.max_time is not None:
            deadline = start + self.config.max_time
        codes = self._assumption_codes(assumptions)

        status: Status | None = Status.UNSAT if not self.ok else None
        restarts = 0
        while status is None:
            status = self._search(self._restart_limit(restarts), codes, deadline, cancel)
            restarts += 1
            self.max_learnts *= self.config.learnt_size_inc

        model = None
        if status is Status.SAT:
            model = self._model()
            self._check_model(model, codes)
        self._cancel_until(0)

        stats = self.stats.copy()
        stats.wall_time = time.perf_counter() - start
        if status in (Status.BUDGET_EXCEEDED, Status.INTERRUPTED):
            logger.debug("Solver stopped: %s after %d conflicts", status.value, stats.conflicts)
        return SolveResult(status, model, stats)

    def _check_model(self, model: PartialAssignment, codes: Sequence[int]) -> None:
        if not evaluate(self.cnf, model):
            raise SolverInconsistencyError("model does not satisfy the formula")
        for code in codes:
            if model[code >> 1] != (not code & 1):
                raise SolverInconsistencyError("model violates an assumption")


def _assumption_vars(assumptions: Assumptions) -> list[int]:
    if assumptions is None:
        return []
    if isinstance(assumptions, PartialAssignment):
        return list(assumptions.bindings)
    return [abs(lit) for lit in assumptions]


def solve(
    cnf: Cnf,
    assumptions: Assumptions = None,
    config: SolverConfig | None = None,
    *,
    cancel: CancelToken | None = None,
) -> SolveResult:
    """Solve ``cnf`` under ``assumptions`` with a fresh solver instance."""
    engine = Solver(cnf, config, extra_decision_vars=_assumption_vars(assumptions))
    return engine.solve(assumptions, cancel=cancel)


def solve_all(
    cnf: Cnf,
    config: SolverConfig | None = None,
    project_to: Iterable[int] = (),
    limit: int | None = None,
    *,
    assumptions: Assumptions = None,
    cancel: CancelToken | None = None,
) -> AllSatResult:
    """Enumerate models projected to ``project_to`` with blocking clauses.

    The time and conflict budgets of ``config`` cover the whole enumeration.
    ``complete`` is set when the model set is known to be exhaustive.
    """
    project = tuple(project_to)
    if not project:
        raise CnfInputError("project_to must not be empty")
    if len(set(project)) != len(project):
        raise CnfInputError("project_to variables must be distinct")
    engine = Solver(
        cnf, config, extra_decision_vars=list(project) + _assumption_vars(assumptions)
    )
    start = time.perf_counter()
    deadline = start + engine.config.max_time if engine.config.max_time else None

    models: list[PartialAssignment] = []
    truncated = False
    complete = False
    while True:
        result = engine.solve(assumptions, cancel=cancel, deadline=deadline)
        status = result.status
        if status is Status.SAT:
            assert result.model is not None
            projected = result.model.restrict(project)
            models.append(projected)
            if limit is not None and len(models) >= limit:
                truncated = True
                break
            blocking = [-v if projected[v] else v for v in project]
            if not engine.add_clause(blocking):
                status = Status.UNSAT
                complete = True
                break
            continue
        complete = status is Status.UNSAT
        break

    stats = engine.stats.copy()
    stats.wall_time = time.perf_counter() - start
    logger.debug("Enumerated %d projected models (complete=%s)", len(models), complete)
    return AllSatResult(tuple(models), truncated, complete, status, stats)


def propagate_only(cnf: Cnf, pa: PartialAssignment) -> PartialAssignment | Conflict:
    """Unit-propagation fixed point of ``cnf`` under ``pa``."""
    engine = Solver(cnf, SolverConfig())
    if not engine.ok:
        return Conflict()
    for var, value in pa.bindings.items():
        engine._check_var(var)
        code = 2 * var + (0 if value else 1)
        if engine.values[code] == -1:
            return Conflict()
        if engine.values[code] == 0:
            engine._enqueue(code, None)
    confl = engine._propagate()
    if confl is not None:
        return Conflict(tuple(_lit(code) for code in confl))
    values = engine.values
    return PartialAssignment(
        {v: values[2 * v] == 1 for v in range(1, cnf.num_vars + 1) if values[2 * v] != 0}
    )
