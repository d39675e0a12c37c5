import itertools
import random
import threading

import pytest

from streamsat import solver
from streamsat.cnf import Clause, Cnf, CnfInputError, PartialAssignment, evaluate
from streamsat.encoder import bind_keystream, encode
from streamsat.generators import keystream_bits, verify_key
from streamsat.solver import (
    Conflict,
    DecisionRestrictionError,
    Phase,
    RestartPolicy,
    Solver,
    SolverConfig,
    SolverStats,
    Status,
    luby,
    propagate_only,
    solve,
    solve_all,
)


def make_cnf(num_vars, *clauses, inputs=()):
    return Cnf(num_vars, tuple(Clause.of(*c) for c in clauses), input_vars=inputs)


def random_3sat(rng, num_vars, num_clauses):
    clauses = []
    for _ in range(num_clauses):
        variables = rng.sample(range(1, num_vars + 1), 3)
        clauses.append(Clause(tuple(v if rng.random() < 0.5 else -v for v in variables)))
    return Cnf(num_vars, tuple(clauses), input_vars=tuple(range(1, num_vars + 1)))


def brute_force_models(cnf):
    models = []
    variables = range(1, cnf.num_vars + 1)
    for values in itertools.product((False, True), repeat=cnf.num_vars):
        full = PartialAssignment(dict(zip(variables, values)))
        if evaluate(cnf, full):
            models.append(full)
    return models


def test_solve_examples():
    result = solve(make_cnf(2, (1, 2), (-1,)))
    assert result.status is Status.SAT
    assert result.model[1] is False and result.model[2] is True

    assert solve(make_cnf(1, (1,), (-1,))).status is Status.UNSAT

    result = solve(make_cnf(2, (1, 2)), assumptions=[-1, -2])
    assert result.status is Status.UNSAT


def test_empty_clause_is_unsat():
    assert solve(Cnf(1, (Clause(()),))).status is Status.UNSAT


def test_assumptions_as_partial_assignment():
    cnf = make_cnf(3, (1, 2), (-1, 3))
    result = solve(cnf, PartialAssignment({1: True}))
    assert result.status is Status.SAT
    assert result.model[3] is True


@pytest.mark.parametrize(
    "config",
    [
        SolverConfig(),
        SolverConfig.baseline(),
        SolverConfig(restart=RestartPolicy.LUBY, restart_first=2),
        SolverConfig(restart=RestartPolicy.OFF, phase=Phase.SAVED),
        SolverConfig(phase=Phase.POSITIVE, min_learnts=1, learnt_size_factor=0.01),
    ],
)
def test_random_instances_agree_with_brute_force(config):
    rng = random.Random(7)
    for _ in range(12):
        cnf = random_3sat(rng, 9, rng.randint(28, 50))
        expected = bool(brute_force_models(cnf))
        result = solve(cnf, None, config)
        assert result.satisfiable == expected
        if expected:
            assert evaluate(cnf, result.model)


def truth_table_satisfiable(cnf, assumptions=()):
    """Decide satisfiability by evaluating every assignment at once as a bitset."""
    size = 1 << cnf.num_vars
    everything = (1 << size) - 1
    columns = {}
    for v in range(1, cnf.num_vars + 1):
        block = 1 << (v - 1)
        column, width = ((1 << block) - 1) << block, 2 * block
        while width < size:
            column |= column << width
            width *= 2
        columns[v] = column
    alive = everything
    for lit in assumptions:
        alive &= columns[lit] if lit > 0 else everything ^ columns[-lit]
    for clause in cnf.clauses:
        satisfied = 0
        for lit in clause:
            satisfied |= columns[lit] if lit > 0 else everything ^ columns[-lit]
        alive &= satisfied
    return alive != 0


def check_against_truth_table(rng, instances, max_vars):
    for _ in range(instances):
        num_vars = rng.randint(3, max_vars)
        cnf = random_3sat(rng, num_vars, max(1, round(4.26 * num_vars)))
        fixed = rng.sample(range(1, num_vars + 1), rng.randint(0, 2))
        assumptions = [v if rng.random() < 0.5 else -v for v in fixed]
        result = solve(cnf, assumptions)
        assert result.satisfiable == truth_table_satisfiable(cnf, assumptions)
        if result.satisfiable:
            assert evaluate(cnf, result.model)
            assert all(result.model[abs(lit)] == (lit > 0) for lit in assumptions)


def test_truth_table_helper_on_known_formulas():
    assert truth_table_satisfiable(make_cnf(2, (1, 2), (-1,)))
    assert not truth_table_satisfiable(make_cnf(1, (1,), (-1,)))
    assert not truth_table_satisfiable(make_cnf(2, (1, 2)), [-1, -2])


def test_phase_transition_instances_agree_with_truth_table():
    check_against_truth_table(random.Random(11), 300, 12)


@pytest.mark.slow
def test_ten_thousand_instances_agree_with_truth_table():
    check_against_truth_table(random.Random(12), 10_000, 20)


def test_pigeonhole_is_unsat():
    # 4 pigeons, 3 holes; p(i, j) = 3 * i + j + 1
    clauses = [tuple(3 * i + j + 1 for j in range(3)) for i in range(4)]
    for j in range(3):
        for a, b in itertools.combinations(range(4), 2):
            clauses.append((-(3 * a + j + 1), -(3 * b + j + 1)))
    result = solve(make_cnf(12, *clauses), None, SolverConfig(restart_first=3))
    assert result.status is Status.UNSAT
    assert result.stats.conflicts > 0


def test_conflict_budget():
    clauses = [tuple(4 * i + j + 1 for j in range(4)) for i in range(6)]
    for j in range(4):
        for a, b in itertools.combinations(range(6), 2):
            clauses.append((-(4 * a + j + 1), -(4 * b + j + 1)))
    result = solve(make_cnf(24, *clauses), None, SolverConfig(max_conflicts=3))
    assert result.status is Status.BUDGET_EXCEEDED
    assert result.model is None


def test_cancel_token_interrupts():
    cancel = threading.Event()
    cancel.set()
    clauses = [tuple(4 * i + j + 1 for j in range(4)) for i in range(5)]
    for j in range(4):
        for a, b in itertools.combinations(range(5), 2):
            clauses.append((-(4 * a + j + 1), -(4 * b + j + 1)))
    result = solve(make_cnf(20, *clauses), cancel=cancel)
    assert result.status is Status.INTERRUPTED


def test_restricted_decisions_branch_only_on_key_vars(monkeypatch, a51_reduced):
    enc = encode(a51_reduced, 24)
    key = tuple(random.Random(8).randint(0, 1) for _ in range(enc.key_length))
    cnf = bind_keystream(enc, keystream_bits(a51_reduced, key, 24))
    picked = []
    original = Solver._pick_branch

    def recording(self):
        v = original(self)
        picked.append(v)
        return v

    monkeypatch.setattr(Solver, "_pick_branch", recording)
    config = SolverConfig(restrict_decisions_to=frozenset(enc.key_vars))
    result = solve(cnf, None, config)
    assert result.status is Status.SAT
    assert {v for v in picked if v} <= set(enc.key_vars)
    assert verify_key(a51_reduced, result.model.bits(enc.key_vars), keystream_bits(a51_reduced, key, 24))


def test_restriction_that_leaves_variables_open_raises():
    cnf = make_cnf(3, (2, 3), (-2, -3))
    config = SolverConfig(restrict_decisions_to=frozenset({1}))
    with pytest.raises(DecisionRestrictionError):
        solve(cnf, None, config)


def test_model_check_failure_raises(monkeypatch):
    cnf = make_cnf(2, (1, 2))
    monkeypatch.setattr(solver, "evaluate", lambda cnf, model: False)
    with pytest.raises(solver.SolverInconsistencyError):
        solve(cnf)


def test_solve_all_projection():
    cnf = make_cnf(3, (1, 2), (3,))
    result = solve_all(cnf, project_to=(1, 2))
    assert result.complete
    assert not result.truncated
    got = {m.bits((1, 2)) for m in result.models}
    assert got == {(0, 1), (1, 0), (1, 1)}


def test_solve_all_limit_and_errors():
    cnf = make_cnf(3, (1, 2), (3,))
    result = solve_all(cnf, project_to=(1, 2), limit=2)
    assert result.truncated
    assert not result.complete
    assert len(result.models) == 2
    with pytest.raises(CnfInputError):
        solve_all(cnf, project_to=())
    with pytest.raises(CnfInputError):
        solve_all(cnf, project_to=(1, 1))


def test_solve_all_matches_brute_force():
    rng = random.Random(11)
    cnf = random_3sat(rng, 8, 20)
    result = solve_all(cnf, project_to=range(1, 9))
    expected = {m.bits(range(1, 9)) for m in brute_force_models(cnf)}
    assert result.complete
    assert {m.bits(range(1, 9)) for m in result.models} == expected


def test_propagate_only():
    cnf = make_cnf(3, (-1, 2), (-2, 3))
    result = propagate_only(cnf, PartialAssignment({1: True}))
    assert result == PartialAssignment({1: True, 2: True, 3: True})

    conflict = propagate_only(make_cnf(2, (-1, 2), (-1, -2)), PartialAssignment({1: True}))
    assert isinstance(conflict, Conflict)

    partial = propagate_only(make_cnf(3, (1, 2, 3)), PartialAssignment({1: False}))
    assert partial == PartialAssignment({1: False})


def test_incremental_solver_keeps_counters():
    cnf = make_cnf(3, (1, 2), (-1, 3))
    engine = Solver(cnf)
    first = engine.solve([1])
    second = engine.solve([-1])
    assert first.status is Status.SAT and second.status is Status.SAT
    assert second.model[2] is True
    assert second.stats.decisions >= first.stats.decisions
    assert engine.add_clause([-2])
    assert engine.solve([-1]).status is Status.UNSAT


def test_luby_sequence():
    assert [luby(2, i) for i in range(15)] == [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_conflicts=0)
    with pytest.raises(ValueError):
        SolverConfig(var_decay=0)
    baseline = SolverConfig.baseline(max_conflicts=5)
    assert not baseline.input_priority and not baseline.decay_disabled
    assert baseline.max_conflicts == 5
    assert SolverConfig(max_time=2.0).capped(5.0).max_time == 2.0
    assert SolverConfig().capped(0.5).max_time == 0.5


def test_stats_text_lists_every_counter():
    stats = SolverStats(wall_time=1.5, decisions=3, conflicts=2, propagations=9, restarts=1, learnt_clauses=2)
    assert stats.as_text().splitlines() == [
        "wall_time=1.5",
        "decisions=3",
        "conflicts=2",
        "propagations=9",
        "restarts=1",
        "learnt_clauses=2",
    ]
