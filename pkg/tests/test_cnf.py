import itertools
import pickle

import pytest

from streamsat.cnf import (
    EMPTY_CLAUSE,
    Clause,
    Cnf,
    CnfInputError,
    Literal,
    PartialAssignment,
    evaluate,
    substitute,
)


def make_cnf(num_vars, *clauses, inputs=()):
    return Cnf(num_vars, tuple(Clause.of(*c) for c in clauses), input_vars=inputs)


def test_literal_complement_shares_variable():
    lit = Literal(3)
    assert (-lit).variable == 3
    assert (-lit).positive is False
    assert Literal.from_int(-3) == -lit
    assert (-lit).to_int() == -3


def test_literal_rejects_zero_and_negative_index():
    with pytest.raises(CnfInputError):
        Literal(0)
    with pytest.raises(CnfInputError):
        Literal.from_int(0)


def test_clause_rejects_repeats_and_complements():
    with pytest.raises(CnfInputError):
        Clause.of(1, 1)
    with pytest.raises(CnfInputError):
        Clause.of(1, -1)
    with pytest.raises(CnfInputError):
        Clause.of(1, 0)


def test_cnf_validates_ranges():
    with pytest.raises(CnfInputError):
        make_cnf(2, (1, 3))
    with pytest.raises(CnfInputError):
        Cnf(2, (), input_vars=(1, 1))
    with pytest.raises(CnfInputError):
        Cnf(2, (), input_vars=(3,))


def test_cnf_default_input_names():
    cnf = Cnf(3, (), input_vars=(2, 3))
    assert cnf.input_names == ("x1", "x2")


@pytest.mark.parametrize("name", ["key bit", "", "k\t1"])
def test_cnf_rejects_input_names_with_whitespace(name):
    with pytest.raises(CnfInputError):
        Cnf(2, (Clause.of(1, -2),), input_vars=(1, 2), input_names=(name, "k2"))


def test_partial_assignment_rejects_rebinding():
    with pytest.raises(CnfInputError):
        PartialAssignment.from_pairs([(1, True), (1, False)])
    pa = PartialAssignment.from_bits((1, 2), (1, 0))
    with pytest.raises(CnfInputError):
        pa.extend(PartialAssignment({2: True}))


def test_partial_assignment_is_hashable_and_picklable():
    pa = PartialAssignment.from_pairs([(1, True), (2, False), (3, 1)])
    assert pa == PartialAssignment({1: True, 2: False, 3: True})
    assert hash(pa) == hash(PartialAssignment({3: True, 2: False, 1: True}))
    assert pickle.loads(pickle.dumps(pa)) == pa
    assert pa.lits() == (1, -2, 3)
    assert pa.bits((3, 2)) == (1, 0)


def test_substitute_removes_satisfied_and_falsified():
    cnf = make_cnf(3, (1, 2), (-1, 3))
    result = substitute(cnf, PartialAssignment({1: True}))
    assert result.clauses == (Clause.of(3),)
    assert result.num_vars == 3


def test_substitute_empty_assignment_is_identity():
    cnf = make_cnf(3, (1, 2), (-1, 3))
    assert substitute(cnf, PartialAssignment()) == cnf


def test_substitute_conflict_gives_canonical_empty_clause():
    cnf = make_cnf(2, (1,), (-1, 2))
    result = substitute(cnf, PartialAssignment({1: False}))
    assert result.clauses == (EMPTY_CLAUSE,)
    assert result.has_empty_clause()


def test_substitute_rejects_unknown_variable():
    with pytest.raises(CnfInputError):
        substitute(make_cnf(2, (1, 2)), PartialAssignment({5: True}))


def test_substitute_is_idempotent():
    cnf = make_cnf(4, (1, 2, -3), (-1, 4), (2, 3), (-2, -4))
    pa = PartialAssignment({1: True, 3: False})
    once = substitute(cnf, pa)
    assert substitute(once, pa) == once


def test_evaluate_examples():
    assert evaluate(make_cnf(2, (1, 2)), PartialAssignment({1: False, 2: True}))
    contradiction = make_cnf(1, (1,), (-1,))
    assert not evaluate(contradiction, PartialAssignment({1: True}))
    assert not evaluate(contradiction, PartialAssignment({1: False}))


def test_evaluate_requires_bound_variables():
    with pytest.raises(CnfInputError):
        evaluate(make_cnf(2, (1, 2)), PartialAssignment({1: False}))


def test_substitution_preserves_truth_value():
    cnf = make_cnf(4, (1, 2, -3), (-1, 4), (2, 3), (-2, -4), (3, 4))
    partial = PartialAssignment({1: True, 2: False})
    reduced = substitute(cnf, partial)
    for rest in itertools.product((False, True), repeat=2):
        full = PartialAssignment({1: True, 2: False, 3: rest[0], 4: rest[1]})
        if reduced.has_empty_clause():
            expected = False
        else:
            expected = evaluate(reduced, full.restrict((3, 4)))
        assert evaluate(cnf, full) == expected


def test_clause_literal_view():
    clause = Clause.of(2, -5)
    assert clause.literals == (Literal(2), Literal(5, False))
    assert not clause.is_empty()
    assert EMPTY_CLAUSE.is_empty()
    assert make_cnf(2, (1,), ()).has_empty_clause()
