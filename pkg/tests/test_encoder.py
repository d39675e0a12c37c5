import itertools
import random
from collections import defaultdict

import pytest

from streamsat.cnf import Cnf, PartialAssignment, evaluate
from streamsat.encoder import (
    EncodingError,
    GateBuilder,
    bind_keystream,
    encode,
    encode_gifford,
    honest_assignment,
    key_assignment,
    tseitin_and,
    tseitin_majority,
    tseitin_mux,
    tseitin_threshold,
    tseitin_xor,
)
from streamsat.generators import (
    A51,
    A51Spec,
    GIFFORD,
    SUMMATION4,
    THRESHOLD5,
    LfsrSpec,
    ThresholdSpec,
    int_to_bits,
    is_valid_key,
    keystream_bits,
)
from streamsat.service import random_key
from streamsat.solver import Conflict, propagate_only, solve_all

TINY_A51 = A51Spec(
    registers=(LfsrSpec.of(2, (1, 2)), LfsrSpec.of(3, (2, 3)), LfsrSpec.of(3, (1, 3))),
    clocking_cells=(1, 2, 2),
    name="a51-tiny",
)
TINY_THRESHOLD = ThresholdSpec(
    (LfsrSpec.of(2, (1, 2)), LfsrSpec.of(3, (2, 3)), LfsrSpec.of(3, (1, 3))), name="threshold-tiny"
)


def gate_table(clauses, inputs, u):
    """Map every input valuation to the set of output values satisfying ``clauses``."""
    cnf = Cnf(max(inputs + (u,)), clauses)
    table = {}
    for values in itertools.product((False, True), repeat=len(inputs)):
        allowed = set()
        for out in (False, True):
            full = dict(zip(inputs, values))
            full[u] = out
            if evaluate(cnf, PartialAssignment(full)):
                allowed.add(out)
        table[values] = allowed
    return table


def test_tseitin_and_clauses():
    assert [c.lits for c in tseitin_and(3, 1, 2)] == [(-3, 1), (-3, 2), (3, -1, -2)]
    for values, allowed in gate_table(tseitin_and(3, 1, 2), (1, 2), 3).items():
        assert allowed == {all(values)}


@pytest.mark.parametrize("width", [1, 2, 3])
def test_tseitin_xor_truth_table(width):
    inputs = tuple(range(1, width + 1))
    u = width + 1
    for values, allowed in gate_table(tseitin_xor(u, inputs), inputs, u).items():
        assert allowed == {sum(values) % 2 == 1}


def test_tseitin_majority_truth_table():
    table = gate_table(tseitin_majority(4, 1, 2, 3), (1, 2, 3), 4)
    assert len(table) == 8
    for (a, b, c), allowed in table.items():
        assert allowed == {(a and b) or (a and c) or (b and c)}


def test_tseitin_threshold_truth_table():
    inputs = (1, 2, 3, 4, 5)
    for values, allowed in gate_table(tseitin_threshold(6, inputs, 3), inputs, 6).items():
        assert allowed == {sum(values) >= 3}
    with pytest.raises(EncodingError):
        tseitin_threshold(6, inputs, 6)


def test_tseitin_mux_truth_table():
    for (sel, t, f), allowed in gate_table(tseitin_mux(4, 1, 2, 3), (1, 2, 3), 4).items():
        assert allowed == {t if sel else f}


def test_negated_output_literal():
    # u may be a negative literal: -3 <-> (1 xor 2) means 3 <-> xnor
    for (a, b), allowed in gate_table(tseitin_xor(-3, (1, 2)), (1, 2), 3).items():
        assert allowed == {a == b}


def test_reduce_columns_counts_bits():
    builder = GateBuilder(4)
    total = builder.reduce_columns([[1, 2, 3, 4]], 3)
    cnf = Cnf(builder.num_vars, tuple(builder.clauses))
    for values in itertools.product((0, 1), repeat=4):
        result = propagate_only(cnf, PartialAssignment.from_bits((1, 2, 3, 4), values))
        assert not isinstance(result, Conflict)
        got = sum(int(result[v]) << j for j, v in enumerate(total))
        assert got == sum(values)


def test_variable_numbering(a51_reduced):
    enc = encode(a51_reduced, 5)
    n = a51_reduced.key_length
    assert enc.key_vars == tuple(range(1, n + 1))
    assert enc.keystream_vars == tuple(range(n + 1, n + 6))
    assert enc.cnf.input_vars == enc.key_vars
    assert enc.cnf.num_vars == n + 5 + enc.aux_count


@pytest.mark.parametrize("fixture", ["a51_reduced", "threshold_toy", "summation_toy"])
def test_encoding_agrees_with_simulator(fixture, request):
    generator = request.getfixturevalue(fixture)
    enc = encode(generator, 12)
    for seed in range(4):
        key = tuple((seed * 7 + i * 3 + (i * i) % 5) % 2 for i in range(generator.key_length))
        if not is_valid_key(generator, key):
            key = (0,) * generator.key_length
        full = honest_assignment(enc, key)
        assert evaluate(enc.cnf, full)
        assert full.bits(enc.keystream_vars) == keystream_bits(generator, key, 12)


def test_gifford_encoding_agrees_with_simulator():
    enc = encode(GIFFORD, 24)
    key = tuple(int_to_bits(0x0123456789ABCDEF, 64))
    full = honest_assignment(enc, key)
    assert full.bits(enc.keystream_vars) == keystream_bits(GIFFORD, key, 24)


def test_gifford_multiplier_example():
    enc = encode_gifford(8)
    key = []
    for byte in (0x01, 0x00, 0x02, 0x00, 0x03, 0x00, 0x00, 0x04):
        key.extend(int_to_bits(byte, 8))
    result = propagate_only(enc.cnf, key_assignment(enc, key))
    assert not isinstance(result, Conflict)
    assert result.bits(enc.keystream_vars) == int_to_bits(0x0A, 8)


def test_gifford_rejects_partial_bytes():
    with pytest.raises(EncodingError):
        encode_gifford(12)


def test_summation_blocks_invalid_carry(summation_toy):
    enc = encode(summation_toy, 4)
    key = (1, 1) + (0,) * 12
    with pytest.raises(EncodingError):
        honest_assignment(enc, key)


def test_bind_keystream_adds_units(threshold_toy):
    enc = encode(threshold_toy, 6)
    bound = bind_keystream(enc, (1, 0, 1, 1, 0, 0))
    assert bound.num_clauses == enc.cnf.num_clauses + 6
    assert bound.input_vars == enc.cnf.input_vars
    with pytest.raises(EncodingError):
        bind_keystream(enc, (0,) * 7)


def brute_force_preimages(generator, keystream):
    found = set()
    for key in itertools.product((0, 1), repeat=generator.key_length):
        if is_valid_key(generator, key) and keystream_bits(generator, key, len(keystream)) == keystream:
            found.add(key)
    return found


@pytest.mark.parametrize("generator", [TINY_A51, TINY_THRESHOLD])
def test_parsimonious_encoding(generator):
    length = 5
    key = tuple(i % 2 for i in range(generator.key_length))
    keystream = keystream_bits(generator, key, length)
    enc = encode(generator, length)
    cnf = bind_keystream(enc, keystream)

    expected = brute_force_preimages(generator, keystream)
    keys = solve_all(cnf, project_to=enc.key_vars)
    assert keys.complete
    assert {m.bits(enc.key_vars) for m in keys.models} == expected

    everything = solve_all(cnf, project_to=range(1, cnf.num_vars + 1))
    assert everything.complete
    assert len(everything.models) == len(expected)


def test_parsimonious_summation(summation_toy):
    length = 6
    key = (0, 1) + (1, 0, 1) + (0, 1, 1, 0) + (1, 1, 0, 0, 1)
    keystream = keystream_bits(summation_toy, key, length)
    enc = encode(summation_toy, length)
    result = solve_all(bind_keystream(enc, keystream), project_to=range(1, enc.cnf.num_vars + 1))
    assert result.complete
    projected = {m.bits(enc.key_vars) for m in result.models}
    assert len(projected) == len(result.models)
    assert projected == brute_force_preimages(summation_toy, keystream)


def keystream_classes(generator, length):
    classes = defaultdict(set)
    for key in itertools.product((0, 1), repeat=generator.key_length):
        if is_valid_key(generator, key):
            classes[keystream_bits(generator, key, length)].add(key)
    return classes


def check_key_projection(generator, keystreams, classes, length):
    enc = encode(generator, length)
    for keystream in keystreams:
        result = solve_all(bind_keystream(enc, keystream), project_to=enc.key_vars)
        assert result.complete
        found = [m.bits(enc.key_vars) for m in result.models]
        assert len(found) == len(classes[keystream])
        assert set(found) == classes[keystream]


def test_key_projection_counts_match_preimages(threshold_toy):
    length = 2 * threshold_toy.key_length
    classes = keystream_classes(threshold_toy, length)
    keystreams = random.Random(5).sample(sorted(classes), 12)
    check_key_projection(threshold_toy, keystreams, classes, length)


@pytest.mark.slow
def test_key_projection_counts_over_whole_keyspace(threshold_toy, a51_reduced):
    length = 2 * threshold_toy.key_length
    classes = keystream_classes(threshold_toy, length)
    check_key_projection(threshold_toy, sorted(classes), classes, length)

    length = 2 * a51_reduced.key_length
    classes = keystream_classes(a51_reduced, length)
    keystreams = random.Random(6).sample(sorted(classes), 400)
    # plus every class holding more than one key
    keystreams += [ks for ks, keys in classes.items() if len(keys) > 1 and ks not in keystreams]
    check_key_projection(a51_reduced, keystreams, classes, length)


def check_honest_assignments(generator, length, seeds):
    enc = encode(generator, length)
    for seed in seeds:
        key = random_key(generator, seed)
        full = honest_assignment(enc, key)
        bound = bind_keystream(enc, keystream_bits(generator, key, length))
        assert len(full) == bound.num_vars
        assert evaluate(bound, full)


FULL_SIZE = [A51, THRESHOLD5, SUMMATION4, GIFFORD]


@pytest.mark.parametrize("generator", FULL_SIZE, ids=lambda g: g.name)
def test_full_size_keys_determine_every_variable(generator):
    check_honest_assignments(generator, 64, range(3))


@pytest.mark.slow
@pytest.mark.parametrize("generator", FULL_SIZE, ids=lambda g: g.name)
def test_full_size_keys_determine_every_variable_at_length_144(generator):
    check_honest_assignments(generator, 144, range(1000))
