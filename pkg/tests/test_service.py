import pytest

from streamsat import service
from streamsat.decomposition import (
    AbortReason,
    DecompositionSet,
    PredictionOutcome,
    PredictionParams,
    PredictionStatus,
)
from streamsat.generators import A51, GIFFORD, is_valid_key, keystream_bits
from streamsat.runner import AttackConfig
from streamsat.encoder import bind_keystream, encode
from streamsat.solver import SolverConfig, Status


def test_random_key_is_seeded_and_valid(summation_toy):
    assert service.random_key(A51, seed=5) == service.random_key(A51, seed=5)
    for seed in range(10):
        assert is_valid_key(summation_toy, service.random_key(summation_toy, seed=seed))


def test_observed_keystream_sources():
    bits, planted = service.observed_keystream(A51, 4, keystream="010110")
    assert bits == (0, 1, 0, 1) and planted is None
    bits, planted = service.observed_keystream(A51, 8, key_hex="2C1A7:3D35B9:EEAF2")
    assert bits == keystream_bits(A51, planted, 8)
    with pytest.raises(ValueError):
        service.observed_keystream(A51, 10, keystream="0101")


def test_keystream_run_gifford_hex():
    data = service.keystream_run(GIFFORD, "01:00:02:00:03:00:00:04", 8)
    assert data["hex"] == "0A"
    assert data["keystream"] == "00001010"


def test_verify_run():
    good = service.keystream_run(A51, "2C1A7:3E9ADC:EEAF2", 64)["keystream"]
    assert service.verify_run(A51, "2C1A7:3D35B9:EEAF2", good)["verified"] is True
    assert service.verify_run(A51, "2C1A7:3D35B9:EEAF3", good)["verified"] is False


def test_encode_run_binds_units(threshold_toy):
    enc, unbound = service.encode_run(threshold_toy, 5)
    _, bound = service.encode_run(threshold_toy, 5, (1, 0, 0, 1, 1))
    assert unbound is enc.cnf
    assert bound.num_clauses - unbound.num_clauses == 5


def test_prediction_grid(monkeypatch, threshold_toy):
    def fake_predict(cnf, x, params, solver_config, workers=1):
        T = float(x.power * 10 + len(cnf.keystream_vars))
        return PredictionOutcome(x, T, T, PredictionStatus.EXACT, 2**x.power, 2**x.power)

    monkeypatch.setattr(service, "predict", fake_predict)
    keystream = keystream_bits(threshold_toy, (1,) * 12, 10)
    grid = service.prediction_grid(
        threshold_toy,
        keystream,
        DecompositionSet((1, 2, 3)),
        [2, 3, 4],
        [8, 10],
        PredictionParams(),
        SolverConfig(),
    )
    assert len(grid["rows"]) == 6
    lines = service.format_grid(grid)
    assert lines[0] == "power\t8\t10"
    assert lines[1] == "2\t28\t30"
    assert lines[3] == "4\t48\t50"
    with pytest.raises(ValueError):
        service.prediction_grid(
            threshold_toy, keystream, DecompositionSet((1,)), [1], [12], PredictionParams(), SolverConfig()
        )


def test_format_grid_marks_undefined():
    grid = {
        "powers": [5],
        "lengths": [8],
        "rows": [{"power": 5, "length": 8, "T": None}],
    }
    assert service.format_grid(grid)[1] == "5\tundefined"


def test_optimize_run_summary(monkeypatch):
    from streamsat.decomposition import MinimizationTrace

    trace = MinimizationTrace()
    x = DecompositionSet((1, 2))
    trace.add(PredictionOutcome(x, 4.0, 4.0, PredictionStatus.EXACT, 4, 4), True, 4.0)
    trace.add(
        PredictionOutcome(x.without_last(), 9.0, None, PredictionStatus.UNDEFINED, 1, 2, AbortReason.DOMINATED),
        False,
        4.0,
    )
    monkeypatch.setattr(service, "minimize", lambda *args, **kwargs: (x, trace))
    data, got = service.optimize_run(None, x, "remove-last", PredictionParams(), SolverConfig())
    assert got is trace
    assert data["best"] == "1-2"
    assert data["T"] == 4.0
    assert data["evaluations"] == 2
    assert data["dominated"] == 1


def test_attack_run_reports_keys(a51_reduced):
    key = (1, 0, 1, 1, 0) + (0, 1, 1, 0, 1, 0) + (1, 1, 0, 0, 1, 0, 1)
    keystream = keystream_bits(a51_reduced, key, 30)
    data, result = service.attack_run(
        a51_reduced, keystream, DecompositionSet.parse("1-3,6-7"), AttackConfig(k=1, backend="thread")
    )
    assert data["status"] == "found"
    assert data["verified"] == [True]
    assert len(data["keys"]) == 1
    assert data["keys"][0].count(":") == 2


def test_parse_int_list():
    assert service.parse_int_list("128,144") == [128, 144]
    assert service.parse_int_list("29-31, 40") == [29, 30, 31, 40]


def test_solve_run_on_a_cell(threshold_toy):
    key = (1, 0, 1) + (0, 1, 1, 0) + (1, 1, 0, 0, 1)
    enc = encode(threshold_toy, 24)
    cnf = bind_keystream(enc, keystream_bits(threshold_toy, key, 24))
    x = DecompositionSet((1, 2, 3))
    data, result = service.solve_run(cnf, x, key[:3], SolverConfig())
    assert result.status is Status.SAT
    assert data["status"] == "sat"
    assert data["inputs"][:3] == "101"

    data, result = service.solve_run(cnf, DecompositionSet(), (), SolverConfig())
    assert data["status"] == "sat"
    with pytest.raises(ValueError):
        service.solve_run(cnf, x, (1, 0), SolverConfig())
