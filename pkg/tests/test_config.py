import pytest

from streamsat import config


def test_defaults(monkeypatch):
    monkeypatch.delenv("STREAMSAT_BACKEND", raising=False)
    monkeypatch.setattr(config.os, "cpu_count", lambda: 6)
    settings = config.get_settings()
    assert settings.workers == 6
    assert settings.seed == 0
    assert settings.sample_size == 1000
    assert settings.exact_threshold == 4096
    assert settings.backend == "process"
    assert not settings.uses_threads
    assert settings.spec_dir is None


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("STREAMSAT_WORKERS", "3")
    monkeypatch.setenv("STREAMSAT_SEED", "42")
    monkeypatch.setenv("STREAMSAT_SAMPLE_SIZE", "50")
    monkeypatch.setenv("STREAMSAT_BACKEND", "Thread")
    monkeypatch.setenv("STREAMSAT_SPEC_DIR", str(tmp_path))
    settings = config.get_settings()
    assert (settings.workers, settings.seed, settings.sample_size) == (3, 42, 50)
    assert settings.uses_threads
    assert settings.spec_dir == str(tmp_path)


def test_settings_are_cached(monkeypatch):
    monkeypatch.setenv("STREAMSAT_SEED", "1")
    first = config.get_settings()
    monkeypatch.setenv("STREAMSAT_SEED", "2")
    assert config.get_settings() is first
    config.reset_settings()
    assert config.get_settings().seed == 2


def test_invalid_values(monkeypatch):
    monkeypatch.setenv("STREAMSAT_WORKERS", "many")
    with pytest.raises(ValueError, match="STREAMSAT_WORKERS must be an integer"):
        config.get_settings()
    monkeypatch.setenv("STREAMSAT_WORKERS", "0")
    with pytest.raises(ValueError):
        config.get_settings()
    monkeypatch.setenv("STREAMSAT_WORKERS", "2")
    monkeypatch.setenv("STREAMSAT_BACKEND", "gpu")
    with pytest.raises(ValueError, match="STREAMSAT_BACKEND"):
        config.get_settings()
