"""Configuration helpers for streamsat."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv


@dataclass
class Settings:
    """Simple settings loaded from environment variables."""

    workers: int
    seed: int
    sample_size: int
    exact_threshold: int
    backend: str
    spec_dir: Optional[str]

    @property
    def uses_threads(self) -> bool:
        return self.backend == "thread"


_settings_cache: Optional[Settings] = None


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer") from None


def _load_settings() -> Settings:
    load_dotenv()
    backend = (os.getenv("STREAMSAT_BACKEND") or "process").strip().lower()
    if backend not in ("process", "thread"):
        raise ValueError("STREAMSAT_BACKEND must be 'process' or 'thread'")
    workers = _int_env("STREAMSAT_WORKERS", os.cpu_count() or 1)
    if workers < 1:
        raise ValueError("STREAMSAT_WORKERS must be >= 1")

    return Settings(
        workers=workers,
        seed=_int_env("STREAMSAT_SEED", 0),
        sample_size=_int_env("STREAMSAT_SAMPLE_SIZE", 1000),
        exact_threshold=_int_env("STREAMSAT_EXACT_THRESHOLD", 4096),
        backend=backend,
        spec_dir=os.getenv("STREAMSAT_SPEC_DIR") or None,
    )


def get_settings() -> Settings:
    """Return cached settings loaded from the environment."""
    global _settings_cache
    if _settings_cache is None:
        _settings_cache = _load_settings()
    return _settings_cache


def reset_settings() -> None:
    """Reset cached settings (mainly for tests)."""
    global _settings_cache
    _settings_cache = None
