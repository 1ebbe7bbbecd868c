"""Shared test helpers: benchmark CSV discovery.

The benchmark CSVs are not shipped with the repository. Tests that need
them look under $ESAD_DATA_DIR, then <repo>/data, and skip with a pointer
to the README when a file is absent.
"""

import os
from pathlib import Path

import pytest

from esad.data import RawDataset, load_benchmark

REPO_ROOT = Path(__file__).resolve().parent.parent

BENCHMARK_NAMES = (
    "arrhythmia",
    "cardio",
    "satellite",
    "satimage-2",
    "shuttle",
    "thyroid",
)


def benchmark_dir() -> Path:
    env = os.environ.get("ESAD_DATA_DIR")
    return Path(env) if env else REPO_ROOT / "data"


def benchmark_csv(name: str) -> Path:
    return benchmark_dir() / f"{name}.csv"


def require_benchmark(name: str) -> RawDataset:
    """Load a benchmark CSV or skip the calling test with a clear reason."""
    path = benchmark_csv(name)
    if not path.is_file():
        pytest.skip(
            f"benchmark CSV not found: {path} (set ESAD_DATA_DIR or place "
            "converted CSVs under data/; see README section Benchmark data)"
        )
    return load_benchmark(name, path)
