"""Shared fixtures: the benchmark hardware profile and the bundled programs."""
import pytest

from config import PROGRAMS_DIR
from core.hsl import default_spec
from core.ir_model import parse_ir

PROGRAM_NAMES = ("qos_modifier", "l2l3_simple", "l2l3_complex", "traffic_anonymizer")


@pytest.fixture(scope="session")
def benchmark_spec():
    return default_spec()


@pytest.fixture(scope="session")
def programs_dir():
    return PROGRAMS_DIR


@pytest.fixture(scope="session")
def load_program():
    cache = {}

    def load(name: str):
        if name not in cache:
            cache[name] = parse_ir((PROGRAMS_DIR / f"{name}.json").read_text(encoding="utf-8"))
        return cache[name]

    return load
