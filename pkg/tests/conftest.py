import os
from pathlib import Path

import numpy as np
import pytest

from predtoll import optimizer
from predtoll.config import load_config
from predtoll.closed_loop import ScenarioInputs

ROOT = Path(__file__).resolve().parents[1]
TOY_CONFIG = ROOT / "configs" / "toy" / "toy.yaml"


class OptimizerLog:
    """Every optimize() call made during the session, kept for suite-wide checks."""

    def __init__(self):
        self.runs = []

    def __call__(self, constraints, result):
        self.runs.append(
            {
                "constraints": constraints,
                "evaluated": [g.copy() for g in result.evaluated],
                "best_trace": list(result.best_trace),
                "trace": list(result.trace),
            }
        )


OPTIMIZER_LOG = OptimizerLog()


def pytest_configure(config):
    optimizer.add_observer(OPTIMIZER_LOG)


def pytest_collection_modifyitems(config, items):
    # suite-wide criteria read the optimizer log, so acceptance runs last
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance" in it.nodeid)


@pytest.fixture(scope="session")
def optimizer_log():
    return OPTIMIZER_LOG


@pytest.fixture(scope="session")
def toy_config():
    return load_config(TOY_CONFIG)


@pytest.fixture(scope="session")
def toy_inputs(toy_config):
    return ScenarioInputs.from_config(toy_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_with(*overrides):
    """The toy config with ``key=value`` overrides applied."""
    return load_config(TOY_CONFIG, overrides)


CPU_COUNT = os.cpu_count() or 1


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
