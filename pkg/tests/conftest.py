import time
from contextlib import contextmanager

import numpy as np
import pytest

from kgic.graph import EntityMeta, build_graph

ACCEPTANCE_RESULTS: list[tuple[str, str, float]] = []


@pytest.fixture
def criterion():
    """Times an acceptance criterion, enforces its runtime budget, and
    records a PASS/FAIL line for the terminal summary."""

    @contextmanager
    def run(name: str, budget_seconds: float):
        start = time.monotonic()
        try:
            yield
        except BaseException:
            ACCEPTANCE_RESULTS.append((name, "FAIL", time.monotonic() - start))
            raise
        elapsed = time.monotonic() - start
        if elapsed > budget_seconds:
            ACCEPTANCE_RESULTS.append((name, "FAIL (over budget)", elapsed))
            raise AssertionError(
                f"{name}: runtime {elapsed:.1f}s exceeds the {budget_seconds:.0f}s budget"
            )
        ACCEPTANCE_RESULTS.append((name, "PASS", elapsed))

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, elapsed in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"ACCEPTANCE {name}: {status} ({elapsed:.2f}s)")


@pytest.fixture
def toy_graph():
    """10 entities, 2 classes, mirroring the weighted class-frequency worked
    example: population scores 5/6 for the city+capital entity."""
    triples = [
        ("berlin", "population", "n1"),
        ("hamburg", "population", "n2"),
        ("munich", "population", "n3"),
        ("paris", "population", "n4"),
        ("berlin", "mayor", "giffey"),
        ("cologne", "mayor", "giffey"),
        ("giffey", "born_in", "cologne"),
    ]
    metadata = {
        "berlin": EntityMeta(("city", "capital"), "capital of Germany"),
        "hamburg": EntityMeta(("city",), "port city in northern Germany"),
        "munich": EntityMeta(("city",), "capital of Bavaria"),
        "cologne": EntityMeta(("city",), "city on the Rhine"),
        "paris": EntityMeta(("capital",), "capital of France"),
    }
    return build_graph(triples, metadata)


@pytest.fixture
def chain_graph():
    """Six entities in a directed chain a0 -> a1 -> ... -> a5."""
    triples = [(f"a{i}", "next", f"a{i+1}") for i in range(5)]
    return build_graph(triples)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
