from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from crnt_persist.network import ReactionNetwork, parse_network

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def load_builtin(name: str) -> ReactionNetwork:
    text = (resources.files("crnt_persist") / "data" / f"{name}.crn").read_text(encoding="utf-8")
    return parse_network(text)


@pytest.fixture(scope="session")
def cycle4() -> ReactionNetwork:
    return load_builtin("cycle4")


@pytest.fixture(scope="session")
def three_linkage() -> ReactionNetwork:
    return load_builtin("three_linkage")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_weakly_reversible(rng: np.random.Generator, max_species: int = 5, max_reactions: int = 6) -> ReactionNetwork:
    """Random weakly reversible network built from disjoint directed cycles (reversible pairs count as 2-cycles)."""
    while True:
        N = int(rng.integers(1, max_species + 1))
        budget = int(rng.integers(2, max_reactions + 1))
        cycles = []
        while budget >= 2:
            length = int(rng.integers(2, min(3, budget) + 1))
            cycles.append(length)
            budget -= length
        n_complexes = sum(cycles)
        pool = {tuple(int(v) for v in rng.integers(0, 3, N)) for _ in range(4 * n_complexes)}
        if len(pool) < n_complexes:
            continue
        pool = sorted(pool)
        pick = rng.permutation(len(pool))[:n_complexes]
        complexes = [pool[i] for i in pick]
        triples = []
        at = 0
        for length in cycles:
            members = complexes[at : at + length]
            at += length
            for a, b in zip(members, members[1:] + members[:1]):
                triples.append((a, b, float(np.exp(rng.uniform(np.log(0.2), np.log(5.0))))))
        names = [f"S{i + 1}" for i in range(N)]
        return ReactionNetwork.from_reactions(names, triples, inactive_species_allowed=True)


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[name] = (report.outcome, report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        outcome, _ = _ACCEPTANCE[name]
        label = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label}  {name}")
