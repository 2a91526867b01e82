import itertools
import sys

import numpy as np
import pytest

from lfpinfer.capacity import (
    Capacity,
    OutcomeSpace,
    RandomSetDistribution,
    _bit_table,
    containment_from_random_set,
)


def space(m: int) -> OutcomeSpace:
    return OutcomeSpace(tuple("abcdefghijklmnopqrst"[:m]))


def random_belief(rng: np.random.Generator, m: int, max_atoms: int = 6) -> Capacity:
    """Containment functional of a random set with a few random focal sets."""
    k = int(rng.integers(1, max_atoms + 1))
    masks = rng.integers(1, 1 << m, size=k)
    w = rng.dirichlet(np.ones(k))
    return containment_from_random_set(RandomSetDistribution(space(m), masks, w))


def core_vertices(c: Capacity) -> np.ndarray:
    """Brute-force vertices of the core: every square subsystem of tight constraints."""
    m = c.m
    table = _bit_table(m)[1:-1].astype(float)
    rhs = np.asarray(c.values[1:-1])
    rows = np.vstack([table, np.eye(m)])
    b = np.concatenate([rhs, np.zeros(m)])
    out = []
    for sub in itertools.combinations(range(len(rows)), m - 1):
        a = np.vstack([rows[list(sub)], np.ones(m)])
        if abs(np.linalg.det(a)) < 1e-10:
            continue
        q = np.linalg.solve(a, np.append(b[list(sub)], 1.0))
        if np.all(q >= -1e-10) and np.all(table @ q >= rhs - 1e-10):
            out.append(q)
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
