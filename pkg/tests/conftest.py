import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from specgap.chain import random_reversible  # noqa: E402
from specgap.decomposition import Partition  # noqa: E402

_VERDICTS: list[str] = []


def verdict(label: str, ok: bool, detail: str = "") -> None:
    """Print one pass/fail line for an acceptance criterion and remember it for the summary."""
    line = f"{label}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
    print(line)
    _VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


def random_partition(n: int, rng: np.random.Generator) -> Partition:
    m = int(rng.integers(1, min(n, 6) + 1))
    labels = np.concatenate([np.arange(m), rng.integers(0, m, size=n - m)])
    rng.shuffle(labels)
    return Partition.from_labels(labels)


def corpus(count: int, max_states: int = 40, seed: int = 2024):
    """Deterministic (chain, partition) pairs of varied size and sparsity."""
    rng = np.random.default_rng(seed)
    for t in range(count):
        n = int(rng.integers(2, max_states + 1))
        density = float(rng.uniform(0.25, 1.0))
        chain = random_reversible(n, density, seed=seed * 1000 + t)
        yield chain, random_partition(n, rng)


@pytest.fixture
def path4():
    """Lazy walk on a 4-path: P(i, i+-1) = 1/4, remaining mass on the self-loop."""
    from specgap.chain import new_chain

    P = np.array([
        [0.75, 0.25, 0.0, 0.0],
        [0.25, 0.5, 0.25, 0.0],
        [0.0, 0.25, 0.5, 0.25],
        [0.0, 0.0, 0.25, 0.75],
    ])
    return new_chain(["1", "2", "3", "4"], P)
