"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's search code: 4x4 boards
are enumerated row by row from permutations and checked with plain sets.
"""

import itertools
import math
from collections import Counter

import numpy as np
import pytest

from vizsudoku.csp import generate_dataset
from vizsudoku.grid import Grid, ProbField
from vizsudoku.simulate import simulate_fields, tune_to_accuracy


def naive_4x4_solutions():
    """Every complete valid 4x4 board as a tuple of 16 digits."""
    perms = list(itertools.permutations((1, 2, 3, 4)))
    out = []

    def ok(rows):
        for col in range(4):
            vals = [r[col] for r in rows]
            if len(set(vals)) != len(vals):
                return False
        for br in range(0, len(rows), 2):
            block = rows[br:br + 2]
            if len(block) < 2:
                continue
            for bc in (0, 2):
                if len({block[0][bc], block[0][bc + 1], block[1][bc], block[1][bc + 1]}) != 4:
                    return False
        return True

    def extend(rows):
        if len(rows) == 4:
            out.append(tuple(v for r in rows for v in r))
            return
        for p in perms:
            if ok(rows + [p]):
                extend(rows + [p])

    extend([])
    return out


SOLUTIONS_4x4 = naive_4x4_solutions()


def brute_objective(costs: np.ndarray, cells, board) -> float:
    return float(sum(costs[i, board[c] - 1] for i, c in enumerate(cells)))


def brute_min(costs, cells, allowed=None):
    """Minimum objective over all 4x4 boards whose given digits lie in ``allowed``."""
    best = math.inf
    for b in SOLUTIONS_4x4:
        if allowed is not None and any(b[c] not in allowed[i] for i, c in enumerate(cells)):
            continue
        best = min(best, brute_objective(costs, cells, b))
    return best


def brute_unique_optimum(costs, cells, allowed=None):
    """Cheapest board whose projection on ``cells`` has exactly one completion."""
    proj = Counter(tuple(b[c] for c in cells) for b in SOLUTIONS_4x4)
    best, arg = math.inf, None
    for b in SOLUTIONS_4x4:
        if proj[tuple(b[c] for c in cells)] != 1:
            continue
        if allowed is not None and any(b[c] not in allowed[i] for i, c in enumerate(cells)):
            continue
        v = brute_objective(costs, cells, b)
        if v < best:
            best, arg = v, b
    return best, arg


def random_4x4_field(rng: np.random.Generator, min_givens=3, max_givens=10) -> tuple[ProbField, tuple]:
    """Random 4x4 instance: true board, random given cells, noisy probabilities."""
    board = SOLUTIONS_4x4[rng.integers(len(SOLUTIONS_4x4))]
    g = int(rng.integers(min_givens, max_givens + 1))
    cells = sorted(int(c) for c in rng.choice(16, size=g, replace=False))
    probs = []
    for c in cells:
        z = rng.normal(0.0, 1.0, 4) * rng.uniform(0.3, 2.0)
        z[board[c] - 1] += rng.uniform(0.0, 2.0)
        p = np.exp(z - z.max())
        probs.append(p / p.sum())
    return ProbField(2, tuple(cells), np.array(probs)), board


def one_hot_field(solution: Grid, puzzle: Grid) -> ProbField:
    K = solution.size.digits
    cells = puzzle.given_cells
    probs = np.zeros((len(cells), K))
    for i, c in enumerate(cells):
        probs[i, solution.cells[c] - 1] = 1.0
    return ProbField(solution.size, cells, probs)


@pytest.fixture(scope="session")
def boards_200():
    return generate_dataset(3, 200, 36, 2020)


@pytest.fixture(scope="session")
def tuned_9475():
    return tune_to_accuracy(0.9475, 1.0, 0.0, K=9, seed=7)


@pytest.fixture(scope="session")
def fields_200(boards_200, tuned_9475):
    return simulate_fields(boards_200, tuned_9475)


@pytest.fixture(scope="session")
def small_boards():
    return generate_dataset(3, 12, 36, 5)


ACCEPTANCE_CRITERIA = {
    1: "hybrid1 objective equals 4x4 brute-force optimum",
    2: "hybrid2 equals brute-force optimum over unique-givens boards",
    3: "4x4 solution count is 288",
    4: "method comparison trend on 200 9x9 boards",
    5: "top-k coherence for hybrid2",
    6: "calibration properties",
    7: "feasibility invariants over randomized instances",
    8: "eval reports are byte-identical across runs",
}
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in ACCEPTANCE_CRITERIA.items():
        ok, detail = ACCEPTANCE_RESULTS.get(n, (False, "not run to completion"))
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {name}; {detail}")
