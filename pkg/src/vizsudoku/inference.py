"""Solving pipelines over classifier output.

``solve_baseline`` commits to the per-cell argmax and runs plain satisfaction
search.  ``solve_hybrid1`` finds the board of maximum joint likelihood over the
given cells by branch-and-bound.  ``solve_hybrid2`` additionally rejects
assignments to the given cells that admit more than one completion, recording
each rejected assignment as a nogood and re-optimizing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .csp import DomainSet, SearchStats, choose_cell, find_second_solution, propagate_masks, solve_csp
from .grid import CostField, Grid, ProbField, serialize_grid

OBJECTIVE_TOL = 1e-9
MAX_NOGOOD_ROUNDS = 1000
# above this many digits per cell, per-mask minimum-cost tables get too large
_TABLE_DIGITS = 12


class IterationLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Nogood:
    """A forbidden assignment over the full set of given cells."""

    assignment: tuple[tuple[int, int], ...]

    @classmethod
    def from_solution(cls, solution: Grid, given_cells: Iterable[int]) -> "Nogood":
        return cls(tuple((c, solution.cells[c]) for c in sorted(given_cells)))

    @property
    def cells(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.assignment)

    def as_dict(self) -> dict[int, int]:
        return dict(self.assignment)


@dataclass
class SolveOutcome:
    solution: Grid | None
    objective: float | None
    stats: SearchStats = field(default_factory=SearchStats)
    nogoods_used: int = 0
    method: str = ""

    @property
    def feasible(self) -> bool:
        return self.solution is not None

    def to_json(self, timing: bool = True) -> dict:
        out = {"solution": serialize_grid(self.solution) if self.solution is not None else None,
               "objective": self.objective,
               "nodes": self.stats.nodes_expanded,
               "nogoods": self.nogoods_used}
        if timing:
            out["time_ms"] = self.stats.wall_time * 1000.0
        return out


def solve_baseline(p: ProbField) -> SolveOutcome:
    stats = SearchStats()
    sol = solve_csp(p.argmax_grid(), stats=stats)
    return SolveOutcome(sol, None, stats, 0, "baseline")


def restrict_top_k(c: CostField, k: int) -> DomainSet:
    """Domains keeping the ``k`` cheapest digits of each given cell (ties to the lower digit)."""
    K = c.size.digits
    if not 1 <= k <= K:
        raise ValueError(f"k must lie in 1..{K}, got {k}")
    masks = [(1 << K) - 1] * c.size.cells
    order = np.argsort(c.costs, axis=1, kind="stable")
    for cell, ranked in zip(c.cells, order):
        m = 0
        for d in ranked[:k]:
            m |= 1 << int(d)
        masks[cell] = m
    return DomainSet(c.size, tuple(masks))


def _cost_tables(costs: np.ndarray) -> tuple[list[list[float]], list[list[float]]]:
    """Per-mask lookup tables for every given cell.

    ``low[i][mask]`` is the cheapest cost of given ``i`` among the digits in
    ``mask`` and ``regret[i][mask]`` the gap to the second cheapest (0 for
    masks with fewer than two digits).
    """
    G, K = costs.shape
    first = np.full((G, 1 << K), math.inf)
    second = np.full((G, 1 << K), math.inf)
    masks = np.arange(1 << K)
    for b in range(K):
        hit = (masks >> b) & 1 == 1
        cb = costs[:, b:b + 1]
        f, s2 = first[:, hit], second[:, hit]
        second[:, hit] = np.minimum(s2, np.maximum(f, cb))
        first[:, hit] = np.minimum(f, cb)
    finite = np.isfinite(second)
    regret = np.zeros_like(second)
    regret[finite] = second[finite] - first[finite]
    return first.tolist(), regret.tolist()


class _BranchAndBound:
    """Depth-first branch-and-bound minimizing summed given-cell cost.

    Node bound is the sum over given cells of the cheapest digit still in the
    cell's domain, which is exact for fixed cells and admissible otherwise.
    Given cells are branched on first, cheapest digit first; once they are all
    fixed the objective is known and the search only needs one completion.
    Nodes are pruned once the bound cannot beat the incumbent by more than
    ``tol``, so among tied optima the first one found is kept.
    """

    def __init__(self, costs: CostField, domains: DomainSet,
                 nogoods: Sequence[Nogood], stats: SearchStats, tol: float):
        self.n = costs.size.n
        self.K = costs.size.digits
        self.gcells = costs.cells
        self.gindex = {c: i for i, c in enumerate(costs.cells)}
        self.costs = costs.costs.tolist()
        if self.K <= _TABLE_DIGITS:
            self.tables, self.regrets = _cost_tables(costs.costs)
        else:
            self.tables = self.regrets = None
        ranked = np.argsort(costs.costs, axis=1, kind="stable")
        self.value_order = [[1 << int(d) for d in row] for row in ranked]
        self.domains = domains
        self.stats = stats
        self.tol = tol
        self.best = math.inf
        self.best_dom: list[int] | None = None
        gset = set(self.gcells)
        self.forbidden = set()
        for ng in nogoods:
            if set(ng.cells) != gset:
                raise ValueError("nogood scope must equal the given cells")
            a = ng.as_dict()
            self.forbidden.add(tuple(1 << (a[c] - 1) for c in self.gcells))

    def _cell_min(self, i: int, m: int) -> float:
        if self.tables is not None:
            return self.tables[i][m]
        row = self.costs[i]
        return min(row[d] for d in range(self.K) if (m >> d) & 1)

    def bound(self, dom: list[int]) -> float:
        if self.tables is not None:
            tabs = self.tables
            return sum(tabs[i][dom[c]] for i, c in enumerate(self.gcells))
        return sum(self._cell_min(i, dom[c]) for i, c in enumerate(self.gcells))

    def _regret(self, i: int, m: int) -> float:
        if self.regrets is not None:
            return self.regrets[i][m]
        row = self.costs[i]
        a, b = sorted(row[d] for d in range(self.K) if (m >> d) & 1)[:2]
        return b - a

    def choose(self, dom: list[int]) -> int:
        """Unfixed given cell with the largest regret, else the csp-engine choice.

        Deciding the most clear-cut givens first raises the bound fastest and
        lets propagation shrink the ambiguous ones before they are branched on.
        """
        best = -1
        best_regret = -1.0
        for i, c in enumerate(self.gcells):
            m = dom[c]
            if m & (m - 1):
                r = self._regret(i, m)
                if r > best_regret:
                    best, best_regret = c, r
        if best >= 0:
            return best
        return choose_cell(dom)

    def run(self) -> None:
        dom = list(self.domains.masks)
        self.stats.nodes_expanded += 1
        if propagate_masks(dom, self.n):
            self._node(dom)
        else:
            self.stats.backtracks += 1

    def _node(self, dom: list[int]) -> None:
        b = self.bound(dom)
        if b >= self.best - self.tol:
            self.stats.backtracks += 1
            return
        if self.forbidden:
            key = tuple(dom[c] for c in self.gcells)
            if all(not m & (m - 1) for m in key) and key in self.forbidden:
                self.stats.backtracks += 1
                return
        cell = self.choose(dom)
        if cell < 0:
            self.best = b
            self.best_dom = dom
            return
        m = dom[cell]
        i = self.gindex.get(cell)
        if i is None:
            bits = []
            while m:
                low = m & -m
                bits.append(low)
                m ^= low
        else:
            bits = [bit for bit in self.value_order[i] if m & bit]
        n = self.n
        for bit in bits:
            child = dom.copy()
            child[cell] = bit
            self.stats.nodes_expanded += 1
            if propagate_masks(child, n, [cell]):
                self._node(child)
            else:
                self.stats.backtracks += 1


def _optimize(c: CostField, domains: DomainSet, nogoods: Sequence[Nogood],
              stats: SearchStats, tol: float) -> tuple[Grid | None, float | None]:
    bb = _BranchAndBound(c, domains, nogoods, stats, tol)
    bb.run()
    if bb.best_dom is None:
        return None, None
    sol = Grid(c.size, tuple(m.bit_length() for m in bb.best_dom))
    return sol, bb.best


def solve_hybrid1(c: CostField, k: int | None = None, nogoods: Sequence[Nogood] = (), *,
                  tol: float = OBJECTIVE_TOL) -> SolveOutcome:
    """Minimum-cost valid board with given-cell digits in their top-``k`` domains."""
    k = c.size.digits if k is None else k
    stats = SearchStats()
    t0 = time.perf_counter()
    sol, obj = _optimize(c, restrict_top_k(c, k), nogoods, stats, tol)
    stats.wall_time = time.perf_counter() - t0
    return SolveOutcome(sol, obj, stats, 0, "hybrid1")


def solve_hybrid2(c: CostField, k: int | None = None, *, tol: float = OBJECTIVE_TOL,
                  max_rounds: int = MAX_NOGOOD_ROUNDS) -> SolveOutcome:
    """Like :func:`solve_hybrid1` but only accepts given-cell assignments with one completion."""
    k = c.size.digits if k is None else k
    stats = SearchStats()
    t0 = time.perf_counter()
    domains = restrict_top_k(c, k)
    nogoods: list[Nogood] = []
    for _ in range(max_rounds):
        sol, obj = _optimize(c, domains, nogoods, stats, tol)
        if sol is None:
            break
        projected = sol.restrict(c.cells)
        if find_second_solution(projected, sol, stats=stats) is None:
            stats.wall_time = time.perf_counter() - t0
            return SolveOutcome(sol, obj, stats, len(nogoods), "hybrid2")
        nogoods.append(Nogood.from_solution(sol, c.cells))
    else:
        raise IterationLimitError(f"no unique assignment after {max_rounds} nogoods")
    stats.wall_time = time.perf_counter() - t0
    return SolveOutcome(None, None, stats, len(nogoods), "hybrid2")


METHODS = ("baseline", "hybrid1", "hybrid2")


def solve(method: str, p: ProbField, k: int | None = None, epsilon: float | None = None) -> SolveOutcome:
    from .grid import DEFAULT_EPSILON, to_cost_field

    if method == "baseline":
        return solve_baseline(p)
    c = to_cost_field(p, DEFAULT_EPSILON if epsilon is None else epsilon)
    if method == "hybrid1":
        return solve_hybrid1(c, k)
    if method == "hybrid2":
        return solve_hybrid2(c, k)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
