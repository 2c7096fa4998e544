"""Satisfaction search over sudoku rules.

Domains are bitmasks per cell (bit ``d - 1`` set means digit ``d`` is still a
candidate).  Propagation is forward checking plus hidden singles.  Search
picks the unfixed cell with fewest candidates (ties to the lowest index) and
tries digits in ascending order unless told otherwise.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .grid import BoxSize, Grid, GridFormatError, _size, check_rules, parse_grid, peers, serialize_grid, units
from .rng import stream

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """Givens admit no completion where one was required."""


class GenerationError(RuntimeError):
    def __init__(self, msg: str, achieved: int):
        super().__init__(msg)
        self.achieved = achieved


@dataclass(frozen=True)
class DomainSet:
    size: BoxSize
    masks: tuple[int, ...]

    def __post_init__(self):
        size = _size(self.size)
        object.__setattr__(self, "size", size)
        masks = tuple(int(m) for m in self.masks)
        if len(masks) != size.cells:
            raise ValueError(f"expected {size.cells} domains, got {len(masks)}")
        full = (1 << size.side) - 1
        if any(m & ~full for m in masks):
            raise ValueError("domain mask holds digits outside the board range")
        object.__setattr__(self, "masks", masks)

    @classmethod
    def full(cls, size: BoxSize | int) -> "DomainSet":
        size = _size(size)
        return cls(size, ((1 << size.side) - 1,) * size.cells)

    @classmethod
    def from_grid(cls, g: Grid, base: "DomainSet | None" = None) -> "DomainSet":
        """Fix the nonzero cells of ``g`` on top of ``base`` (full domains by default)."""
        masks = list((base or cls.full(g.size)).masks)
        for c, v in enumerate(g.cells):
            if v:
                masks[c] &= 1 << (v - 1)
        return cls(g.size, tuple(masks))

    @classmethod
    def from_candidates(cls, size: BoxSize | int, cands: Sequence[Iterable[int]]) -> "DomainSet":
        masks = []
        for ds in cands:
            m = 0
            for d in ds:
                m |= 1 << (d - 1)
            masks.append(m)
        return cls(_size(size), tuple(masks))

    def candidates(self, cell: int) -> tuple[int, ...]:
        return mask_digits(self.masks[cell])

    def is_fixed(self, cell: int) -> bool:
        m = self.masks[cell]
        return m != 0 and m & (m - 1) == 0

    def to_grid(self) -> Grid:
        """Fixed cells become digits, everything else is empty."""
        return Grid(self.size, tuple(m.bit_length() if m and not m & (m - 1) else 0
                                     for m in self.masks))

    def contains(self, g: Grid) -> bool:
        """True if every nonzero digit of ``g`` lies in its cell's domain."""
        return all(v == 0 or (self.masks[c] >> (v - 1)) & 1 for c, v in enumerate(g.cells))


@dataclass
class SearchStats:
    nodes_expanded: int = 0
    backtracks: int = 0
    wall_time: float = 0.0

    def merge(self, other: "SearchStats") -> None:
        self.nodes_expanded += other.nodes_expanded
        self.backtracks += other.backtracks
        self.wall_time += other.wall_time


def mask_digits(m: int) -> tuple[int, ...]:
    out = []
    d = 1
    while m:
        if m & 1:
            out.append(d)
        m >>= 1
        d += 1
    return tuple(out)


def propagate_masks(dom: list[int], n: int, queue: list[int] | None = None) -> bool:
    """Propagate ``dom`` in place to a fixpoint; False signals a contradiction.

    ``queue`` lists cells whose singleton digit has not yet been removed from
    their peers; ``None`` means every currently fixed cell.
    """
    pr = peers(n)
    us = units(n)
    full = (1 << (n * n)) - 1
    if queue is None:
        queue = []
        for c, m in enumerate(dom):
            if not m:
                return False
            if not m & (m - 1):
                queue.append(c)
    while True:
        while queue:
            c = queue.pop()
            d = dom[c]
            for p in pr[c]:
                m = dom[p]
                if m & d:
                    m &= ~d
                    if not m:
                        return False
                    dom[p] = m
                    if not m & (m - 1):
                        queue.append(p)
        # hidden singles: a digit with one place left in a unit goes there
        for unit in us:
            once = twice = 0
            for c in unit:
                m = dom[c]
                twice |= once & m
                once |= m
            if once != full:
                return False
            singles = once & ~twice
            if singles:
                for c in unit:
                    m = dom[c]
                    s = m & singles
                    if s and s != m:
                        if s & (s - 1):
                            return False
                        dom[c] = s
                        queue.append(c)
        if not queue:
            return True


def propagate(d: DomainSet) -> DomainSet | None:
    """Fixpoint of peer elimination and hidden singles, or ``None`` on contradiction."""
    dom = list(d.masks)
    if not propagate_masks(dom, d.size.n):
        return None
    return DomainSet(d.size, tuple(dom))


def choose_cell(dom: Sequence[int]) -> int:
    """Unfixed cell with the fewest candidates, lowest index first; -1 if all fixed."""
    best = -1
    best_count = 1 << 30
    for c, m in enumerate(dom):
        if m & (m - 1):
            k = m.bit_count()
            if k < best_count:
                best, best_count = c, k
                if k == 2:
                    break
    return best


def _ascending(cell: int, m: int) -> Iterable[int]:
    while m:
        low = m & -m
        yield low
        m ^= low


def _complete(dom: list[int], n: int, stats: SearchStats,
              order: Callable[[int, int], Iterable[int]],
              accept: Callable[[list[int]], bool] | None) -> Iterator[list[int]]:
    """Yield every complete propagated assignment below ``dom`` in search order."""
    cell = choose_cell(dom)
    if cell < 0:
        if accept is None or accept(dom):
            yield dom
        return
    for bit in order(cell, dom[cell]):
        child = dom.copy()
        child[cell] = bit
        stats.nodes_expanded += 1
        if propagate_masks(child, n, [cell]):
            yield from _complete(child, n, stats, order, accept)
        else:
            stats.backtracks += 1


def _masks_to_grid(size: BoxSize, dom: Sequence[int]) -> Grid:
    return Grid(size, tuple(m.bit_length() for m in dom))


def _nogood_filter(nogoods: Sequence[Mapping[int, int]] | None):
    if not nogoods:
        return None
    forbidden = [tuple((c, 1 << (d - 1)) for c, d in ng.items()) for ng in nogoods]

    def accept(dom):
        return not any(all(dom[c] == b for c, b in ng) for ng in forbidden)
    return accept


def iter_solutions(givens: Grid, domains: DomainSet | None = None, *,
                   nogoods: Sequence[Mapping[int, int]] | None = None,
                   stats: SearchStats | None = None,
                   order: Callable[[int, int], Iterable[int]] = _ascending) -> Iterator[Grid]:
    """All complete valid extensions of ``givens`` in deterministic search order.

    ``nogoods`` are forbidden partial assignments (cell -> digit); a completion
    matching any of them entirely is skipped.
    """
    stats = stats if stats is not None else SearchStats()
    base = DomainSet.from_grid(givens, domains)
    dom = list(base.masks)
    n = givens.size.n
    stats.nodes_expanded += 1
    if not propagate_masks(dom, n):
        stats.backtracks += 1
        return
    for sol in _complete(dom, n, stats, order, _nogood_filter(nogoods)):
        yield _masks_to_grid(givens.size, sol)


def solve_csp(givens: Grid, domains: DomainSet | None = None, *,
              nogoods: Sequence[Mapping[int, int]] | None = None,
              stats: SearchStats | None = None) -> Grid | None:
    """First completion of ``givens`` under the documented ordering, or ``None``."""
    stats = stats if stats is not None else SearchStats()
    t0 = time.perf_counter()
    try:
        return next(iter_solutions(givens, domains, nogoods=nogoods, stats=stats), None)
    finally:
        stats.wall_time += time.perf_counter() - t0


def find_second_solution(givens: Grid, known: Grid, *,
                         stats: SearchStats | None = None) -> Grid | None:
    """A completion of ``givens`` other than ``known``, or ``None`` if there is none."""
    if not known.is_complete or not known.extends(givens) or not check_rules(known):
        raise ValueError("known must be a valid complete extension of givens")
    for sol in iter_solutions(givens, stats=stats):
        if sol.cells != known.cells:
            return sol
    return None


def is_unique(givens: Grid, *, stats: SearchStats | None = None) -> bool:
    first = solve_csp(givens, stats=stats)
    if first is None:
        raise InfeasibleError("givens have no solution")
    return find_second_solution(givens, first, stats=stats) is None


def count_solutions(givens: Grid, limit: int | None = None) -> int:
    """Number of completions, capped at ``limit`` (``None`` counts them all)."""
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1")
    count = 0
    for _ in iter_solutions(givens):
        count += 1
        if limit is not None and count >= limit:
            break
    return count


def generate_puzzle(size: BoxSize | int, target_givens: int, seed: int, *,
                    strict: bool = False) -> tuple[Grid, Grid]:
    """Random unique-solution puzzle with (about) ``target_givens`` clues.

    A full board is drawn by search with a seeded random digit order; cells are
    then emptied in seeded random order, skipping any removal that would admit
    a second solution.  If the target cannot be reached the puzzle stops at the
    smallest count found (``strict`` turns that into :class:`GenerationError`).
    """
    size = _size(size)
    if not 0 <= target_givens <= size.cells:
        raise ValueError(f"target_givens must lie in 0..{size.cells}")
    rng = stream(seed, 0xB0A2D)
    side = size.side

    perms = [rng.permutation(side) for _ in range(size.cells)]

    def shuffled(cell, m):
        for d in perms[cell]:
            bit = 1 << int(d)
            if m & bit:
                yield bit

    solution = next(iter_solutions(Grid.empty(size), order=shuffled))
    cells = list(solution.cells)
    remaining = size.cells
    for c in rng.permutation(size.cells):
        if remaining <= target_givens:
            break
        c = int(c)
        digit = cells[c]
        cells[c] = 0
        if count_solutions(Grid(size, tuple(cells)), 2) == 1:
            remaining -= 1
        else:
            cells[c] = digit
    puzzle = Grid(size, tuple(cells))
    if remaining > target_givens:
        msg = f"reached {remaining} givens, target was {target_givens}"
        if strict:
            raise GenerationError(msg, remaining)
        log.info("seed %d: %s", seed, msg)
    return puzzle, solution


@dataclass(frozen=True)
class Instance:
    puzzle: Grid
    solution: Grid
    seed: int = 0

    def to_json(self) -> dict:
        return {"puzzle": serialize_grid(self.puzzle),
                "solution": serialize_grid(self.solution),
                "seed": self.seed}

    @classmethod
    def from_json(cls, obj: Mapping, size: BoxSize | int | None = None) -> "Instance":
        try:
            ptext, stext = obj["puzzle"], obj["solution"]
        except (KeyError, TypeError) as exc:
            raise GridFormatError(f"malformed dataset record: {exc}") from None
        if size is None:
            size = _infer_size(ptext)
        puzzle = parse_grid(ptext, size)
        solution = parse_grid(stext, size)
        if not solution.is_complete or not solution.extends(puzzle):
            raise GridFormatError("solution does not complete the puzzle")
        return cls(puzzle, solution, int(obj.get("seed", 0)))


def _infer_size(text: str) -> BoxSize:
    if "," in text:
        count = len([t for t in text.split(",") if t.strip()])
    else:
        count = len([ch for ch in text if not ch.isspace()])
    n = int(round(count ** 0.25))
    if n ** 4 != count:
        raise GridFormatError(f"{count} cells is not a board size")
    return BoxSize(n)


def generate_dataset(size: BoxSize | int, count: int, target_givens: int, seed: int) -> list[Instance]:
    """``count`` puzzles; instance ``i`` is generated with seed ``seed * 1_000_003 + i``."""
    out = []
    for i in range(count):
        s = seed * 1_000_003 + i
        puzzle, solution = generate_puzzle(size, target_givens, s)
        out.append(Instance(puzzle, solution, s))
    return out


def load_dataset(path) -> list[Instance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GridFormatError(f"{path}:{lineno}: {exc}") from None
            out.append(Instance.from_json(obj))
    return out


def dump_dataset(instances: Iterable[Instance], path) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json()) + "\n")


def mean_givens(instances: Sequence[Instance]) -> float:
    return float(np.mean([len(i.puzzle.given_cells) for i in instances]))
