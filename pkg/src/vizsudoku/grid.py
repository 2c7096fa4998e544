"""Board types, text/JSON formats and rule checking for generalized sudoku.

A board of box edge ``n`` has ``n**2`` rows, columns and boxes and holds the
digits ``1..n**2``.  Cells are indexed row-major from 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

DEFAULT_EPSILON = 1e-12
PROB_SUM_TOL = 1e-6


class GridFormatError(ValueError):
    """Raised when grid text or a field file cannot be parsed."""


@dataclass(frozen=True)
class BoxSize:
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"box edge must be an integer >= 2, got {self.n!r}")

    @property
    def side(self) -> int:
        return self.n * self.n

    @property
    def cells(self) -> int:
        return self.side * self.side

    @property
    def digits(self) -> int:
        return self.side


def _size(size: BoxSize | int) -> BoxSize:
    return size if isinstance(size, BoxSize) else BoxSize(int(size))


@lru_cache(maxsize=None)
def units(n: int) -> tuple[tuple[int, ...], ...]:
    """All rows, then columns, then boxes of an ``n``-box board as cell tuples."""
    side = n * n
    rows = [tuple(r * side + c for c in range(side)) for r in range(side)]
    cols = [tuple(r * side + c for r in range(side)) for c in range(side)]
    boxes = []
    for br in range(n):
        for bc in range(n):
            boxes.append(tuple((br * n + i) * side + bc * n + j
                               for i in range(n) for j in range(n)))
    return tuple(rows + cols + boxes)


@lru_cache(maxsize=None)
def peers(n: int) -> tuple[tuple[int, ...], ...]:
    """For every cell, the sorted cells sharing a row, column or box with it."""
    side = n * n
    acc: list[set[int]] = [set() for _ in range(side * side)]
    for unit in units(n):
        for c in unit:
            acc[c].update(unit)
    return tuple(tuple(sorted(s - {c})) for c, s in enumerate(acc))


@dataclass(frozen=True)
class Grid:
    """An immutable board; ``0`` marks an empty cell."""

    size: BoxSize
    cells: tuple[int, ...]

    def __post_init__(self):
        size = _size(self.size)
        object.__setattr__(self, "size", size)
        cells = tuple(int(v) for v in self.cells)
        object.__setattr__(self, "cells", cells)
        if len(cells) != size.cells:
            raise GridFormatError(f"expected {size.cells} cells, got {len(cells)}")
        for v in cells:
            if not 0 <= v <= size.side:
                raise GridFormatError(f"cell value {v} outside 0..{size.side}")

    @classmethod
    def empty(cls, size: BoxSize | int) -> "Grid":
        size = _size(size)
        return cls(size, (0,) * size.cells)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "Grid":
        side = len(rows)
        n = int(round(side ** 0.5))
        if n * n != side:
            raise GridFormatError(f"{side} rows is not a square board side")
        return cls(BoxSize(n), tuple(v for row in rows for v in row))

    @property
    def n(self) -> int:
        return self.size.n

    def __getitem__(self, cell: int) -> int:
        return self.cells[cell]

    def rows(self) -> list[tuple[int, ...]]:
        side = self.size.side
        return [self.cells[r * side:(r + 1) * side] for r in range(side)]

    @property
    def given_cells(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.cells) if v)

    @property
    def is_complete(self) -> bool:
        return 0 not in self.cells

    def restrict(self, cells: Iterable[int]) -> "Grid":
        """Keep only the listed cells, emptying every other one."""
        keep = set(cells)
        return Grid(self.size, tuple(v if i in keep else 0 for i, v in enumerate(self.cells)))

    def extends(self, givens: "Grid") -> bool:
        """True if every nonzero cell of ``givens`` holds the same digit here."""
        return givens.size == self.size and all(
            g == 0 or g == v for g, v in zip(givens.cells, self.cells))

    def __str__(self) -> str:
        return serialize_grid(self)


def parse_grid(text: str, size: BoxSize | int) -> Grid:
    """Parse grid text.

    For ``n <= 3`` every non-whitespace character is one cell, ``0`` or ``.``
    meaning empty.  For ``n >= 4`` cells are comma-separated integers.
    """
    size = _size(size)
    if size.n <= 3:
        tokens = [ch for ch in text if not ch.isspace()]
    else:
        tokens = [t for t in "".join(text.split()).split(",") if t != ""]
    if len(tokens) != size.cells:
        raise GridFormatError(f"expected {size.cells} cell tokens, got {len(tokens)}")
    cells = []
    for tok in tokens:
        if tok == ".":
            cells.append(0)
            continue
        try:
            v = int(tok)
        except ValueError:
            raise GridFormatError(f"bad cell token {tok!r}") from None
        if not 0 <= v <= size.side:
            raise GridFormatError(f"cell token {tok!r} outside 0..{size.side}")
        cells.append(v)
    return Grid(size, tuple(cells))


def serialize_grid(g: Grid) -> str:
    """Canonical text: ``.`` for empty cells when ``n <= 3``, else ``0`` with commas."""
    if g.size.n <= 3:
        return "".join(str(v) if v else "." for v in g.cells)
    return ",".join(str(v) for v in g.cells)


def check_rules(g: Grid) -> bool:
    """True iff no row, column or box repeats a nonzero digit."""
    cells = g.cells
    for unit in units(g.size.n):
        seen = 0
        for c in unit:
            v = cells[c]
            if v:
                bit = 1 << v
                if seen & bit:
                    return False
                seen |= bit
    return True


def _vector_block(cells: Sequence[int], vectors, size: BoxSize, what: str):
    cells = tuple(int(c) for c in cells)
    arr = np.array(vectors, dtype=float)
    if arr.ndim != 2 or arr.shape != (len(cells), size.digits):
        raise GridFormatError(
            f"{what} must have shape ({len(cells)}, {size.digits}), got {arr.shape}")
    if not cells:
        raise GridFormatError(f"{what} needs at least one given cell")
    if len(set(cells)) != len(cells):
        raise GridFormatError("duplicate given cell")
    for c in cells:
        if not 0 <= c < size.cells:
            raise GridFormatError(f"cell index {c} outside the board")
    order = np.argsort(cells, kind="stable")
    cells = tuple(cells[i] for i in order)
    arr = arr[order]
    return cells, arr


@dataclass(frozen=True, eq=False)
class ProbField:
    """Per-given-cell probability vectors; row ``i`` of ``probs`` is ``P(y = k+1)``.

    Vectors whose sum is within ``PROB_SUM_TOL`` of 1 are renormalized; anything
    else is rejected.
    """

    size: BoxSize
    cells: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        size = _size(self.size)
        cells, arr = _vector_block(self.cells, self.probs, size, "probs")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            raise GridFormatError("probabilities must lie in [0, 1]")
        sums = arr.sum(axis=1)
        bad = np.abs(sums - 1.0) > PROB_SUM_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise GridFormatError(f"probabilities for cell {cells[i]} sum to {sums[i]!r}")
        arr = arr / sums[:, None]
        arr.setflags(write=False)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def from_mapping(cls, size: BoxSize | int, entries: Mapping[int, Sequence[float]]) -> "ProbField":
        cells = sorted(entries)
        return cls(_size(size), tuple(cells), [entries[c] for c in cells])

    def __getitem__(self, cell: int) -> np.ndarray:
        return self.probs[self.cells.index(cell)]

    def items(self) -> Iterator[tuple[int, np.ndarray]]:
        return zip(self.cells, self.probs)

    def argmax_grid(self) -> Grid:
        """Most probable digit per given cell, ties to the lower digit."""
        cells = [0] * self.size.cells
        for c, d in zip(self.cells, np.argmax(self.probs, axis=1)):
            cells[c] = int(d) + 1
        return Grid(self.size, tuple(cells))

    def to_json(self) -> dict:
        return {"n": self.size.n,
                "givens": [{"cell": c, "probs": [float(x) for x in p]}
                           for c, p in self.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ProbField":
        try:
            size = BoxSize(int(obj["n"]))
            givens = obj["givens"]
            cells = [int(g["cell"]) for g in givens]
            probs = [g["probs"] for g in givens]
        except (KeyError, TypeError) as exc:
            raise GridFormatError(f"malformed probability field: {exc}") from None
        return cls(size, tuple(cells), probs)


@dataclass(frozen=True, eq=False)
class CostField:
    """Per-given-cell cost vectors ``-log(max(p, epsilon))``."""

    size: BoxSize
    cells: tuple[int, ...]
    costs: np.ndarray

    def __post_init__(self):
        size = _size(self.size)
        cells, arr = _vector_block(self.cells, self.costs, size, "costs")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise GridFormatError("costs must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "costs", arr)

    def __getitem__(self, cell: int) -> np.ndarray:
        return self.costs[self.cells.index(cell)]

    def items(self) -> Iterator[tuple[int, np.ndarray]]:
        return zip(self.cells, self.costs)

    def objective(self, solution: Grid) -> float:
        """Summed cost of the digits ``solution`` places on the given cells."""
        return float(sum(self.costs[i, solution.cells[c] - 1] for i, c in enumerate(self.cells)))


def to_cost_field(p: ProbField, epsilon: float = DEFAULT_EPSILON) -> CostField:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    costs = -np.log(np.maximum(p.probs, epsilon))
    # -log(1.0) is -0.0; keep the sign clean
    costs = costs + 0.0
    return CostField(p.size, p.cells, costs)


def load_prob_fields(path) -> list[ProbField]:
    """Read a file holding one field JSON object per line (or a single object)."""
    with open(path) as fh:
        text = fh.read()
    fields = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            if lineno == 1:
                # pretty-printed single object
                try:
                    return [ProbField.from_json(json.loads(text))]
                except json.JSONDecodeError:
                    pass
            raise GridFormatError(f"{path}:{lineno}: {exc}") from None
        fields.append(ProbField.from_json(obj))
    return fields


def dump_prob_fields(fields: Iterable[ProbField], path) -> None:
    with open(path, "w") as fh:
        for f in fields:
            fh.write(json.dumps(f.to_json()) + "\n")
