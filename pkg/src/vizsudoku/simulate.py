"""Synthetic digit classifier and ingestion of external logits.

The simulator draws Gaussian logits ``z_k ~ N(0, spread)`` and adds
``confidence`` to a peak class, which is the true digit except with
probability ``corruption`` where it is a uniformly chosen wrong digit.

Scaling ``confidence`` and ``spread`` by the same factor keeps the argmax
accuracy but multiplies the logits, so :func:`rescale` gives the same classifier
with sharper (``factor > 1``) or flatter probabilities.  Without corruption the
probabilities are calibrated exactly when ``confidence == spread ** 2``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Mapping

import numpy as np

from .calibration import LogitField, ScalingParams, apply_scaling, softmax
from .grid import BoxSize, Grid, GridFormatError, ProbField, _size
from .rng import stream

TUNE_SAMPLES = 100_000
TUNE_TOL = 0.003


class TuningError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    confidence: float
    spread: float = 1.0
    corruption: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.confidence >= 0 or not np.isfinite(self.confidence):
            raise ValueError("confidence must be finite and >= 0")
        if not self.spread >= 0 or not np.isfinite(self.spread):
            raise ValueError("spread must be finite and >= 0")
        if not 0.0 <= self.corruption <= 1.0:
            raise ValueError("corruption must lie in [0, 1]")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping) -> "NoiseParams":
        return cls(float(obj["confidence"]), float(obj.get("spread", 1.0)),
                   float(obj.get("corruption", 0.0)), int(obj.get("seed", 0)))


def rescale(params: NoiseParams, factor: float) -> NoiseParams:
    return replace(params, confidence=params.confidence * factor, spread=params.spread * factor)


def simulate_logits(true_digit: int, K: int, params: NoiseParams,
                    rng: np.random.Generator) -> np.ndarray:
    """One logit vector over ``K`` classes; consumes a fixed number of draws."""
    if not 1 <= true_digit <= K:
        raise ValueError(f"digit {true_digit} outside 1..{K}")
    z = rng.standard_normal(K) * params.spread
    corrupt = rng.random() < params.corruption
    wrong = int(rng.integers(K - 1))
    peak = true_digit - 1
    if corrupt and K > 1:
        peak = wrong if wrong < peak else wrong + 1
    z[peak] += params.confidence
    return z


def simulate_vector(true_digit: int, K: int, params: NoiseParams,
                    rng: np.random.Generator) -> np.ndarray:
    return softmax(simulate_logits(true_digit, K, params, rng))


def simulate_cell_logits(solution: Grid, givens: Grid, params: NoiseParams,
                         instance: int = 0) -> dict[int, np.ndarray]:
    """Logits for each given cell; cell ``c`` of instance ``i`` uses substream ``(i, c)``."""
    if givens.size != solution.size or not solution.extends(givens) or not solution.is_complete:
        raise ValueError("givens must be a subset of a complete solution")
    K = solution.size.digits
    return {c: simulate_logits(solution.cells[c], K, params, stream(params.seed, instance, c))
            for c in givens.given_cells}


def simulate_field(solution: Grid, givens: Grid, params: NoiseParams,
                   instance: int = 0) -> ProbField:
    logits = simulate_cell_logits(solution, givens, params, instance)
    return ProbField.from_mapping(solution.size, {c: softmax(z) for c, z in logits.items()})


def simulate_fields(instances, params: NoiseParams) -> list[ProbField]:
    return [simulate_field(inst.solution, inst.puzzle, params, i)
            for i, inst in enumerate(instances)]


def simulate_logit_field(instances, params: NoiseParams,
                         scaling: ScalingParams | None = None) -> LogitField:
    """Logit records for every given cell of every instance, ids ``"<instance>:<cell>"``."""
    ids, labels, rows = [], [], []
    for i, inst in enumerate(instances):
        for c, z in simulate_cell_logits(inst.solution, inst.puzzle, params, i).items():
            ids.append(f"{i}:{c}")
            labels.append(inst.solution.cells[c])
            rows.append(z)
    return LogitField(ids, labels, np.array(rows))


def simulate_digits(count: int, K: int, params: NoiseParams, key: int = 1) -> LogitField:
    """Logits for ``count`` isolated digits with uniformly drawn labels (e.g. a validation set)."""
    rng = stream(params.seed, 0x5A11D, key)
    labels = rng.integers(1, K + 1, size=count)
    rows = [simulate_logits(int(y), K, params, rng) for y in labels]
    return LogitField([f"v{j}" for j in range(count)], labels, np.array(rows).reshape(count, K))


def _accuracy_sampler(K: int, spread: float, corruption: float, samples: int, seed: int):
    """Monte Carlo accuracy as a function of confidence, with common random numbers."""
    rng = stream(seed, 0x7A9E)
    noise = rng.standard_normal((samples, K)) * spread
    corrupt = rng.random(samples) < corruption
    wrong = rng.integers(K - 1, size=samples)
    # true class is index 0 w.l.o.g.
    peak = np.where(corrupt, wrong + 1, 0)
    rows = np.arange(samples)

    def accuracy(confidence: float) -> float:
        z = noise.copy()
        z[rows, peak] += confidence
        return float(np.mean(np.argmax(z, axis=1) == 0))
    return accuracy


def measure_accuracy(params: NoiseParams, K: int, samples: int = TUNE_SAMPLES, seed: int = 12345) -> float:
    return _accuracy_sampler(K, params.spread, params.corruption, samples, seed)(params.confidence)


def tune_to_accuracy(target: float, spread: float = 1.0, corruption: float = 0.0, *,
                     K: int = 9, seed: int = 0, samples: int = TUNE_SAMPLES,
                     tol: float = TUNE_TOL) -> NoiseParams:
    """Bisect ``confidence`` until Monte Carlo accuracy is within ``tol`` of ``target``."""
    if not 1.0 / K < target < 1.0:
        raise TuningError(f"target {target} outside the open interval (1/{K}, 1)")
    if spread <= 0:
        raise TuningError("spread must be positive to tune accuracy")
    acc = _accuracy_sampler(K, spread, corruption, samples, seed)
    lo, hi = 0.0, spread
    while acc(hi) < target:
        hi *= 2.0
        if hi > 1e3 * spread:
            raise TuningError(
                f"target {target} unreachable with corruption {corruption} "
                f"(ceiling about {acc(hi):.4f})")
    mid = hi
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        a = acc(mid)
        if abs(a - target) <= tol / 4:
            break
        if a < target:
            lo = mid
        else:
            hi = mid
    if abs(acc(mid) - target) > tol:
        raise TuningError(f"bisection stalled at accuracy {acc(mid):.4f} for target {target}")
    return NoiseParams(confidence=mid, spread=spread, corruption=corruption, seed=seed)


def load_logits(path, n: BoxSize | int | None = None) -> LogitField:
    """Read JSON-lines logit records ``{"id", "label", "logits"}``."""
    ids, labels, rows = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ids.append(str(obj["id"]))
                labels.append(int(obj["label"]))
                rows.append([float(x) for x in obj["logits"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise GridFormatError(f"{path}:{lineno}: malformed logit record ({exc})") from None
    if not rows:
        raise GridFormatError(f"{path}: no logit records")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise GridFormatError(f"{path}: logit vectors of differing lengths {sorted(lengths)}")
    if n is not None and lengths != {_size(n).digits}:
        raise GridFormatError(f"{path}: logit length {lengths.pop()} does not match {_size(n).digits} digits")
    return LogitField(ids, labels, np.array(rows))


def dump_logits(lf: LogitField, path) -> None:
    with open(path, "w") as fh:
        for rid, y, z in zip(lf.ids, lf.labels, lf.logits):
            fh.write(json.dumps({"id": rid, "label": int(y), "logits": [float(v) for v in z]}) + "\n")


def field_from_logits(lf: LogitField, size: BoxSize | int, cell_of: Mapping[str, int],
                      scaling: ScalingParams | None = None) -> ProbField:
    """Probability field from the records named in ``cell_of`` (record id -> cell)."""
    size = _size(size)
    if lf.num_classes != size.digits:
        raise GridFormatError(f"logits have {lf.num_classes} classes, board needs {size.digits}")
    index = lf.index
    entries = {}
    for rid, cell in cell_of.items():
        if rid not in index:
            raise GridFormatError(f"no logit record for id {rid!r} (cell {cell})")
        z = lf.logits[index[rid]]
        entries[cell] = apply_scaling(z, scaling) if scaling is not None else softmax(z)
    return ProbField.from_mapping(size, entries)


def fields_from_logits(lf: LogitField, instances, scaling: ScalingParams | None = None) -> list[ProbField]:
    """One field per instance, taking records with ids ``"<instance>:<cell>"``."""
    out = []
    for i, inst in enumerate(instances):
        mapping = {f"{i}:{c}": c for c in inst.puzzle.given_cells}
        out.append(field_from_logits(lf, inst.puzzle.size, mapping, scaling))
    return out
