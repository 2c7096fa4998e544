"""Evaluation harness: run a pipeline over a dataset and aggregate metrics.

Metric definitions, per instance with true solution ``s`` and outcome ``o``:

* img: given cells whose label matches ``s``.  The label is the digit ``o``
  places there, or the classifier's argmax when ``o`` is infeasible.
* cell: cells of ``o`` matching ``s``; an infeasible outcome matches none.
* grid: ``o == s``.
* failure: ``o`` is infeasible.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .calibration import KINDS, LogitField, ScalingParams, fit_scaling, nll
from .csp import Instance
from .grid import DEFAULT_EPSILON, Grid, ProbField, serialize_grid
from .inference import METHODS, solve
from .simulate import NoiseParams, fields_from_logits, simulate_fields, tune_to_accuracy

SUMMARY_COLUMNS = ("method", "k", "instances", "img_accuracy", "cell_accuracy",
                   "grid_accuracy", "failure_rate")
TIMING_COLUMNS = ("mean_time_s", "median_time_s")


class MismatchError(ValueError):
    """Dataset and probability fields do not line up."""


@dataclass
class InstanceRecord:
    index: int
    solution: Grid | None
    objective: float | None
    img_correct: int
    givens: int
    cell_correct: int
    cells: int
    correct: bool
    nodes: int
    nogoods: int
    time_s: float

    @property
    def feasible(self) -> bool:
        return self.solution is not None

    def to_json(self, timing: bool = False) -> dict:
        out = {"index": self.index,
               "solution": serialize_grid(self.solution) if self.solution is not None else None,
               "objective": self.objective,
               "img_correct": self.img_correct, "givens": self.givens,
               "cell_correct": self.cell_correct, "correct": self.correct,
               "nodes": self.nodes, "nogoods": self.nogoods}
        if timing:
            out["time_ms"] = self.time_s * 1000.0
        return out


@dataclass
class MetricsReport:
    method: str
    k: int | None
    records: list[InstanceRecord] = field(default_factory=list)

    def _frac(self, num, den) -> float:
        den = sum(den)
        return sum(num) / den if den else 0.0

    @property
    def instances(self) -> int:
        return len(self.records)

    @property
    def img_accuracy(self) -> float:
        return self._frac((r.img_correct for r in self.records), (r.givens for r in self.records))

    @property
    def cell_accuracy(self) -> float:
        return self._frac((r.cell_correct for r in self.records), (r.cells for r in self.records))

    @property
    def grid_accuracy(self) -> float:
        return self._frac((r.correct for r in self.records), (1 for _ in self.records))

    @property
    def failure_rate(self) -> float:
        return self._frac((not r.feasible for r in self.records), (1 for _ in self.records))

    @property
    def mean_time_s(self) -> float:
        return statistics.fmean(r.time_s for r in self.records) if self.records else 0.0

    @property
    def median_time_s(self) -> float:
        return statistics.median(r.time_s for r in self.records) if self.records else 0.0

    def summary(self, timing: bool = False) -> dict:
        out = {c: getattr(self, c) for c in SUMMARY_COLUMNS}
        if timing:
            out.update({c: getattr(self, c) for c in TIMING_COLUMNS})
        return out

    def to_json(self, timing: bool = False, instances: bool = True) -> dict:
        out = self.summary(timing)
        if instances:
            out["records"] = [r.to_json(timing) for r in self.records]
        return out


def _evaluate_one(args) -> InstanceRecord:
    index, inst, probs, method, k, epsilon = args
    out = solve(method, probs, k, epsilon)
    truth = inst.solution
    given = probs.cells
    if out.solution is not None:
        labels = [out.solution.cells[c] for c in given]
        cell_correct = sum(a == b for a, b in zip(out.solution.cells, truth.cells))
    else:
        argmax = probs.argmax_grid()
        labels = [argmax.cells[c] for c in given]
        cell_correct = 0
    img_correct = sum(lab == truth.cells[c] for lab, c in zip(labels, given))
    return InstanceRecord(index, out.solution, out.objective, img_correct, len(given),
                          cell_correct, truth.size.cells, out.solution == truth,
                          out.stats.nodes_expanded, out.nogoods_used, out.stats.wall_time)


def _check_alignment(dataset: Sequence[Instance], fields: Sequence[ProbField]) -> None:
    if len(dataset) != len(fields):
        raise MismatchError(f"{len(dataset)} instances but {len(fields)} probability fields")
    for i, (inst, f) in enumerate(zip(dataset, fields)):
        if f.size != inst.puzzle.size or f.cells != inst.puzzle.given_cells:
            raise MismatchError(f"instance {i}: field cells differ from the puzzle's givens")


def evaluate(dataset: Sequence[Instance], fields: Sequence[ProbField], method: str,
             k: int | None = None, *, workers: int = 1,
             epsilon: float = DEFAULT_EPSILON) -> MetricsReport:
    """Run ``method`` on every instance; ``k`` restricts hybrid domains to the top-k digits."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    _check_alignment(dataset, fields)
    if dataset and k is not None and not 1 <= k <= dataset[0].puzzle.size.digits:
        raise ValueError(f"k must lie in 1..{dataset[0].puzzle.size.digits}")
    jobs = [(i, inst, f, method, k, epsilon) for i, (inst, f) in enumerate(zip(dataset, fields))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_evaluate_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [_evaluate_one(j) for j in jobs]
    return MetricsReport(method, k, records)


def rank_of(probs: np.ndarray, digit: int) -> int:
    """0 for the most probable digit; ties share the lower rank."""
    return int(np.sum(probs > probs[digit - 1]))


def rank_distribution(report: MetricsReport, fields: Sequence[ProbField]) -> list[float]:
    """Normalized histogram of the probability rank of each chosen given-cell digit.

    Only correctly solved instances contribute.
    """
    if len(fields) != len(report.records):
        raise MismatchError("report and fields differ in length")
    K = fields[0].size.digits if fields else 0
    hist = [0] * K
    for rec in report.records:
        if not rec.correct:
            continue
        f = fields[rec.index]
        for c, p in f.items():
            hist[rank_of(p, rec.solution.cells[c])] += 1
    total = sum(hist)
    return [h / total if total else 0.0 for h in hist]


def topk_sweep(dataset: Sequence[Instance], fields: Sequence[ProbField], method: str = "hybrid2",
               ks: Iterable[int] | None = None, *, workers: int = 1) -> list[MetricsReport]:
    if not dataset:
        return []
    K = dataset[0].puzzle.size.digits
    ks = range(1, K + 1) if ks is None else ks
    return [evaluate(dataset, fields, method, k, workers=workers) for k in ks]


@dataclass
class StrengthRow:
    target: float
    params: NoiseParams
    reports: dict[str, MetricsReport]


def classifier_strength_sweep(dataset: Sequence[Instance], targets: Iterable[float], *,
                              spread: float = 1.0, corruption: float = 0.0, seed: int = 0,
                              methods: Sequence[str] = METHODS, k: int | None = None,
                              workers: int = 1) -> list[StrengthRow]:
    """Tune the simulator to each accuracy target and compare the pipelines.

    A target of 1.0 is served by a saturated classifier (one-hot fields).
    """
    if not dataset:
        return []
    K = dataset[0].puzzle.size.digits
    rows = []
    for t in targets:
        if t >= 1.0:
            params = NoiseParams(confidence=50.0, spread=0.0, corruption=0.0, seed=seed)
        else:
            params = tune_to_accuracy(t, spread, corruption, K=K, seed=seed)
        fields = simulate_fields(dataset, params)
        reports = {m: evaluate(dataset, fields, m, k, workers=workers) for m in methods}
        rows.append(StrengthRow(t, params, reports))
    return rows


@dataclass
class CalibrationRow:
    kind: str
    params: ScalingParams | None
    validation_nll: float
    test_accuracy: float
    reports: list[MetricsReport]


def calibration_compare(validation: LogitField, dataset: Sequence[Instance], test_logits: LogitField,
                        *, kinds: Sequence[str] = KINDS, method: str = "hybrid2",
                        ks: Iterable[int] | None = None, workers: int = 1) -> list[CalibrationRow]:
    """Fit every scaling kind and rerun ``method`` on calibrated fields.

    The first row is the uncalibrated classifier.  ``test_logits`` carries ids
    ``"<instance>:<cell>"`` for the given cells of ``dataset``.
    """
    ks = list(ks) if ks is not None else None
    rows = []
    variants: list[tuple[str, ScalingParams | None]] = [("uncalibrated", None)]
    variants += [(kind, fit_scaling(validation, kind)) for kind in kinds]
    for name, params in variants:
        fields = fields_from_logits(test_logits, dataset, params)
        u = test_logits.logits if params is None else params.transform(test_logits.logits)
        acc = float(np.mean(np.argmax(u, axis=1) + 1 == test_logits.labels))
        reports = topk_sweep(dataset, fields, method, ks, workers=workers)
        rows.append(CalibrationRow(name, params, nll(validation, params), acc, reports))
    return rows


def reports_to_json(reports: Sequence[MetricsReport], timing: bool = False, instances: bool = True) -> str:
    body = [r.to_json(timing, instances) for r in reports]
    obj = body[0] if len(body) == 1 else body
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def reports_to_csv(reports: Sequence[MetricsReport], timing: bool = False,
                   extra: Sequence[dict] | None = None) -> str:
    cols = list(SUMMARY_COLUMNS) + (list(TIMING_COLUMNS) if timing else [])
    extra_cols = list(extra[0]) if extra else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(extra_cols + cols)
    for i, r in enumerate(reports):
        s = r.summary(timing)
        pre = [extra[i][c] for c in extra_cols] if extra else []
        w.writerow(pre + ["" if s[c] is None else repr(s[c]) if isinstance(s[c], float) else s[c]
                          for c in cols])
    return buf.getvalue()
