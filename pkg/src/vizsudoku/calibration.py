"""Post-hoc calibration of classifier logits.

Three affine maps of the logits are supported before the softmax:
temperature (``z / T``), vector (``w * z + b``) and matrix (``W @ z + b``).
Parameters are fitted by minimizing mean negative log-likelihood on labelled
validation logits with full-batch gradient descent.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

KINDS = ("temperature", "vector", "matrix")
MAX_ITER = 5000
GRAD_TOL = 1e-8


class ConvergenceWarning(UserWarning):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, best: "ScalingParams", best_nll: float):
        super().__init__(msg)
        self.best = best
        self.best_nll = best_nll


def softmax(z) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


@dataclass
class LogitField:
    """Labelled logit records; labels are digits ``1..K``."""

    ids: list[str]
    labels: np.ndarray
    logits: np.ndarray

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.labels = np.asarray(self.labels, dtype=int)
        self.logits = np.asarray(self.logits, dtype=float)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a 2-d array of records x classes")
        if not (len(self.ids) == len(self.labels) == len(self.logits)):
            raise ValueError("ids, labels and logits differ in length")
        K = self.logits.shape[1]
        if len(self.labels) and (self.labels.min() < 1 or self.labels.max() > K):
            raise ValueError(f"labels must lie in 1..{K}")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    @cached_property
    def index(self) -> dict[str, int]:
        return {rid: j for j, rid in enumerate(self.ids)}

    def subset(self, rows) -> "LogitField":
        rows = np.asarray(rows)
        return LogitField([self.ids[j] for j in rows], self.labels[rows], self.logits[rows])

    @classmethod
    def from_probabilities(cls, ids, labels, probs, epsilon: float = 1e-12) -> "LogitField":
        """Use log-probabilities as logits when raw logits are unavailable."""
        return cls(ids, labels, np.log(np.maximum(np.asarray(probs, dtype=float), epsilon)))


@dataclass
class ScalingParams:
    kind: str
    T: float = 1.0
    w: np.ndarray | None = None
    b: np.ndarray | None = None
    W: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scaling kind {self.kind!r}")
        if self.kind == "temperature" and not self.T > 0:
            raise ValueError(f"temperature must be positive, got {self.T!r}")
        for name in ("w", "b", "W"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))
        if self.kind == "vector" and (self.w is None or self.b is None):
            raise ValueError("vector scaling needs w and b")
        if self.kind == "matrix":
            if self.W is None or self.b is None:
                raise ValueError("matrix scaling needs W and b")
            if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1] or self.b.shape != self.W.shape[:1]:
                raise ValueError("matrix scaling needs square W and matching b")
        if self.kind == "vector" and self.w.shape != self.b.shape:
            raise ValueError("w and b must have the same length")

    @classmethod
    def identity(cls, kind: str, K: int) -> "ScalingParams":
        if kind == "temperature":
            return cls("temperature", T=1.0)
        if kind == "vector":
            return cls("vector", w=np.ones(K), b=np.zeros(K))
        if kind == "matrix":
            return cls("matrix", W=np.eye(K), b=np.zeros(K))
        raise ValueError(f"unknown scaling kind {kind!r}")

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Scaled logits for a vector or a batch of row vectors."""
        z = np.asarray(z, dtype=float)
        if self.kind == "temperature":
            return z / self.T
        K = z.shape[-1]
        if self.b.shape != (K,):
            raise ValueError(f"{self.kind} scaling for {self.b.shape[0]} classes applied to {K}")
        if self.kind == "vector":
            return z * self.w + self.b
        return z @ self.W.T + self.b

    def to_vector(self) -> np.ndarray:
        if self.kind == "temperature":
            return np.array([self.T])
        if self.kind == "vector":
            return np.concatenate([self.w, self.b])
        return np.concatenate([self.W.ravel(), self.b])

    def with_vector(self, theta: np.ndarray) -> "ScalingParams":
        theta = np.asarray(theta, dtype=float)
        if self.kind == "temperature":
            return ScalingParams("temperature", T=float(theta[0]))
        if self.kind == "vector":
            K = self.w.shape[0]
            return ScalingParams("vector", w=theta[:K].copy(), b=theta[K:].copy())
        K = self.b.shape[0]
        return ScalingParams("matrix", W=theta[:K * K].reshape(K, K).copy(), b=theta[K * K:].copy())

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "temperature":
            out["T"] = float(self.T)
        elif self.kind == "vector":
            out["w"] = self.w.tolist()
            out["b"] = self.b.tolist()
        else:
            out["W"] = self.W.tolist()
            out["b"] = self.b.tolist()
        return out

    @classmethod
    def from_json(cls, obj) -> "ScalingParams":
        kind = obj["kind"]
        if kind == "temperature":
            return cls(kind, T=float(obj["T"]))
        if kind == "vector":
            return cls(kind, w=obj["w"], b=obj["b"])
        return cls(kind, W=obj["W"], b=obj["b"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ScalingParams":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def apply_scaling(z, params: ScalingParams | None) -> np.ndarray:
    """Calibrated probabilities for one logit vector (or a batch)."""
    if params is None:
        return softmax(z)
    return softmax(params.transform(z))


def nll(logits: LogitField, params: ScalingParams | None = None) -> float:
    """Mean negative log-likelihood of the true labels."""
    if len(logits) == 0:
        raise ValueError("empty logit field")
    u = logits.logits if params is None else params.transform(logits.logits)
    lp = log_softmax(u)
    return float(-np.mean(lp[np.arange(len(logits)), logits.labels - 1]))


def nll_and_grad(logits: LogitField, params: ScalingParams) -> tuple[float, np.ndarray]:
    """NLL and its gradient, flattened in the order of ``params.to_vector()``."""
    if len(logits) == 0:
        raise ValueError("empty logit field")
    z = logits.logits
    N = len(logits)
    rows = np.arange(N)
    lp = log_softmax(params.transform(z))
    loss = float(-np.mean(lp[rows, logits.labels - 1]))
    g = np.exp(lp)
    g[rows, logits.labels - 1] -= 1.0
    g /= N
    if params.kind == "temperature":
        return loss, np.array([-np.sum(g * z) / params.T ** 2])
    if params.kind == "vector":
        return loss, np.concatenate([np.sum(g * z, axis=0), g.sum(axis=0)])
    return loss, np.concatenate([(g.T @ z).ravel(), g.sum(axis=0)])


def _objective(logits: LogitField, template: ScalingParams):
    """NLL and gradient over a flat parameter vector.

    Temperature is optimized as inverse temperature ``beta = 1/T``, in which
    the loss is convex; ``beta <= 0`` is reported as an infinite loss.
    """
    z = logits.logits
    N = len(logits)
    rows = np.arange(N)
    y = logits.labels - 1
    kind = template.kind
    K = logits.num_classes

    def f(theta):
        if kind == "temperature":
            if theta[0] <= 0:
                return math.inf, None
            u = z * theta[0]
        elif kind == "vector":
            u = z * theta[:K] + theta[K:]
        else:
            u = z @ theta[:K * K].reshape(K, K).T + theta[K * K:]
        lp = log_softmax(u)
        loss = float(-np.mean(lp[rows, y]))
        g = np.exp(lp)
        g[rows, y] -= 1.0
        g /= N
        if kind == "temperature":
            grad = np.array([np.sum(g * z)])
        elif kind == "vector":
            grad = np.concatenate([np.sum(g * z, axis=0), g.sum(axis=0)])
        else:
            grad = np.concatenate([(g.T @ z).ravel(), g.sum(axis=0)])
        return loss, grad
    return f


def fit_scaling(validation: LogitField, kind: str, *, max_iter: int = MAX_ITER,
                grad_tol: float = GRAD_TOL, strict: bool = False) -> ScalingParams:
    """Fit scaling parameters of ``kind`` by gradient descent from the identity.

    Each step starts from a Barzilai-Borwein step length and backtracks until
    the Armijo condition holds, so the loss never rises above the identity's.
    Hitting ``max_iter`` warns (or raises :class:`ConvergenceError` when
    ``strict``) and returns the best parameters found.
    """
    if len(validation) == 0:
        raise ValueError("empty validation set")
    if len(np.unique(validation.labels)) < 2:
        raise ValueError("validation set needs at least two distinct labels")
    K = validation.num_classes
    template = ScalingParams.identity(kind, K)
    f = _objective(validation, template)
    theta = template.to_vector()  # beta = 1/T = 1 for temperature
    loss, grad = f(theta)
    step = 1.0
    prev = None
    converged = False
    for _ in range(max_iter):
        if np.max(np.abs(grad)) < grad_tol:
            converged = True
            break
        if prev is not None:
            s, yv = theta - prev[0], grad - prev[1]
            sy = float(s @ yv)
            if sy > 0:
                step = float(s @ s) / sy
        gg = float(grad @ grad)
        t = step
        while True:
            cand = theta - t * grad
            c_loss, c_grad = f(cand)
            if c_loss <= loss - 1e-4 * t * gg:
                break
            t *= 0.5
            if t < 1e-20:
                c_grad = None
                break
        if c_grad is None:
            # no representable descent step: stationary to machine precision
            converged = True
            break
        prev = (theta, grad)
        theta, loss, grad = cand, c_loss, c_grad
    best = _from_theta(template, theta)
    if not converged:
        msg = (f"{kind} scaling stopped after {max_iter} iterations with gradient "
               f"norm {np.max(np.abs(grad)):.3g} (best NLL {loss:.6g})")
        if strict:
            raise ConvergenceError(msg, best, loss)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return best


def _from_theta(template: ScalingParams, theta: np.ndarray) -> ScalingParams:
    if template.kind == "temperature":
        return ScalingParams("temperature", T=1.0 / float(theta[0]))
    return template.with_vector(theta)


def reliability_curve(probs: Sequence[tuple[Sequence[float], int]] | tuple[np.ndarray, np.ndarray],
                      bins: int = 15) -> list[tuple[float, float, int]]:
    """Equal-count binning of every (class, probability) pair.

    ``probs`` is a list of ``(probability vector, true label)`` pairs, labels
    ``1..K``, or a ``(matrix, labels)`` tuple.  Returns one
    ``(mean probability, fraction of pairs on the true class, size)`` per bin.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if isinstance(probs, tuple) and len(probs) == 2 and np.ndim(probs[0]) == 2:
        P = np.asarray(probs[0], dtype=float)
        labels = np.asarray(probs[1], dtype=int)
    else:
        if len(probs) == 0:
            raise ValueError("empty input")
        P = np.array([np.asarray(p, dtype=float) for p, _ in probs])
        labels = np.array([int(y) for _, y in probs])
    if P.size == 0:
        raise ValueError("empty input")
    hit = np.zeros_like(P)
    hit[np.arange(len(labels)), labels - 1] = 1.0
    p_flat = P.ravel()
    h_flat = hit.ravel()
    order = np.argsort(p_flat, kind="stable")
    out = []
    for chunk in np.array_split(order, bins):
        if len(chunk) == 0:
            continue
        out.append((float(p_flat[chunk].mean()), float(h_flat[chunk].mean()), int(len(chunk))))
    return out
