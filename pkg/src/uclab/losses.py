"""Margins, margin-based losses and empirical / Monte Carlo loss estimates.

Binary predictors map a batch of inputs ``X`` of shape ``(n, dim)`` to one
real output per row; classification is by sign. Two-logit networks are
reduced to this form through ``logit[+1] - logit[-1]`` (see
:func:`binary_output`), which makes the logit margin and ``y * h(x)``
coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import RngStream

Predictor = Callable[[np.ndarray], np.ndarray]
# sampler(stream, count) -> Dataset of `count` fresh draws
Sampler = Callable[[RngStream, int], "Dataset"]

MC_CHUNK = 4096


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    y: int


@dataclass
class Dataset:
    """Rows of ``X`` are inputs, ``y`` holds labels (+-1)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.X.ndim != 2:
            raise ValueError("Dataset.X must be 2-D")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("label count does not match number of inputs")

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> LabeledExample:
        return LabeledExample(self.X[i], int(self.y[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return len(self)

    @classmethod
    def from_examples(cls, examples) -> "Dataset":
        examples = list(examples)
        if not examples:
            raise ValueError("no examples")
        return cls(np.stack([np.asarray(e.x, dtype=np.float64) for e in examples]),
                   np.array([e.y for e in examples]))

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]))


@dataclass(frozen=True)
class LossKind:
    """One of ``ramp`` (gamma), ``strict`` (gamma) or ``zero_one``."""

    kind: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ramp", "strict", "zero_one"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @classmethod
    def ramp(cls, gamma: float) -> "LossKind":
        return cls("ramp", gamma)

    @classmethod
    def strict(cls, gamma: float) -> "LossKind":
        return cls("strict", gamma)

    @classmethod
    def zero_one(cls) -> "LossKind":
        return cls("zero_one", 0.0)

    def __call__(self, y_out, y):
        if self.kind == "ramp":
            return ramp_loss(y_out, y, self.gamma)
        if self.kind == "strict":
            return strict_loss(y_out, y, self.gamma)
        return ramp_loss(y_out, y, 0.0)


def margin(logits, y: int) -> float:
    """Correct-class logit minus the largest other logit."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("margin needs a vector of at least 2 logits")
    if not (0 <= y < z.size):
        raise IndexError(f"class index {y} out of range for {z.size} logits")
    return float(z[y] - np.max(np.delete(z, y)))


def margins(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row-wise :func:`margin` for a ``(n, k)`` logit matrix and class indices."""
    z = np.asarray(logits, dtype=np.float64)
    idx = np.arange(z.shape[0])
    correct = z[idx, labels]
    other = z.copy()
    other[idx, labels] = -np.inf
    return correct - other.max(axis=1)


def binary_output(logits: np.ndarray) -> np.ndarray:
    """Two-logit output ``[f(-1), f(+1)]`` to the real output ``f[+1] - f[-1]``."""
    z = np.asarray(logits)
    return z[..., 1] - z[..., 0]


def ramp_loss(y_out, y, gamma: float):
    """1 for ``y*y_out <= 0``, 0 for ``y*y_out >= gamma``, linear in between.

    ``gamma == 0`` gives the 0-1 loss. Works elementwise on arrays.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    s = np.asarray(y, dtype=np.float64) * np.asarray(y_out, dtype=np.float64)
    if gamma == 0:
        out = np.where(s <= 0, 1.0, 0.0)
    else:
        out = np.where(s <= 0, 1.0, np.where(s >= gamma, 0.0, 1.0 - s / gamma))
    return float(out) if out.ndim == 0 else out


def strict_loss(y_out, y, gamma: float):
    """0 if ``y*y_out >= gamma`` else 1."""
    s = np.asarray(y, dtype=np.float64) * np.asarray(y_out, dtype=np.float64)
    out = np.where(s >= gamma, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def zero_one_loss(y_out, y):
    return ramp_loss(y_out, y, 0.0)


def empirical_loss(predict: Predictor, data: Dataset, loss: LossKind) -> float:
    if len(data) == 0:
        raise ValueError("empirical loss of an empty dataset")
    out = np.asarray(predict(data.X), dtype=np.float64)
    return float(np.mean(loss(out, data.y)))


def mc_expected_loss(predict: Predictor, sampler: Sampler, n: int, loss: LossKind,
                     rng: RngStream, chunk: int = MC_CHUNK) -> tuple[float, float]:
    """Monte Carlo estimate of the expected loss and its standard error.

    Draws are taken in chunks of ``chunk`` samples; chunk ``k`` uses
    ``rng.split(k)`` so results do not depend on how the work is scheduled.
    """
    if n < 1:
        raise ValueError("need at least one Monte Carlo sample")
    total = 0.0
    total_sq = 0.0
    for k, start in enumerate(range(0, n, chunk)):
        count = min(chunk, n - start)
        batch = sampler(rng.split(k), count)
        vals = np.asarray(loss(np.asarray(predict(batch.X)), batch.y), dtype=np.float64)
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
    mean = total / n
    if n == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - n * mean * mean) / (n - 1))
    return mean, math.sqrt(var / n)


def uniform_sampler(data: Dataset) -> Sampler:
    """Sampler drawing uniformly with replacement from ``data``."""
    def draw(stream: RngStream, count: int) -> Dataset:
        idx = stream.generator().integers(0, len(data), size=count)
        return Dataset(data.X[idx], data.y[idx])
    return draw
