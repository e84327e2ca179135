"""Linear algebra, random streams, log-domain arithmetic and power-law fits.

Matrices are plain 2-D float64 numpy arrays. Everything here is a pure
function of its inputs; randomness flows only through :class:`RngStream`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10000

_MASK64 = (1 << 64) - 1


class ConvergenceError(RuntimeError):
    """Power iteration ran out of iterations; ``estimate`` is the best value seen."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of a reproducible random stream.

    Backed by numpy's counter-based Philox generator keyed through a
    ``SeedSequence``. Equal ``(seed, stream_id)`` pairs give identical
    sequences; ``split`` derives child streams without consuming any state
    of the parent, so trials can be farmed out in any order.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64) or not (0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def split(self, index: int) -> "RngStream":
        """Child stream number ``index`` (deterministic, order independent)."""
        if index < 0:
            raise ValueError("split index must be non-negative")
        child = _splitmix64(self.stream_id ^ _splitmix64(index + 1))
        return RngStream(self.seed, child)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def frobenius_norm(m) -> float:
    return float(np.sqrt(np.sum(as_matrix(m) ** 2)))


def norm21(m) -> float:
    """Sum over columns of each column's l2 norm."""
    a = as_matrix(m)
    return float(np.sum(np.sqrt(np.sum(a * a, axis=0))))


def _power_iterate(gram: np.ndarray, v: np.ndarray, tol: float, max_iter: int):
    # Stops on the eigen-residual, which bounds the eigenvalue error.
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = gram @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, v, True, it
        lam = float(v @ w)
        resid = np.linalg.norm(w - lam * v)
        v = w / nrm
        if resid <= tol * max(lam, np.finfo(float).tiny):
            return lam, v, True, it
    return lam, v, False, max_iter


def spectral_norm(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Largest singular value by power iteration on the smaller Gram matrix.

    Starts from the normalized all-ones vector, then repeats once from a
    fixed pseudo-random vector so that a start orthogonal to the top
    singular direction cannot go unnoticed. The larger converged value wins.

    Raises:
        ConvergenceError: if either run fails to converge within ``max_iter``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = as_matrix(m)
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    n = gram.shape[0]
    if not np.any(gram):
        return 0.0

    starts = [np.full(n, 1.0 / math.sqrt(n))]
    r = np.random.Generator(np.random.Philox(20190613)).standard_normal(n)
    starts.append(r / np.linalg.norm(r))

    best = 0.0
    for v0 in starts:
        lam, _, ok, _ = _power_iterate(gram, v0, tol, max_iter)
        best = max(best, lam)
        if not ok:
            raise ConvergenceError(
                f"power iteration did not converge in {max_iter} iterations",
                math.sqrt(max(best, 0.0)),
            )
    return math.sqrt(max(best, 0.0))


def logsumexp(xs: Iterable[float]) -> float:
    a = np.asarray(list(xs) if not isinstance(xs, np.ndarray) else xs, dtype=np.float64)
    if a.size == 0:
        raise ValueError("logsumexp of an empty sequence")
    top = float(np.max(a))
    if top == -math.inf:
        return -math.inf
    if top == math.inf:
        return math.inf
    return top + math.log(float(np.sum(np.exp(a - top))))


def signed_log_diff(log_a: float, log_b: float) -> tuple[int, float]:
    """Sign and log-magnitude of ``exp(log_a) - exp(log_b)``."""
    if log_a == log_b:
        return 0, -math.inf
    if log_a > log_b:
        return 1, log_a + math.log(-math.expm1(log_b - log_a))
    return -1, log_b + math.log(-math.expm1(log_a - log_b))


@dataclass(frozen=True)
class SlopeFit:
    exponent: float
    intercept: float
    r_squared: float

    def predict(self, m: float) -> float:
        return math.exp(self.intercept) * m ** self.exponent


def fit_loglog_slope(points: Sequence[tuple[float, float]]) -> SlopeFit:
    """Least-squares line through ``(ln m, ln v)``."""
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least 2 points to fit a slope")
    arr = np.asarray(pts, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ValueError("log-log fit needs strictly positive coordinates")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("log-log fit needs at least two distinct m values")
    mx, my = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    sxy = float(np.sum((lx - mx) * (ly - my)))
    syy = float(np.sum((ly - my) ** 2))
    slope = sxy / sxx
    intercept = my - slope * mx
    if syy == 0.0:
        r2 = 1.0
    else:
        resid = float(np.sum((ly - (intercept + slope * lx)) ** 2))
        r2 = min(1.0, max(0.0, 1.0 - resid / syy))
    return SlopeFit(float(slope), float(intercept), r2)


def sample_gaussian(rng: RngStream | np.random.Generator, dim: int, variance: float) -> np.ndarray:
    if variance < 0:
        raise ValueError("variance must be non-negative")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return math.sqrt(variance) * gen.standard_normal(dim)
