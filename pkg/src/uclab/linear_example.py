"""High-dimensional linear classifier trained by one gradient step per example.

Inputs are ``(x1, x2)`` with ``x1 = 2*y*u`` in ``R^K`` and ``x2`` drawn from
``N(0, 32/D I)`` in ``R^D``. Starting from zero, a unit-rate step on
``y*h(x)`` per example leaves ``w1 = 2m*u`` and ``w2 = sum_i y_i x2_i``
regardless of batching. The learner fits ``S`` with a large margin and
generalizes, yet misclassifies every point of the noise-negated copy of
``S``, which has the same distribution as ``S`` itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .losses import Dataset, LossKind, mc_expected_loss
from .numerics import RngStream
from .reports import TrialReport

NOISE_SCALE = 32.0


@dataclass(frozen=True)
class TheoremConstants:
    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3, self.c4) <= 0:
            raise ValueError("theorem constants must be positive")

    @classmethod
    def proof_set(cls) -> "TheoremConstants":
        """Constants used when stating the linear-classifier theorem."""
        return cls(1 / 32, 1 / 2, 3 / 2, math.sqrt(2))

    @classmethod
    def lemma_set(cls) -> "TheoremConstants":
        """Constants of the chi-squared / sub-Gaussian tail lemmas."""
        return cls(1 / 2048, math.sqrt(15 / 16), math.sqrt(17 / 16), math.sqrt(2))


@dataclass(frozen=True)
class LinearTaskConfig:
    K: int
    D: int
    m: int
    u: np.ndarray
    epsilon: float = 0.05
    delta: float = 0.05
    empirical_mode: bool = False

    def __post_init__(self):
        if self.K < 1 or self.D < 0 or self.m < 1:
            raise ValueError("need K >= 1, D >= 0, m >= 1")
        u = np.asarray(self.u, dtype=np.float64)
        object.__setattr__(self, "u", u)
        if u.shape != (self.K,):
            raise ValueError(f"u must have length K={self.K}")
        if abs(np.linalg.norm(u) - 1 / math.sqrt(self.m)) > 1e-9:
            raise ValueError("u must have norm 1/sqrt(m)")

    @property
    def noise_variance(self) -> float:
        return NOISE_SCALE / self.D if self.D > 0 else 0.0

    @property
    def dim(self) -> int:
        return self.K + self.D

    @classmethod
    def create(cls, m: int, epsilon: float = 0.05, delta: float = 0.05, *,
               D: Optional[int] = None, K: int = 1, mode: str = "theorem",
               constants: Optional[TheoremConstants] = None) -> "LinearTaskConfig":
        """Build a config with ``u = e1/sqrt(m)``.

        ``mode="theorem"`` takes ``D`` from :func:`min_dimension`;
        ``mode="empirical"`` uses the cheaper ``D = 20 m ln m`` (at least
        ``m``), which is outside the proven regime. An explicit ``D`` wins
        and is flagged empirical unless it reaches the theorem value.
        """
        need = min_dimension(m, epsilon, delta, constants or TheoremConstants.proof_set())
        if D is None:
            if mode == "theorem":
                D = need
            elif mode == "empirical":
                D = max(m, math.ceil(20 * m * math.log(max(m, 2))))
            else:
                raise ValueError(f"unknown dimension mode {mode!r}")
        u = np.zeros(K)
        u[0] = 1 / math.sqrt(m)
        return cls(K, D, m, u, epsilon, delta, empirical_mode=D < need)


@dataclass
class LinearParams:
    w1: np.ndarray
    w2: np.ndarray

    @property
    def w(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.w


def dimension_conditions(m: int, epsilon: float, delta: float,
                         c: Optional[TheoremConstants] = None) -> tuple[float, float, float]:
    """Right-hand sides of the three sufficient lower bounds on D."""
    if not 0 < delta < 0.25:
        raise ValueError("delta must lie in (0, 1/4)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if m < 1:
        raise ValueError("m must be positive")
    c = c or TheoremConstants.proof_set()
    k = (4 * c.c4 * c.c3 / c.c2 ** 2) ** 2
    log_term = math.log(6 * m / delta)
    return (
        log_term / c.c1,
        m * k * log_term,
        m * k * 2 * math.log(2 / epsilon),
    )


def min_dimension(m: int, epsilon: float, delta: float,
                  c: Optional[TheoremConstants] = None) -> int:
    """Smallest integer D meeting all of :func:`dimension_conditions`."""
    return max(0, math.ceil(max(dimension_conditions(m, epsilon, delta, c))))


def sample_dataset(cfg: LinearTaskConfig, rng: RngStream) -> Dataset:
    return _sample(cfg, rng, cfg.m)


def _sample(cfg: LinearTaskConfig, rng: RngStream, n: int) -> Dataset:
    gen = rng.generator()
    y = 2 * gen.integers(0, 2, size=n) - 1
    X = np.empty((n, cfg.dim))
    X[:, :cfg.K] = 2.0 * y[:, None] * cfg.u[None, :]
    if cfg.D:
        sd = math.sqrt(cfg.noise_variance)
        for i in range(n):
            row = X[i, cfg.K:]
            gen.standard_normal(out=row)
            row *= sd
    return Dataset(X, y)


def fresh_sampler(cfg: LinearTaskConfig):
    """Fresh full-dimensional draws from the task distribution."""
    return lambda stream, count: _sample(cfg, stream, count)


def train_closed_form(data: Dataset, cfg: LinearTaskConfig) -> LinearParams:
    if data.dim != cfg.dim:
        raise ValueError(f"data has dim {data.dim}, config expects {cfg.dim}")
    y = data.y.astype(np.float64)
    # fixed dataset-order accumulation, one unit step per example
    w = np.zeros(cfg.dim)
    for i in range(len(data)):
        w += y[i] * data.X[i]
    return LinearParams(w[:cfg.K].copy(), w[cfg.K:].copy())


def noise_negate(data: Dataset, cfg: LinearTaskConfig) -> Dataset:
    X = data.X.copy()
    X[:, cfg.K:] *= -1.0
    return Dataset(X, data.y.copy())


def projected_test_sampler(cfg: LinearTaskConfig, params: LinearParams):
    """Exact low-dimensional test sampler for the learned linear predictor.

    The prediction depends on ``x2`` only through ``w2 . x2``, which is
    ``N(0, sigma^2 |w2|^2)``. Samples are ``(x1, g)`` with ``g ~ N(0, 1)``;
    pair them with :func:`projected_predictor`.
    """
    def draw(stream: RngStream, count: int) -> Dataset:
        gen = stream.generator()
        y = 2 * gen.integers(0, 2, size=count) - 1
        X = np.empty((count, cfg.K + 1))
        X[:, :cfg.K] = 2.0 * y[:, None] * cfg.u[None, :]
        X[:, cfg.K] = gen.standard_normal(count)
        return Dataset(X, y)
    return draw


def projected_predictor(cfg: LinearTaskConfig, params: LinearParams):
    scale = math.sqrt(cfg.noise_variance) * float(np.linalg.norm(params.w2))
    w = np.concatenate([params.w1, [scale]])
    return lambda X: X @ w


def run_trial(cfg: LinearTaskConfig, n_test: int, gamma: float, rng: RngStream,
              seed: int = 0, projected: bool = True) -> TrialReport:
    """Train on one draw of S and report train/test/bad-set losses.

    ``projected=True`` estimates the test loss with the exact
    one-dimensional reduction of the noise term, which keeps theorem-regime
    dimensions (around a million) affordable.
    """
    if n_test < 1000:
        raise ValueError("n_test must be at least 1000")
    data = sample_dataset(cfg, rng.split(0))
    params = train_closed_form(data, cfg)
    loss = LossKind.ramp(gamma)
    zero_one = LossKind.zero_one()

    train_out = params.predict(data.X)
    train_loss = float(np.mean(loss(train_out, data.y)))
    train_err = float(np.mean(zero_one(train_out, data.y)))

    bad = noise_negate(data, cfg)
    bad_out = params.predict(bad.X)
    bad_loss = float(np.mean(loss(bad_out, bad.y)))
    bad_err = float(np.mean(zero_one(bad_out, bad.y)))
    del bad, data

    if projected:
        predict, sampler = projected_predictor(cfg, params), projected_test_sampler(cfg, params)
    else:
        predict, sampler = params.predict, fresh_sampler(cfg)
    test_loss, test_se = mc_expected_loss(predict, sampler, n_test, loss, rng.split(1))
    test_err, err_se = mc_expected_loss(predict, sampler, n_test, zero_one, rng.split(1))

    report = TrialReport("linear", cfg.m, seed)
    report.metrics.update(
        train_loss=train_loss,
        train_error=train_err,
        test_loss=test_loss,
        test_error=test_err,
        bad_set_loss=bad_loss,
        bad_set_error=bad_err,
        unif_alg_witness=abs(test_loss - bad_loss),
        w_norm=float(math.sqrt(params.w1 @ params.w1 + params.w2 @ params.w2)),
        w2_norm=float(np.linalg.norm(params.w2)),
        noise_dim=float(cfg.D),
    )
    report.std_errs.update(test_loss=test_se, test_error=err_se, unif_alg_witness=test_se)
    report.flags["empirical_mode"] = cfg.empirical_mode
    return report


def weight_norm(cfg: LinearTaskConfig, rng: RngStream) -> float:
    """``|w|_2`` after training on one draw of S."""
    return float(np.linalg.norm(train_closed_form(sample_dataset(cfg, rng.split(0)), cfg).w))


__all__ = [
    "TheoremConstants", "LinearTaskConfig", "LinearParams", "dimension_conditions", "min_dimension",
    "sample_dataset", "train_closed_form", "noise_negate", "run_trial",
    "projected_test_sampler", "projected_predictor", "fresh_sampler", "weight_norm",
]
