"""Infinite-width exponential-activation network after one gradient step per example.

With zero-initialized output weights, the learned function collapses to
``h(z) = sum_i y_i exp(|(z + x_i)/2|^2)`` (up to a positive factor that only
rescales ``h``). Those exponents reach thousands, so ``h`` is only ever
handled as a sign plus ``log|h|``.

Inputs live in ``R^{2D}``: ``x1 = y*u`` with ``|u| = sqrt(D)/2`` and
``x2 ~ N(0, I_D)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linear_example import TheoremConstants
from .losses import Dataset
from .numerics import RngStream, logsumexp, signed_log_diff
from .reports import TrialReport


@dataclass(frozen=True)
class ExpTaskConfig:
    D: int
    m: int
    u: np.ndarray
    epsilon: float = 0.05
    delta: float = 0.05
    empirical_mode: bool = False

    def __post_init__(self):
        if self.D < 1 or self.m < 1:
            raise ValueError("need D >= 1 and m >= 1")
        u = np.asarray(self.u, dtype=np.float64)
        object.__setattr__(self, "u", u)
        if u.shape != (self.D,):
            raise ValueError("u must have length D")
        if abs(np.linalg.norm(u) - math.sqrt(self.D) / 2) > 1e-9:
            raise ValueError("u must have norm sqrt(D)/2")

    @property
    def dim(self) -> int:
        return 2 * self.D

    @classmethod
    def create(cls, m: int, epsilon: float = 0.05, delta: float = 0.05, *,
               D: Optional[int] = None) -> "ExpTaskConfig":
        """Config with ``u = (sqrt(D)/2) e1``; ``D`` defaults to the theorem value.

        The sample-size condition on ``m`` is not enforced here; a run with
        ``m`` below it, or an explicit ``D`` below the theorem value, is
        flagged as empirical mode.
        """
        need = min_dimension_exp(m, epsilon, delta, enforce_sample_condition=False)
        if D is None:
            D = need
        u = np.zeros(D)
        u[0] = math.sqrt(D) / 2
        ok = D >= need and sample_condition_holds(m, delta)
        return cls(D, m, u, epsilon, delta, empirical_mode=not ok)


@dataclass
class ExpNetModel:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.y) == 0:
            raise ValueError("model needs at least one training point")
        self._sqnorm = np.einsum("ij,ij->i", self.X, self.X)

    @classmethod
    def fit(cls, data: Dataset) -> "ExpNetModel":
        return cls(data.X.copy(), data.y.astype(np.int64).copy())

    def log_terms(self, Z: np.ndarray) -> np.ndarray:
        """``|(z + x_i)/2|^2`` for every query row and training point."""
        Z = np.atleast_2d(Z)
        zn = np.einsum("ij,ij->i", Z, Z)
        return (zn[:, None] + self._sqnorm[None, :] + 2.0 * (Z @ self.X.T)) / 4.0

    def predict_log(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Signs and ``log|h|`` for each row of ``Z``."""
        E = self.log_terms(Z)
        pos = self.y > 0
        signs = np.empty(E.shape[0], dtype=np.int64)
        mags = np.empty(E.shape[0])
        for r in range(E.shape[0]):
            lp = logsumexp(E[r, pos]) if pos.any() else -math.inf
            ln = logsumexp(E[r, ~pos]) if (~pos).any() else -math.inf
            signs[r], mags[r] = signed_log_diff(lp, ln)
        return signs, mags


def predict_log_domain(model: ExpNetModel, z) -> tuple[int, float]:
    s, mag = model.predict_log(np.asarray(z, dtype=np.float64)[None, :])
    return int(s[0]), float(mag[0])


def margin_at_least_one(signs: np.ndarray, log_mags: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``y*h >= 1``, decided exactly from the sign and ``log|h| >= 0``."""
    return (signs * y > 0) & (log_mags >= 0.0)


def sample_condition_holds(m: int, delta: float) -> bool:
    return m > 8 * math.log(6 / delta)


def exp_dimension_conditions(m: int, epsilon: float, delta: float,
                             c: Optional[TheoremConstants] = None) -> tuple[float, float, float]:
    """Right-hand sides of the three lower bounds on the half-dimension D."""
    if not 0 < delta < 0.25:
        raise ValueError("delta must lie in (0, 1/4)")
    if epsilon <= 0 or m < 1:
        raise ValueError("need epsilon > 0 and m >= 1")
    c = c or TheoremConstants.lemma_set()
    k = max(1 / c.c2, (16 * c.c3 * c.c4) ** 2)
    return (
        k * 2 * math.log(6 * m / epsilon),
        k * 2 * math.log(6 * m / delta),
        6 * math.log(2 * m),
    )


def min_dimension_exp(m: int, epsilon: float, delta: float,
                      c: Optional[TheoremConstants] = None, *,
                      enforce_sample_condition: bool = True) -> int:
    """Smallest half-dimension D meeting :func:`exp_dimension_conditions`.

    Raises ValueError when ``m <= 8 ln(6/delta)`` unless
    ``enforce_sample_condition`` is False.
    """
    conds = exp_dimension_conditions(m, epsilon, delta, c)
    if enforce_sample_condition and not sample_condition_holds(m, delta):
        raise ValueError(
            f"m={m} too small: need m > 8 ln(6/delta) = {8 * math.log(6 / delta):.3f}")
    return math.ceil(max(conds))


def sample_dataset_exp(cfg: ExpTaskConfig, rng: RngStream, n: Optional[int] = None) -> Dataset:
    n = cfg.m if n is None else n
    gen = rng.generator()
    y = 2 * gen.integers(0, 2, size=n) - 1
    X = np.empty((n, cfg.dim))
    X[:, :cfg.D] = y[:, None] * cfg.u[None, :]
    for i in range(n):
        gen.standard_normal(out=X[i, cfg.D:])
    return Dataset(X, y)


def negate_all_but_noise(data: Dataset, D: Optional[int] = None) -> Dataset:
    D = data.dim // 2 if D is None else D
    X = data.X.copy()
    X[:, :D] *= -1.0
    return Dataset(X, -data.y)


def run_trial_exp(cfg: ExpTaskConfig, n_test: int, rng: RngStream, seed: int = 0,
                  chunk: int = 1000) -> TrialReport:
    data = sample_dataset_exp(cfg, rng.split(0))
    model = ExpNetModel.fit(data)

    s, mag = model.predict_log(data.X)
    train_ok = margin_at_least_one(s, mag, data.y)

    bad = negate_all_but_noise(data, cfg.D)
    bs, _ = model.predict_log(bad.X)
    bad_err = float(np.mean(bs * bad.y <= 0))

    wrong = 0
    test_rng = rng.split(1)
    for k, start in enumerate(range(0, n_test, chunk)):
        batch = sample_dataset_exp(cfg, test_rng.split(k), min(chunk, n_test - start))
        ts, tmag = model.predict_log(batch.X)
        if not np.all(np.isfinite(tmag) | (ts == 0)):
            raise FloatingPointError("non-finite log-margin on test data")
        wrong += int(np.sum(ts * batch.y <= 0))
    test_err = wrong / n_test
    se = math.sqrt(test_err * (1 - test_err) / n_test) if n_test > 1 else 0.0

    report = TrialReport("expnet", cfg.m, seed)
    report.metrics.update(
        train_margin_fraction=float(np.mean(train_ok)),
        train_error=float(np.mean(s * data.y <= 0)),
        min_train_log_margin=float(np.min(np.where(s * data.y > 0, mag, -np.inf))),
        test_error=test_err,
        bad_set_error=bad_err,
        unif_alg_witness=abs(test_err - bad_err),
        noise_dim=float(cfg.D),
    )
    report.std_errs.update(test_error=se, unif_alg_witness=se)
    report.flags["empirical_mode"] = cfg.empirical_mode
    return report
