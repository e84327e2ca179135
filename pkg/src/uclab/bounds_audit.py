"""Norm-based bounds, weight-trajectory and margin diagnostics, and estimators
for the generalization gap and the algorithm-dependent uniform-convergence gap.

All big-O constants in the norm bounds are set to 1: the values are meant
for tracking trends in ``m``, not for comparison across bound families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .losses import Dataset
from .numerics import RngStream, frobenius_norm, norm21, spectral_norm
from .reports import TrialReport

E32 = math.exp(1.5)


@dataclass
class BoundReport:
    dist_from_init_per_layer: list[float]
    dist_from_origin: float
    spectral_norms: list[float]
    frobenius_norms: list[float]
    norm21_values: list[float]
    bound_neyshabur18: float
    bound_bartlett17: float
    # None unless the network has exactly two layers
    bound_two_layer19: Optional[float]
    bound_two_layer19_first_term: Optional[float]
    gamma_used: float
    B_used: float
    m: int

    @property
    def spectral_product(self) -> float:
        return float(np.prod(self.spectral_norms))

    @property
    def dist_from_init(self) -> float:
        return math.sqrt(sum(d * d for d in self.dist_from_init_per_layer))

    def as_metrics(self) -> dict[str, float]:
        out = {
            "dist_from_init": self.dist_from_init,
            "dist_from_origin": self.dist_from_origin,
            "spectral_product": self.spectral_product,
            "frobenius_product": float(np.prod(self.frobenius_norms)),
            "bound_neyshabur18": self.bound_neyshabur18,
            "bound_bartlett17": self.bound_bartlett17,
        }
        if self.bound_two_layer19 is not None:
            out["bound_two_layer19"] = self.bound_two_layer19
            out["bound_two_layer19_first_term"] = self.bound_two_layer19_first_term
        return out


@dataclass
class MarginStats:
    percentile_1: float
    median: float
    mean_train: float
    mean_test: float
    pseudo_overfit_gap: float


@dataclass
class EpsReport:
    eps_gen_estimate: float
    eps_unif_alg_lower: float
    std_err: float
    n_trials: int
    n_retained: int


Layers = Union["TwoLayerNet", Sequence[np.ndarray]]  # noqa: F821


def _unpack(net, inits=None) -> tuple[list[np.ndarray], list[np.ndarray]]:
    if hasattr(net, "layers") and hasattr(net, "init_layers"):
        return [np.asarray(w, float) for w in net.layers], [np.asarray(z, float) for z in net.init_layers]
    layers = [np.atleast_2d(np.asarray(w, float)) for w in net]
    if inits is None:
        raise ValueError("plain layer lists need explicit initialization snapshots")
    zs = [np.atleast_2d(np.asarray(z, float)) for z in inits]
    if len(zs) != len(layers) or any(w.shape != z.shape for w, z in zip(layers, zs)):
        raise ValueError("initialization snapshots do not match layer shapes")
    return layers, zs


def compute_bounds(net: Layers, B: float, gamma: float, m: int,
                   inits: Optional[Sequence[np.ndarray]] = None,
                   width: Optional[int] = None) -> BoundReport:
    """Evaluate the spectral/distance norm bounds and the raw norms behind them.

    ``width`` defaults to the largest hidden-layer size (the output size of
    a single-layer list).
    """
    if gamma <= 0 or B <= 0 or m < 1:
        raise ValueError("need gamma > 0, B > 0 and m >= 1")
    Ws, Zs = _unpack(net, inits)
    d = len(Ws)
    if width is None:
        hidden = [w.shape[0] for w in Ws[:-1]] or [Ws[0].shape[0]]
        width = max(hidden)
    spec = [spectral_norm(w) for w in Ws]
    if any(s == 0 for s in spec):
        raise ZeroDivisionError("a layer has zero spectral norm")
    frob = [frobenius_norm(w) for w in Ws]
    diffs = [w - z for w, z in zip(Ws, Zs)]
    dist = [frobenius_norm(x) for x in diffs]
    n21 = [norm21(x) for x in diffs]

    lead = B * d * math.sqrt(width) / (gamma * math.sqrt(m)) * float(np.prod(spec))
    dist_n = math.sqrt(sum((f / s) ** 2 for f, s in zip(dist, spec)))
    dist_b = sum((n / s) ** (2 / 3) for n, s in zip(n21, spec)) ** 1.5 / (d * math.sqrt(width))

    two19 = first = None
    if d == 2:
        first = frob[1] * (dist[0] + spectral_norm(Zs[0])) / (gamma * math.sqrt(m))
        two19 = first + math.sqrt(width) / math.sqrt(m)

    return BoundReport(
        dist_from_init_per_layer=dist,
        dist_from_origin=math.sqrt(sum(f * f for f in frob)),
        spectral_norms=spec,
        frobenius_norms=frob,
        norm21_values=n21,
        bound_neyshabur18=lead * dist_n,
        bound_bartlett17=lead * dist_b,
        bound_two_layer19=two19,
        bound_two_layer19_first_term=first,
        gamma_used=gamma,
        B_used=B,
        m=m,
    )


def _flat(layers: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(w) for w in layers])


def trajectory_diagnostics(net_a: Layers, net_b: Layers,
                           inits_a: Optional[Sequence[np.ndarray]] = None) -> tuple[float, float, float]:
    """``(|theta_a - theta_b|, prod_k |W_k^a|_2, |theta_a - theta_a^init|)``.

    Plain layer lists without ``inits_a`` are treated as their own
    initialization, giving zero distance from init.
    """
    la = list(net_a.layers) if hasattr(net_a, "layers") else [np.atleast_2d(w) for w in net_a]
    lb = list(net_b.layers) if hasattr(net_b, "layers") else [np.atleast_2d(w) for w in net_b]
    if len(la) != len(lb) or any(np.shape(a) != np.shape(b) for a, b in zip(la, lb)):
        raise ValueError("networks have different shapes")
    if hasattr(net_a, "init_layers"):
        za = list(net_a.init_layers)
    else:
        za = [np.atleast_2d(z) for z in inits_a] if inits_a is not None else la
    between = float(np.linalg.norm(_flat(la) - _flat(lb)))
    prod = float(np.prod([spectral_norm(w) for w in la]))
    from_init = float(np.linalg.norm(_flat(la) - _flat(za)))
    return between, prod, from_init


def margin_stats(net, train: Dataset, test: Dataset) -> MarginStats:
    """Train-margin order statistics and the mean train-test margin gap.

    ``net`` needs an ``output(X)`` method returning ``f[+1] - f[-1]``.
    """
    if len(train) == 0 or len(test) == 0:
        raise ValueError("datasets must be nonempty")
    tr = train.y * net.output(train.X)
    te = test.y * net.output(test.X)
    mean_tr, mean_te = float(np.mean(tr)), float(np.mean(te))
    return MarginStats(
        percentile_1=float(np.percentile(tr, 1)),
        median=float(np.median(tr)),
        mean_train=mean_tr,
        mean_test=mean_te,
        pseudo_overfit_gap=mean_tr - mean_te,
    )


def estimate_eps(trials: Sequence[Sequence[float]], delta: float,
                 min_trials: int = 10) -> EpsReport:
    """Turn per-trial ``(test, train, bad_set[, std_err])`` losses into estimates.

    The generalization estimate is the empirical ``(1 - delta)``-quantile of
    ``test - train``. For the uniform-convergence certificate the
    ``floor(delta * n)`` trials with the largest ``test - train`` are
    dropped, and the smallest ``|test - bad_set|`` among the rest is
    reported. ``std_err`` is the largest per-trial error supplied for the
    retained trials (0 if none).
    """
    if len(trials) < min_trials:
        raise ValueError(f"need at least {min_trials} trials, got {len(trials)}")
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    arr = np.array([tuple(t) + (0.0,) * (4 - len(t)) for t in trials], dtype=float)
    test, train, bad, se = arr.T
    gaps = test - train
    n = len(gaps)
    k = max(1, math.ceil((1 - delta) * n))
    eps_gen = float(np.sort(gaps)[k - 1])
    drop = math.floor(delta * n)
    # stable sort: ties keep trial order, so the retained set is deterministic
    keep = np.argsort(-gaps, kind="stable")[drop:]
    lower = float(np.min(np.abs(test[keep] - bad[keep])))
    return EpsReport(eps_gen, lower, float(np.max(se[keep])), n, len(keep))


def pb_det_lower_bounds(eps_unif_alg: float, eps_gen: float, eps_hat: float) -> tuple[float, float]:
    """Lower bounds on the two deterministic PAC-Bayes bound values.

    Negative results are returned as is; they certify nothing.
    """
    slack = eps_hat + eps_gen
    type_a = math.exp(-1.5) * eps_unif_alg - (1 - math.exp(-1.5)) * slack
    type_b = eps_unif_alg - (E32 - 1) * slack
    return type_a, type_b


def _key(x: np.ndarray) -> bytes:
    # + 0.0 folds -0.0 into 0.0 so equal vectors hash equally
    return (np.asarray(x, dtype=np.float64) + 0.0).tobytes()


def abstract_memorizer(h_star: Callable[[np.ndarray], np.ndarray], S: Dataset) -> Callable[[np.ndarray], np.ndarray]:
    """Classifier equal to ``h_star`` except on the negations of the training inputs.

    ``h_star`` maps a batch ``(n, D)`` to labels in {-1, +1}; so does the
    returned function.
    """
    flipped = {_key(-x) for x in S.X}

    def h(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.asarray(h_star(X), dtype=np.int64).copy()
        hit = np.fromiter((_key(x) in flipped for x in X), dtype=bool, count=X.shape[0])
        out[hit] *= -1
        return out

    return h


def first_coordinate_sign(X: np.ndarray) -> np.ndarray:
    return np.where(np.atleast_2d(X)[:, 0] >= 0, 1, -1)


def run_abstract(D: int, m: int, n_test: int, rng: RngStream, seed: int = 0,
                 h_star: Callable[[np.ndarray], np.ndarray] = first_coordinate_sign) -> TrialReport:
    """Memorizer demo on spherical Gaussian inputs labelled by ``h_star``."""
    gen = rng.split(0).generator()
    X = gen.standard_normal((m, D))
    S = Dataset(X, h_star(X))
    h = abstract_memorizer(h_star, S)
    bad_X = -S.X
    bad = Dataset(bad_X, h_star(bad_X))

    def err(data: Dataset) -> float:
        return float(np.mean(h(data.X) != data.y))

    wrong = 0
    test_rng = rng.split(1)
    chunk = 10000
    for k, start in enumerate(range(0, n_test, chunk)):
        Z = test_rng.split(k).generator().standard_normal((min(chunk, n_test - start), D))
        wrong += int(np.sum(h(Z) != h_star(Z)))
    test_err = wrong / n_test
    bad_err = err(bad)
    report = TrialReport("abstract", m, seed)
    report.metrics.update(
        train_error=err(S),
        test_error=test_err,
        bad_set_error=bad_err,
        unif_alg_witness=abs(test_err - bad_err),
    )
    return report


def report_dict(obj) -> dict:
    return asdict(obj)
