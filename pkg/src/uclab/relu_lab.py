"""Two-layer ReLU network trained by SGD on concentric hyperspheres.

Logits are ``W2 @ relu(W1 @ [x; 1])`` with two outputs ordered ``[class -1,
class +1]``. The last column of ``W1`` is the hidden bias: without it the
network is positively homogeneous and cannot tell the two spheres apart. Training stops once a ``stop_fraction`` share of the training
set has logit margin at least ``stop_margin``.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .losses import Dataset, LossKind, binary_output
from .numerics import RngStream

log = logging.getLogger(__name__)

N_LOGITS = 2
RADIUS_TOL = 1e-6


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TwoLayerNet:
    W1: np.ndarray
    W2: np.ndarray
    Z1: np.ndarray = None
    Z2: np.ndarray = None

    def __post_init__(self):
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.W2.shape[1] != self.W1.shape[0] \
                or self.W1.shape[1] < 2:
            raise ValueError(f"inconsistent shapes {self.W1.shape}, {self.W2.shape}")
        if self.W2.shape[0] != N_LOGITS:
            raise ValueError("network must have exactly two logits")
        if self.Z1 is None:
            self.Z1 = self.W1.copy()
        if self.Z2 is None:
            self.Z2 = self.W2.copy()
        if self.Z1.shape != self.W1.shape or self.Z2.shape != self.W2.shape:
            raise ValueError("initialization snapshots do not match weight shapes")
        self.Z1.setflags(write=False)
        self.Z2.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.W1.shape[1] - 1

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    @property
    def layers(self) -> list[np.ndarray]:
        return [self.W1, self.W2]

    @property
    def init_layers(self) -> list[np.ndarray]:
        return [self.Z1, self.Z2]

    def copy(self) -> "TwoLayerNet":
        return TwoLayerNet(self.W1.copy(), self.W2.copy(), self.Z1, self.Z2)

    def hidden(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(_preact(self.W1, X), 0.0)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.hidden(X) @ self.W2.T

    def output(self, X: np.ndarray) -> np.ndarray:
        """Binary real output ``f[+1] - f[-1]``."""
        return binary_output(self.logits(X))

    def margins(self, data: Dataset) -> np.ndarray:
        return data.y * self.output(data.X)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 64
    stop_fraction: float = 0.99
    stop_margin: float = 10.0
    max_epochs: int = 500
    loss: str = "cross_entropy"
    rng: RngStream = field(default_factory=lambda: RngStream(0))

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 < self.stop_fraction <= 1:
            raise ValueError("stop_fraction must lie in (0, 1]")
        if self.loss not in ("cross_entropy", "squared"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class HypersphereConfig:
    dim: int = 256
    r_inner: float = 1.0
    r_outer: float = 1.1
    n: int = 4096

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("need 0 < r_inner < r_outer")
        if self.dim < 1:
            raise ValueError("dim must be positive")


def sample_hypersphere(cfg: HypersphereConfig, rng: RngStream, n: Optional[int] = None) -> Dataset:
    n = cfg.n if n is None else n
    gen = rng.generator()
    y = 2 * gen.integers(0, 2, size=n) - 1
    g = gen.standard_normal((n, cfg.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = np.where(y > 0, cfg.r_outer, cfg.r_inner)
    return Dataset(g * radius[:, None], y)


def hypersphere_sampler(cfg: HypersphereConfig):
    return lambda stream, count: sample_hypersphere(cfg, stream, count)


def project_swap(data: Dataset, cfg: HypersphereConfig) -> Dataset:
    """Move each point to the other sphere along its direction and flip its label."""
    norms = np.linalg.norm(data.X, axis=1)
    inner = np.abs(norms - cfg.r_inner) <= RADIUS_TOL
    outer = np.abs(norms - cfg.r_outer) <= RADIUS_TOL
    if not np.all(inner | outer):
        bad = int(np.argmin(inner | outer))
        raise ValueError(f"point {bad} has norm {norms[bad]!r}, not on either sphere")
    target = np.where(inner, cfg.r_outer, cfg.r_inner)
    X = data.X * (target / norms)[:, None]
    return Dataset(X, -data.y)


def init_two_layer(dim: int, width: int, rng: RngStream, scale: float = 1.0) -> TwoLayerNet:
    """Gaussian init with variance ``scale**2 / fan_in`` for both layers.

    The bias column counts toward the first layer's fan-in.
    """
    if dim < 1 or width < 1:
        raise ValueError("dim and width must be positive")
    gen = rng.generator()
    W1 = gen.standard_normal((width, dim + 1)) * (scale / math.sqrt(dim + 1))
    W2 = gen.standard_normal((N_LOGITS, width)) * (scale / math.sqrt(width))
    return TwoLayerNet(W1, W2)


def _preact(W1: np.ndarray, X: np.ndarray) -> np.ndarray:
    return X @ W1[:, :-1].T + W1[:, -1]


def _targets(y: np.ndarray) -> np.ndarray:
    return (np.asarray(y) > 0).astype(np.int64)


def loss_and_grads(net: TwoLayerNet, X: np.ndarray, y: np.ndarray, loss: str = "cross_entropy"):
    """Mean batch loss and its gradients with respect to ``W1`` and ``W2``.

    Cross-entropy is softmax over the two logits; squared loss is
    ``0.5 * |logits - onehot|^2``.
    """
    pre = _preact(net.W1, X)
    H = np.maximum(pre, 0.0)
    Z = H @ net.W2.T
    n = X.shape[0]
    t = _targets(y)
    onehot = np.zeros_like(Z)
    onehot[np.arange(n), t] = 1.0
    if loss == "cross_entropy":
        zmax = Z.max(axis=1, keepdims=True)
        ez = np.exp(Z - zmax)
        p = ez / ez.sum(axis=1, keepdims=True)
        value = float(np.mean(zmax[:, 0] + np.log(ez.sum(axis=1)) - Z[np.arange(n), t]))
        dZ = (p - onehot) / n
    elif loss == "squared":
        diff = Z - onehot
        value = float(0.5 * np.mean(np.sum(diff * diff, axis=1)))
        dZ = diff / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    gW2 = dZ.T @ H
    dH = (dZ @ net.W2) * (pre > 0)
    gW1 = np.empty_like(net.W1)
    gW1[:, :-1] = dH.T @ X
    gW1[:, -1] = dH.sum(axis=0)
    return value, gW1, gW2


def margin_fraction(net: TwoLayerNet, data: Dataset, stop_margin: float,
                    chunk: int = 8192) -> float:
    hits = 0
    for s in range(0, len(data), chunk):
        out = net.output(data.X[s:s + chunk])
        hits += int(np.sum(data.y[s:s + chunk] * out >= stop_margin))
    return hits / len(data)


def train_sgd(net: TwoLayerNet, data: Dataset, cfg: TrainConfig) -> tuple[TwoLayerNet, int, bool]:
    """Mini-batch SGD until the margin stopping rule fires or ``max_epochs``.

    The rule is checked before the first epoch and after each one. The input
    network is not modified.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.dim != net.dim:
        raise ValueError(f"data dim {data.dim} does not match network dim {net.dim}")
    net = net.copy()
    gen = cfg.rng.generator()
    lr = cfg.learning_rate
    n = len(data)
    step = 0
    if margin_fraction(net, data, cfg.stop_margin) >= cfg.stop_fraction:
        return net, 0, True
    for epoch in range(1, cfg.max_epochs + 1):
        order = gen.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                _, g1, g2 = loss_and_grads(net, data.X[idx], data.y[idx], cfg.loss)
                net.W1 -= lr * g1
                net.W2 -= lr * g2
            step += 1
            if not (np.isfinite(net.W1).all() and np.isfinite(net.W2).all()):
                raise TrainingDiverged(f"non-finite weights at epoch {epoch}, step {step}")
        frac = margin_fraction(net, data, cfg.stop_margin)
        log.debug("epoch %d: margin fraction %.4f", epoch, frac)
        if frac >= cfg.stop_fraction:
            return net, epoch, True
    return net, cfg.max_epochs, False


def evaluate_error(net: TwoLayerNet, data: Dataset, loss: Optional[LossKind] = None,
                   chunk: int = 8192) -> float:
    loss = loss or LossKind.zero_one()
    total = 0.0
    for s in range(0, len(data), chunk):
        total += float(np.sum(loss(net.output(data.X[s:s + chunk]), data.y[s:s + chunk])))
    return total / len(data)


def interpolate(net_a: TwoLayerNet, net_b: TwoLayerNet, t: float) -> TwoLayerNet:
    if net_a.W1.shape != net_b.W1.shape or net_a.W2.shape != net_b.W2.shape:
        raise ValueError("networks have different shapes")
    return TwoLayerNet((1 - t) * net_a.W1 + t * net_b.W1,
                       (1 - t) * net_a.W2 + t * net_b.W2, net_a.Z1, net_a.Z2)


def interpolate_eval(net_a: TwoLayerNet, net_b: TwoLayerNet, ts: Sequence[float],
                     data: Dataset) -> list[tuple[float, float]]:
    out = []
    for t in ts:
        if t == 0:
            net = net_a
        elif t == 1:
            net = net_b
        else:
            net = interpolate(net_a, net_b, t)
        out.append((float(t), evaluate_error(net, data)))
    return out


# Binary weight format, all integers little-endian:
#   b"UCLABW01", uint32 matrix count, then per matrix:
#   uint32 name length, name (ASCII), uint64 rows, uint64 cols,
#   rows*cols float64 values in row-major order.
# Matrices are written in the order W1, W2, Z1, Z2.
_MAGIC = b"UCLABW01"
_NAMES = ("W1", "W2", "Z1", "Z2")


def save_weights(net: TwoLayerNet, path) -> None:
    mats = (net.W1, net.W2, net.Z1, net.Z2)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(mats)))
        for name, mat in zip(_NAMES, mats):
            raw = name.encode("ascii")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<QQ", *mat.shape))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_weights(path) -> TwoLayerNet:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a weight snapshot")
    pos = 8
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    mats = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + ln].decode("ascii")
        pos += ln
        rows, cols = struct.unpack_from("<QQ", data, pos)
        pos += 16
        size = rows * cols * 8
        mats[name] = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(rows, cols).copy()
        pos += size
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in weight snapshot")
    return TwoLayerNet(mats["W1"], mats["W2"], mats["Z1"], mats["Z2"])


def with_seed(cfg: TrainConfig, rng: RngStream) -> TrainConfig:
    return replace(cfg, rng=rng)
