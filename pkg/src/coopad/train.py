"""Cooperative end-to-end training: distort, forward, BCE + lambda*MSE,
backprop, Adam."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .augment import distort
from .data import DataError, window_origins
from .numerics import AdamState, adam_step

PROB_CLAMP = 1e-7


class NumericError(Exception):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.002
    epochs: int = 300
    batch: int = 128
    seed: int = 0
    distortion_prob: float = 0.9
    exclude_kinds: tuple = ()
    grad_clip: float = 5.0  # global L2 norm; <= 0 disables

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.batch < 1:
            raise ValueError("lr > 0, epochs >= 0, batch >= 1 required")


@dataclass
class LossBreakdown:
    bce: float
    mse: float
    total: float


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)  # rows of (epoch, bce, mse, total, seconds)

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("epoch,bce,mse,total,seconds\n")
            for row in self.epochs:
                f.write("%d,%.10g,%.10g,%.10g,%.4f\n" % row)


def bce_loss(probs, labels):
    """Mean negated binary cross-entropy, probabilities clamped at 1e-7."""
    a = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(a) + (1.0 - y) * np.log(1.0 - a)).mean())


def mse_loss(x_r, x_clean):
    return float(np.mean((np.asarray(x_r) - np.asarray(x_clean)) ** 2))


def loss_and_grads(model, x_distorted, x_clean, patch_labels, rng=None):
    """One batch: forward, loss terms, full backward.

    Returns (LossBreakdown, grads, ForwardResult).
    """
    result = model.forward(x_distorted, rng=rng, training=True, keep_cache=True)
    a_c = result.probs.combined                       # (N, B)
    y = np.asarray(patch_labels, dtype=np.float64).T  # (B, N) in -> (N, B)
    ac = np.clip(a_c, PROB_CLAMP, 1.0 - PROB_CLAMP)
    bce = float(-(y * np.log(ac) + (1.0 - y) * np.log(1.0 - ac)).mean())
    mse = mse_loss(result.x_r, x_clean)
    lam = model.config.lam
    total = bce + lam * mse
    d_ac = (ac - y) / (ac * (1.0 - ac)) / ac.size
    d_xr = lam * 2.0 * (result.x_r - np.atleast_2d(x_clean)) / result.x_r.size
    grads = model.backward(result.cache, d_ac, d_xr)
    return LossBreakdown(bce=bce, mse=mse, total=total), grads, result


def clip_grads(grads, max_norm):
    if max_norm <= 0:
        return
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def train_epoch(train_values, period, model, tcfg, adam, rng):
    """One pass over the train region: fresh window phase, shuffled batches,
    distortion per window, one Adam step per batch. Returns the epoch-mean
    LossBreakdown."""
    c = model.config
    T = c.T
    if len(train_values) < T:
        raise DataError(f"train region ({len(train_values)}) shorter than window T={T}")
    phase = int(rng.integers(0, T)) if len(train_values) > T else 0
    if phase > len(train_values) - T:
        phase = 0
    origins = window_origins(len(train_values), T, stride=T, phase=phase)
    order = rng.permutation(len(origins))
    sums = np.zeros(3)
    nb = 0
    for start in range(0, len(order), tcfg.batch):
        idx = order[start:start + tcfg.batch]
        clean = np.stack([train_values[o:o + T] for o in origins[idx]])
        distorted = np.empty_like(clean)
        labels = np.empty((len(idx), c.N), dtype=np.int8)
        for j in range(len(idx)):
            aug = distort(clean[j], period, c.P, rng,
                          p_distort=tcfg.distortion_prob,
                          exclude=tcfg.exclude_kinds)
            distorted[j] = aug.distorted
            labels[j] = aug.patch_labels
        loss, grads, _ = loss_and_grads(model, distorted, clean, labels, rng=rng)
        if not np.isfinite(loss.total):
            raise NumericError(
                f"non-finite loss (bce={loss.bce}, mse={loss.mse}) "
                f"on batch origins {origins[idx].tolist()}")
        clip_grads(grads, tcfg.grad_clip)
        adam_step(model.tensors, grads, adam, tcfg.lr)
        sums += (loss.bce, loss.mse, loss.total)
        nb += 1
    mean = sums / max(nb, 1)
    return LossBreakdown(bce=mean[0], mse=mean[1], total=mean[2])


def fit(train_values, period, model, tcfg):
    """Train for the fixed epoch budget; returns a TrainingLog."""
    rng = np.random.default_rng(tcfg.seed)
    adam = AdamState(model.tensors)
    log = TrainingLog()
    for epoch in range(tcfg.epochs):
        t0 = time.perf_counter()
        loss = train_epoch(train_values, period, model, tcfg, adam, rng)
        log.epochs.append((epoch, loss.bce, loss.mse, loss.total,
                           time.perf_counter() - t0))
    return log
