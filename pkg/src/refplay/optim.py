"""RMSProp with a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .errors import NumericError


class RMSProp:
    """Decaying second-moment accumulator; update = lr * g / sqrt(acc + eps)."""

    def __init__(self, store, lr: float = 1e-3, rho: float = 0.99,
                 eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.acc = {name: np.zeros_like(t.data) for name, t in store.items()}

    def step(self):
        for name, t in self.store.items():
            g = t.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}")
            a = self.acc[name]
            a *= self.rho
            a += (1.0 - self.rho) * g * g
            t.data -= self.lr * g / np.sqrt(a + self.eps)
            if not np.all(np.isfinite(t.data)):
                raise NumericError(f"non-finite parameter after update: {name}")


class PlateauSchedule:
    """Halve the learning rate when the tracked metric stops improving.

    patience=None disables reduction entirely (the schedule still tracks
    the best metric). Improvement resets the counter.
    """

    def __init__(self, opt: RMSProp, patience=None, factor: float = 0.5,
                 min_lr: float = 1e-5):
        self.opt = opt
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = -np.inf
        self.stale = 0

    def update(self, metric: float):
        if metric > self.best:
            self.best = metric
            self.stale = 0
            return
        self.stale += 1
        if self.patience is not None and self.stale > self.patience:
            self.opt.lr = max(self.opt.lr * self.factor, self.min_lr)
            self.stale = 0
