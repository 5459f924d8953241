"""AdamW with decoupled weight decay, plateau LR scheduler, and best-epoch selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError

IMPROVEMENT_EPS = 1e-12


@dataclass
class AdamWState:
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: AdamWState) -> None:
    """One in-place AdamW update of every parameter in ``params``.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adamw_step: gradient {g.shape} does not match parameter "
                             f"{name} {p.shape}")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = p.data
        p.data = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps) \
            - state.lr * state.weight_decay * theta


class AdamW:
    """Thin stateful wrapper around :func:`adamw_step` for a fixed parameter dict."""

    def __init__(self, params: dict, lr=1e-3, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.state = AdamWState(lr=lr, weight_decay=weight_decay, beta1=betas[0],
                                beta2=betas[1], eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def step(self, grads: dict | None = None) -> None:
        if grads is None:
            grads = {name: p.grad for name, p in self.params.items()}
        adamw_step(self.params, grads, self.state)


@dataclass
class PlateauScheduler:
    """Divide the LR by ``factor`` once the monitored loss stalls for ``patience`` epochs.

    Improvement means a strict decrease by more than 1e-12.  On the
    ``patience``-th consecutive non-improving epoch the LR is reduced and the
    counter restarts; the best value is kept.
    """

    lr: float = 1e-3
    patience: int = 20
    factor: float = 10.0
    best: float = float("inf")
    bad_epochs: int = 0

    def step(self, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError(f"plateau_step: monitored loss must be finite, got {value}")
        if value < self.best - IMPROVEMENT_EPS:
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = self.lr / self.factor
                self.bad_epochs = 0
        return self.lr


def plateau_step(scheduler: PlateauScheduler, epoch_val_loss: float) -> float:
    return scheduler.step(epoch_val_loss)


def select_best(history) -> int:
    """Epoch with the lowest validation value; the earliest one wins ties.

    ``history`` is a sequence of ``(epoch, value)`` pairs or of bare values
    (then the epoch is the position).
    """
    history = list(history)
    if not history:
        raise ValueError("select_best: empty history")
    if not isinstance(history[0], (tuple, list)):
        history = list(enumerate(history))
    best_epoch, best_value = history[0]
    for epoch, value in history[1:]:
        if value < best_value:
            best_epoch, best_value = epoch, value
    return best_epoch
