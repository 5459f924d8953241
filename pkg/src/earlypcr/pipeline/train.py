"""Training loop shared by every stage and mode.

One call to :func:`fit` trains one network on one inner rotation: weighted
batches of training patients, AdamW, the plateau scheduler on validation
BCE, and a snapshot of the parameters (plus optimizer state) at the epoch of
lowest validation BCE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from .. import tensor as T
from ..data.augment import AugmentSpec, augment_series
from ..data.cohort import TIMEPOINTS
from ..data.sampling import draw_epoch, sampler_weights
from ..data.tabular import AGE_SLOT, AgeNormalizer, encode_tabular
from ..errors import ExperimentError
from ..optim import AdamW, PlateauScheduler
from ..seeding import stream
from .config import ExperimentConfig
from .model import DUAL, Network, forward


class CohortArrays:
    """Dense views of a cohort: stacked volumes per timepoint and raw tabular codes."""

    def __init__(self, records):
        self.records = list(records)
        self.ids = [r.id for r in self.records]
        self.index = {pid: i for i, pid in enumerate(self.ids)}
        self.labels = np.array([r.label for r in self.records], dtype=np.float64)
        self.ages = np.array([r.age for r in self.records], dtype=np.float64)
        enc = [encode_tabular(r) for r in self.records]
        self.clinical = np.stack([e.clinical for e in enc])
        self.subtype = np.stack([e.subtype for e in enc])
        self.volumes = {}
        for tp in TIMEPOINTS:
            if all(tp in r.volumes for r in self.records):
                self.volumes[tp] = np.stack([r.volumes[tp] for r in self.records])

    def indices(self, ids) -> np.ndarray:
        return np.array([self.index[i] for i in ids], dtype=int)

    def tabular(self, idx, normalizer: AgeNormalizer) -> tuple:
        clinical = self.clinical[idx].copy()
        clinical[:, AGE_SLOT] = normalizer.apply(self.ages[idx])
        return clinical, self.subtype[idx]

    def series(self, idx, timepoints, spec: AugmentSpec | None = None,
               rng: np.random.Generator | None = None) -> list:
        for tp in timepoints:
            if tp not in self.volumes:
                missing = next(r.id for r in self.records if tp not in r.volumes)
                raise ExperimentError(f"patient {missing}: missing {tp} volume")
        if spec is None:
            return [self.volumes[tp][idx] for tp in timepoints]
        out = [np.empty((len(idx),) + self.volumes[tp].shape[1:]) for tp in timepoints]
        for j, i in enumerate(idx):
            for t, vol in enumerate(augment_series([self.volumes[tp][i] for tp in timepoints],
                                                   spec, rng)):
                out[t][j] = vol
        return out


def bce_values(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample stable BCE with logits."""
    return np.logaddexp(0.0, logits) - labels * logits


@dataclass
class FitResult:
    best_epoch: int
    history: list
    optimizer: dict
    scheduler: dict
    batches: int = 0
    train_ids_seen: set = field(default_factory=set)


def predict_logits(net: Network, data: CohortArrays, idx, normalizer: AgeNormalizer,
                   timepoints, chunk: int = 64) -> tuple:
    """Inference without augmentation or dropout: ``(logits, z2_hat or None)``."""
    logits, zhat = [], []
    for s in range(0, len(idx), chunk):
        part = idx[s:s + chunk]
        clin, sub = data.tabular(part, normalizer)
        lg, zh = forward(net, data.series(part, timepoints), clin, sub)
        logits.append(lg.data.reshape(-1))
        if zh is not None:
            zhat.append(zh.data)
    return np.concatenate(logits), (np.concatenate(zhat) if zhat else None)


def _snapshot(net: Network, opt: AdamW, sched: PlateauScheduler) -> tuple:
    st = opt.state
    optimizer = {"lr": st.lr, "weight_decay": st.weight_decay, "beta1": st.beta1,
                 "beta2": st.beta2, "eps": st.eps, "t": st.t,
                 "m": {k: v.copy() for k, v in st.m.items()},
                 "v": {k: v.copy() for k, v in st.v.items()}}
    scheduler = {"lr": sched.lr, "patience": sched.patience, "factor": sched.factor,
                 "best": sched.best, "bad_epochs": sched.bad_epochs}
    return net.arrays(), optimizer, scheduler


def fit(net: Network, data: CohortArrays, train_idx, val_idx, normalizer: AgeNormalizer,
        cfg: ExperimentConfig, *, train_timepoints, val_timepoints, augment: AugmentSpec,
        dropout: bool, seed: int, key: tuple, targets: np.ndarray | None = None,
        lam: float | None = None, forbidden=frozenset()) -> FitResult:
    """Train ``net`` in place and leave it holding its best-epoch parameters.

    ``targets`` (rows aligned with ``data``) and ``lam`` switch on the
    auxiliary loss ``lam * MSE(z2_hat, target)`` for dual networks; with
    ``lam=None`` the auxiliary term is not computed at all.  ``forbidden``
    holds ids that must never appear in a training batch.
    """
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    if lam is not None and (net.kind != DUAL or targets is None):
        raise ValueError("the auxiliary loss needs a dual network and T2 targets")
    forbidden = set(forbidden) | {data.ids[i] for i in val_idx}
    weights = sampler_weights(data.labels[train_idx])
    clin_all, sub_all = data.tabular(np.arange(len(data.ids)), normalizer)
    flat = net.flat()
    opt = AdamW(flat, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(lr=cfg.lr, patience=cfg.patience, factor=cfg.factor)
    val_labels = data.labels[val_idx]
    history = []
    best = (np.inf, -1, None)
    result = FitResult(-1, history, {}, {})
    for epoch in range(cfg.epochs):
        opt.lr = sched.lr
        batches = draw_epoch(weights, cfg.batch_size, stream(seed, "sampler", *key, epoch))
        totals = {"loss": 0.0, "bce": 0.0, "mse": 0.0}
        for b, local in enumerate(batches):
            idx = train_idx[local]
            ids = {data.ids[i] for i in idx}
            if ids & forbidden:
                raise ExperimentError(f"leakage: {sorted(ids & forbidden)[:3]} sampled for training")
            result.train_ids_seen |= ids
            result.batches += 1
            rng = stream(seed, "augment", *key, epoch, b)
            vols = data.series(idx, train_timepoints, augment, rng)
            drop_rng = stream(seed, "dropout", *key, epoch, b) if dropout else None
            with T.Tape() as tape:
                logits, zhat = forward(net, vols, clin_all[idx], sub_all[idx], drop_rng)
                bce = nn.bce_with_logits(logits, data.labels[idx])
                loss = bce
                if lam is not None:
                    mse = nn.mse(zhat, targets[idx])
                    loss = T.add(bce, T.mul(mse, lam))
                    totals["mse"] += mse.item() * len(idx)
                tape.backward(loss)
            opt.step()
            totals["loss"] += loss.item() * len(idx)
            totals["bce"] += bce.item() * len(idx)
        n_train = sum(len(b) for b in batches)
        val_logits, val_zhat = predict_logits(net, data, val_idx, normalizer, val_timepoints)
        val_bce = float(np.mean(bce_values(val_logits, val_labels)))
        row = {"epoch": epoch, "lr": opt.lr, "train_loss": totals["loss"] / n_train,
               "train_bce": totals["bce"] / n_train, "val_bce": val_bce,
               "train_seq_len": len(train_timepoints), "val_seq_len": len(val_timepoints)}
        if lam is not None:
            row["train_mse"] = totals["mse"] / n_train
            row["val_mse"] = float(np.mean((val_zhat - targets[val_idx]) ** 2))
        history.append(row)
        if not np.isfinite(val_bce):
            raise ExperimentError(f"validation loss became {val_bce} at epoch {epoch}")
        lr = sched.step(val_bce)
        if val_bce < best[0]:
            best = (val_bce, epoch, _snapshot(net, opt, sched))
        if lr < cfg.min_lr:
            break
    arrays, result.optimizer, result.scheduler = best[2]
    net.load_arrays(arrays)
    result.best_epoch = best[1]
    return result
