"""Class-balanced sampling and stratified nested fold planning."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, StratificationError
from ..seeding import stream


def sampler_weights(labels) -> np.ndarray:
    """Per-patient weight ``1 / (size of the patient's class)``."""
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos + n_neg != y.size:
        raise DataError("sampler_weights: labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DataError("sampler_weights: both classes must be present")
    return np.where(y == 1, 1.0 / n_pos, 1.0 / n_neg)


def draw_batch(weights, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with replacement, proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    return rng.choice(w.size, size=batch, replace=True, p=w / w.sum())


def draw_epoch(weights, batch: int, rng: np.random.Generator) -> list:
    """One epoch of ``len(weights)`` weighted draws, split into batches."""
    idx = draw_batch(weights, len(weights), rng)
    return [idx[i:i + batch] for i in range(0, idx.size, batch)]


@dataclass(frozen=True)
class FoldPlan:
    """Outer fold of every patient plus the inner (train, val) fold rotations."""

    k: int
    ids: tuple
    outer: tuple

    def test_ids(self, fold: int) -> list:
        return [i for i, f in zip(self.ids, self.outer) if f == fold]

    def rotations(self, fold: int) -> list:
        """``[(train_folds, val_fold), ...]``; rotation j validates on the j-th non-test fold."""
        rest = [f for f in range(self.k) if f != fold]
        return [(tuple(f for f in rest if f != v), v) for v in rest]

    def split(self, fold: int, rotation: int) -> tuple:
        """``(train_ids, val_ids, test_ids)`` for one inner rotation."""
        train_folds, val_fold = self.rotations(fold)[rotation]
        train = [i for i, f in zip(self.ids, self.outer) if f in train_folds]
        val = [i for i, f in zip(self.ids, self.outer) if f == val_fold]
        return train, val, self.test_ids(fold)

    def digest(self) -> str:
        payload = json.dumps({"k": self.k, "ids": list(self.ids), "outer": list(self.outer)})
        return hashlib.sha256(payload.encode()).hexdigest()


def stratified_nested_folds(ids, labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle each class separately, then deal patients round-robin into ``k`` folds.

    Negatives continue dealing from where the positives stopped so fold sizes
    differ by at most one overall as well as per class.
    """
    ids = list(ids)
    y = np.asarray(labels)
    if len(ids) != y.size:
        raise DataError("stratified_nested_folds: ids and labels differ in length")
    if len(set(ids)) != len(ids):
        raise DataError("stratified_nested_folds: duplicate ids")
    pos = [i for i, lab in zip(ids, y) if lab == 1]
    neg = [i for i, lab in zip(ids, y) if lab == 0]
    if len(pos) < k or len(neg) < k:
        raise StratificationError(
            f"need at least {k} patients per class for {k} folds, got {len(pos)} positive "
            f"and {len(neg)} negative")
    assign = {}
    offset = 0
    for name, group in (("pos", pos), ("neg", neg)):
        order = stream(seed, "folds", name).permutation(len(group))
        for j, idx in enumerate(order):
            assign[group[idx]] = (offset + j) % k
        offset = (offset + len(group)) % k
    return FoldPlan(k, tuple(ids), tuple(assign[i] for i in ids))
