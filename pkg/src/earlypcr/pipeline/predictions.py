"""Pooled cross-validated predictions and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError

COLUMNS = ("id", "label", "probability", "mode", "seed")


@dataclass
class PredictionSet:
    ids: list
    labels: np.ndarray
    probabilities: np.ndarray
    mode: str
    seed: int
    plan_digest: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if len(set(self.ids)) != len(self.ids):
            raise DataError("prediction set has duplicate patient ids")
        if not (len(self.ids) == self.labels.size == self.probabilities.size):
            raise DataError("prediction set columns differ in length")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for pid, y, p in zip(self.ids, self.labels, self.probabilities):
            w.writerow([pid, int(y), repr(float(p)), self.mode, self.seed])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def aligned(self, other: "PredictionSet") -> "PredictionSet":
        """``other`` reordered to this set's id order; the id sets must match."""
        if set(self.ids) != set(other.ids):
            only_a = sorted(set(self.ids) - set(other.ids))[:3]
            only_b = sorted(set(other.ids) - set(self.ids))[:3]
            raise DataError(f"patient id sets differ (only in first: {only_a}, "
                            f"only in second: {only_b})")
        pos = {pid: i for i, pid in enumerate(other.ids)}
        order = [pos[pid] for pid in self.ids]
        return PredictionSet(list(self.ids), other.labels[order], other.probabilities[order],
                             other.mode, other.seed, other.plan_digest)


def parse_predictions(text: str, where: str = "<predictions>") -> PredictionSet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise DataError(f"{where}: header must be {','.join(COLUMNS)}")
    ids, labels, probs, modes, seeds = [], [], [], set(), set()
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(COLUMNS):
            raise DataError(f"{where}: line {n} has {len(row)} fields, expected {len(COLUMNS)}")
        try:
            label = int(row[1])
            prob = float(row[2])
            seeds.add(int(row[4]))
        except ValueError:
            raise DataError(f"{where}: line {n} has a non-numeric field") from None
        if label not in (0, 1):
            raise DataError(f"{where}: line {n}: label must be 0 or 1")
        if not (0.0 <= prob <= 1.0):
            raise DataError(f"{where}: line {n}: probability {prob} outside [0, 1]")
        ids.append(row[0])
        labels.append(label)
        probs.append(prob)
        modes.add(row[3])
    if not ids:
        raise DataError(f"{where}: no predictions")
    if len(modes) != 1 or len(seeds) != 1:
        raise DataError(f"{where}: rows mix modes {sorted(modes)} or seeds {sorted(seeds)}")
    return PredictionSet(ids, labels, probs, modes.pop(), seeds.pop())


def read_predictions(path) -> PredictionSet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return parse_predictions(text, str(path))
