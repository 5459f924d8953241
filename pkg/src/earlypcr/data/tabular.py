"""Clinical and subtype encodings.

Clinical vector (20 slots)::

    0-11   drug multi-hot, in ``DRUGS`` order
    12     z-scored age (NaN until an AgeNormalizer is supplied)
    13-17  race one-hot, in ``RACES`` order
    18-19  ethnicity one-hot, in ``ETHNICITIES`` order

Subtype vector (8 slots)::

    0-4    HR, HER2, MP, DNA repair, immune; Positive -> 0, Negative -> 1
    5-7    BluePrint one-hot (Basal, HER2, Luminal)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .cohort import BLUEPRINT, DRUGS, ETHNICITIES, RACES, SUBTYPE_MARKERS, PatientRecord

CLINICAL_DIM = len(DRUGS) + 1 + len(RACES) + len(ETHNICITIES)
SUBTYPE_DIM = len(SUBTYPE_MARKERS) + len(BLUEPRINT)
AGE_SLOT = len(DRUGS)

_STATUS_CODE = {"Positive": 0.0, "Negative": 1.0}


@dataclass
class EncodedTabular:
    clinical: np.ndarray
    subtype: np.ndarray


@dataclass(frozen=True)
class AgeNormalizer:
    mean: float
    std: float

    def apply(self, age) -> np.ndarray | float:
        return (np.asarray(age, dtype=float) - self.mean) / self.std


def fit_age_normalizer(records) -> AgeNormalizer:
    """Population mean/std of the training ages.

    ``math.fsum`` keeps the statistics exactly independent of record order.
    """
    ages = [float(r.age) for r in records]
    if len(ages) == 0:
        raise DataError("fit_age_normalizer: no training records")
    mean = math.fsum(ages) / len(ages)
    var = math.fsum((a - mean) ** 2 for a in ages) / len(ages)
    std = math.sqrt(var)
    if std == 0.0:
        raise DataError("fit_age_normalizer: all training ages are identical (zero std)")
    return AgeNormalizer(mean, std)


def _one_hot(field: str, value, vocab: tuple) -> np.ndarray:
    if value not in vocab:
        raise DataError(f"encode_tabular: unknown {field} {value!r}")
    out = np.zeros(len(vocab))
    out[vocab.index(value)] = 1.0
    return out


def encode_tabular(rec: PatientRecord, normalizer: AgeNormalizer | None = None) -> EncodedTabular:
    if not rec.drugs:
        raise DataError(f"encode_tabular: patient {rec.id} has no drugs")
    drugs = np.zeros(len(DRUGS))
    for d in rec.drugs:
        if d not in DRUGS:
            raise DataError(f"encode_tabular: unknown drug {d!r}")
        drugs[DRUGS.index(d)] = 1.0
    age = float(normalizer.apply(rec.age)) if normalizer is not None else math.nan
    clinical = np.concatenate([
        drugs, [age],
        _one_hot("race", rec.race, RACES),
        _one_hot("ethnicity", rec.ethnicity, ETHNICITIES),
    ])
    codes = []
    for marker in SUBTYPE_MARKERS:
        value = getattr(rec, marker)
        if value not in _STATUS_CODE:
            raise DataError(f"encode_tabular: unknown {marker} status {value!r}")
        codes.append(_STATUS_CODE[value])
    subtype = np.concatenate([codes, _one_hot("BluePrint", rec.blueprint, BLUEPRINT)])
    return EncodedTabular(clinical, subtype)


def encode_many(records, normalizer: AgeNormalizer) -> tuple:
    """Stacked ``([n,20], [n,8])`` arrays for a list of records."""
    enc = [encode_tabular(r, normalizer) for r in records]
    return (np.stack([e.clinical for e in enc]), np.stack([e.subtype for e in enc]))
