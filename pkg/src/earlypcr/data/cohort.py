"""Patient records, category vocabularies, and the synthetic longitudinal cohort.

Synthetic generator
-------------------
Each patient gets subtype and clinical categories drawn from the marginal
frequencies of the reference cohort, and a treatment arm compatible with
their HER2 status.  A latent response score ``r`` in (0, 1) is

    r = sigmoid(1.2 * (match - 1.0) + N(0, response_noise))

where ``match`` adds credit for a targeted drug meeting its pathway (HER2
agents on HER2-positive disease, carboplatin on DNA-repair deficiency,
pembrolizumab on immune-active tumours) plus hormone-negative and basal-like
biology, minus luminal hormone-positive biology.

Images are one ellipsoidal tumour per patient.  T0 uses random centre, radii
(20-30% of the grid) and intensities; T1 and T2 keep them but scale the radii
by ``1 - 0.15 r`` and ``1 - 0.6 r``.  Channel 2 is the thresholded ellipsoid,
channels 0/1 are early/late intensity times a soft radial profile plus voxel
noise.  The label is 1 for the top ``213/624`` fraction of ``r`` values, so a
624-patient cohort has exactly 213 responders.  Voxels are rounded to float32
so volumes survive the on-disk format bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import CohortValidationError, StratificationError
from ..seeding import stream

TIMEPOINTS = ("T0", "T1", "T2")

DRUGS = ("ABT 888", "AMG 386", "Carboplatin", "Ganetespib", "Ganitumab", "MK-2206",
         "Neratinib", "Paclitaxel", "Pembrolizumab", "Pertuzumab", "T-DM1", "Trastuzumab")
RACES = ("American Indian or Alaska Native", "Asian", "Black or African American",
         "Native Hawaiian or Other Pacific Islander", "White")
ETHNICITIES = ("Hispanic or Latino", "Not Hispanic or Latino")
BLUEPRINT = ("Basal", "HER2", "Luminal")
STATUS = ("Positive", "Negative")
SUBTYPE_MARKERS = ("hr", "her2", "mp", "dna_repair", "immune")

POSITIVE_FRACTION = 213 / 624

# marginal counts of the reference cohort (n = 624)
_RACE_COUNTS = (3, 41, 73, 3, 504)
_ETHNICITY_COUNTS = (84, 540)
_BLUEPRINT_COUNTS = (315, 98, 211)
_POSITIVE_COUNTS = {"hr": 338, "her2": 152, "mp": 299, "dna_repair": 241, "immune": 292}

_HER2_AGENTS = {"Trastuzumab", "Pertuzumab", "T-DM1", "Neratinib"}
_ARMS_HER2_POS = (
    ("Paclitaxel", "Trastuzumab"),
    ("MK-2206", "Paclitaxel", "Trastuzumab"),
    ("Neratinib", "Paclitaxel"),
    ("Paclitaxel", "Pertuzumab", "Trastuzumab"),
    ("Pertuzumab", "T-DM1"),
    ("AMG 386", "Paclitaxel", "Trastuzumab"),
)
_ARMS_HER2_NEG = (
    ("Paclitaxel",),
    ("ABT 888", "Carboplatin", "Paclitaxel"),
    ("AMG 386", "Paclitaxel"),
    ("Ganetespib", "Paclitaxel"),
    ("Ganitumab", "Paclitaxel"),
    ("MK-2206", "Paclitaxel"),
    ("Paclitaxel", "Pembrolizumab"),
)


@dataclass
class PatientRecord:
    id: str
    label: int
    drugs: tuple
    age: float
    race: str
    ethnicity: str
    hr: str
    her2: str
    mp: str
    dna_repair: str
    immune: str
    blueprint: str
    volumes: dict = field(default_factory=dict)

    def volume(self, timepoint: str) -> np.ndarray:
        try:
            return self.volumes[timepoint]
        except KeyError:
            raise CohortValidationError(f"patient {self.id}: missing {timepoint} volume") from None


def validate_volume(voxels: np.ndarray, where: str) -> None:
    if voxels.ndim != 4 or voxels.shape[0] != 3:
        raise CohortValidationError(f"{where}: volume must be [3,D,H,W], got {voxels.shape}")
    if not np.all(np.isfinite(voxels[:2])):
        raise CohortValidationError(f"{where}: enhancement channels contain non-finite values")
    mask = voxels[2]
    if not np.all((mask == 0) | (mask == 1)):
        raise CohortValidationError(f"{where}: mask channel must be 0/1")


def validate_record(rec: PatientRecord, require: tuple = ("T0", "T1")) -> None:
    where = f"patient {rec.id}"
    if rec.label not in (0, 1):
        raise CohortValidationError(f"{where}: label must be 0 or 1, got {rec.label!r}")
    if not rec.drugs:
        raise CohortValidationError(f"{where}: drug set is empty")
    for drug in rec.drugs:
        if drug not in DRUGS:
            raise CohortValidationError(f"{where}: unknown drug {drug!r}")
    if rec.race not in RACES:
        raise CohortValidationError(f"{where}: unknown race {rec.race!r}")
    if rec.ethnicity not in ETHNICITIES:
        raise CohortValidationError(f"{where}: unknown ethnicity {rec.ethnicity!r}")
    if rec.blueprint not in BLUEPRINT:
        raise CohortValidationError(f"{where}: unknown BluePrint {rec.blueprint!r}")
    for marker in SUBTYPE_MARKERS:
        if getattr(rec, marker) not in STATUS:
            raise CohortValidationError(f"{where}: {marker} must be Positive/Negative")
    if not np.isfinite(rec.age):
        raise CohortValidationError(f"{where}: age is not finite")
    for tp in require:
        if tp not in rec.volumes:
            raise CohortValidationError(f"{where}: missing {tp} volume")
    shapes = {v.shape for v in rec.volumes.values()}
    if len(shapes) > 1:
        raise CohortValidationError(f"{where}: volumes differ in shape {sorted(shapes)}")
    for tp, vox in rec.volumes.items():
        validate_volume(vox, f"{where} {tp}")


def validate_cohort(records, require: tuple = ("T0", "T1")) -> None:
    seen = set()
    for rec in records:
        if rec.id in seen:
            raise CohortValidationError(f"duplicate patient id {rec.id}")
        seen.add(rec.id)
        validate_record(rec, require)


def _categorical(rng, values, counts):
    p = np.asarray(counts, dtype=float)
    return values[int(rng.choice(len(values), p=p / p.sum()))]


def _status(rng, marker) -> str:
    return "Positive" if rng.random() < _POSITIVE_COUNTS[marker] / 624 else "Negative"


def response_match(rec: PatientRecord) -> float:
    """Drug-pathway agreement score that drives the synthetic response."""
    drugs = set(rec.drugs)
    score = 0.0
    if rec.her2 == "Positive" and drugs & _HER2_AGENTS:
        score += 1.0
    if rec.dna_repair == "Positive" and "Carboplatin" in drugs:
        score += 1.0
    if rec.immune == "Positive" and "Pembrolizumab" in drugs:
        score += 1.0
    if rec.hr == "Negative":
        score += 0.6
    if rec.blueprint == "Basal":
        score += 0.4
    if rec.blueprint == "Luminal" and rec.hr == "Positive":
        score -= 0.5
    return score


def _tumour(dim: int, center, radii, scale: float, early: float, late: float,
            noise: float, rng) -> np.ndarray:
    grid = np.arange(dim, dtype=float)
    zz, yy, xx = np.meshgrid(grid, grid, grid, indexing="ij")
    r = radii * scale
    rho = np.sqrt(((zz - center[0]) / r[0]) ** 2 + ((yy - center[1]) / r[1]) ** 2
                  + ((xx - center[2]) / r[2]) ** 2)
    profile = expit(-(rho - 1.0) / 0.15)
    vol = np.empty((3, dim, dim, dim))
    vol[0] = early * profile + rng.normal(0.0, noise, size=profile.shape)
    vol[1] = late * profile + rng.normal(0.0, noise, size=profile.shape)
    vol[2] = (rho <= 1.0).astype(float)
    return vol.astype(np.float32).astype(np.float64)


def _draw_patient(seed: int, pid: str, response_noise: float) -> tuple:
    rng = stream(seed, "cohort", pid)
    markers = {m: _status(rng, m) for m in SUBTYPE_MARKERS}
    arms = _ARMS_HER2_POS if markers["her2"] == "Positive" else _ARMS_HER2_NEG
    rec = PatientRecord(
        id=pid, label=0,
        drugs=arms[int(rng.integers(len(arms)))],
        age=float(np.clip(np.round(rng.normal(49.0, 10.0)), 24, 73)),
        race=_categorical(rng, RACES, _RACE_COUNTS),
        ethnicity=_categorical(rng, ETHNICITIES, _ETHNICITY_COUNTS),
        blueprint=_categorical(rng, BLUEPRINT, _BLUEPRINT_COUNTS),
        **markers,
    )
    score = 1.2 * (response_match(rec) - 1.0) + rng.normal(0.0, response_noise)
    return rec, score


def synth_cohort(n: int, dim: int = 16, seed: int = 0, response_noise: float = 0.8,
                 voxel_noise: float = 0.05, k_folds: int = 5) -> list:
    """Generate ``n`` patients with T0/T1/T2 volumes of size ``dim``^3."""
    n_pos = int(round(n * POSITIVE_FRACTION))
    if n < 20 or n_pos < k_folds or n - n_pos < k_folds:
        raise StratificationError(
            f"n={n} is too small to stratify {k_folds} folds (need n >= 20 with at least "
            f"{k_folds} patients per class)")
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    records, latent = [], []
    for i in range(n):
        rec, score = _draw_patient(seed, f"P{i:04d}", response_noise)
        records.append(rec)
        latent.append(score)
    r = expit(np.asarray(latent))
    threshold = np.sort(r)[n - n_pos - 1] if n_pos < n else -np.inf
    for rec, ri in zip(records, r):
        rec.label = int(ri > threshold)
        rng = stream(seed, "tumour", rec.id)
        center = dim / 2 - 0.5 + rng.uniform(-dim / 10, dim / 10, size=3)
        radii = rng.uniform(0.2, 0.3, size=3) * dim
        early = rng.uniform(0.8, 1.2)
        late = early * rng.uniform(0.5, 0.9)
        scales = {"T0": 1.0, "T1": 1.0 - 0.15 * ri, "T2": 1.0 - 0.6 * ri}
        rec.volumes = {
            tp: _tumour(dim, center, radii, scales[tp], early, late, voxel_noise,
                        stream(seed, "voxels", rec.id, tp))
            for tp in TIMEPOINTS
        }
    return records
