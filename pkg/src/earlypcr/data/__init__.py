"""Cohort generation, tabular encoding, augmentation, sampling, folds and file I/O."""

from .augment import AugmentSpec, augment, augment_series, flip, rotate_axial
from .cohort import (BLUEPRINT, DRUGS, ETHNICITIES, RACES, SUBTYPE_MARKERS, TIMEPOINTS,
                     PatientRecord, synth_cohort, validate_cohort, validate_record)
from .io import read_cohort, write_cohort
from .sampling import FoldPlan, draw_batch, draw_epoch, sampler_weights, stratified_nested_folds
from .tabular import (CLINICAL_DIM, SUBTYPE_DIM, AgeNormalizer, EncodedTabular, encode_many,
                      encode_tabular, fit_age_normalizer)

__all__ = [
    "AgeNormalizer", "AugmentSpec", "BLUEPRINT", "CLINICAL_DIM", "DRUGS", "ETHNICITIES",
    "EncodedTabular", "FoldPlan", "augment_series", "PatientRecord", "RACES", "SUBTYPE_DIM", "SUBTYPE_MARKERS",
    "TIMEPOINTS", "augment", "draw_batch", "draw_epoch", "encode_many", "encode_tabular",
    "fit_age_normalizer", "flip", "read_cohort", "rotate_axial", "sampler_weights",
    "stratified_nested_folds", "synth_cohort", "validate_cohort", "validate_record",
    "write_cohort",
]
