"""Nested cross-validation for every experiment mode.

Per outer fold and inner rotation j (train on 3 folds, validate on 1):

* Stage 1: a single-task network on T0+T1+T2 (dropout, flip/rotation/noise).
* Targets: rotation j's Stage-1 encoder applied to raw T2 volumes.
* Stage 2: a dual network on the early timepoints with BCE + lam * MSE
  (no dropout, flip/rotation only), monitored on validation BCE.

The four rotation models of an outer fold soft-vote on its test patients.
Stage-1 models are shared by the modes that need the same ones: the two-stage
modes with equal tabular inputs, ``stage1_full`` and the train-on-T0+T1+T2
baseline (which is the Stage-1 network evaluated on a length-2 sequence).
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..data.cohort import validate_cohort
from ..data.sampling import FoldPlan, stratified_nested_folds
from ..data.tabular import fit_age_normalizer
from ..errors import DataError, ExperimentError
from ..seeding import derive_seed
from .checkpoint import ModelBundle
from .config import ExperimentConfig
from .model import DUAL, SINGLE, encode_t2, init_network
from .modes import Mode, parse_mode, spec_for
from .predictions import PredictionSet
from .train import CohortArrays, fit, predict_logits

log = logging.getLogger(__name__)

STAGE1 = "stage1"
STAGE2 = "stage2"
CONVENTIONAL = "conventional"
_ALL = ("T0", "T1", "T2")


def _as_data(cohort) -> CohortArrays:
    return cohort if isinstance(cohort, CohortArrays) else CohortArrays(cohort)


def train_rotation(data: CohortArrays, plan: FoldPlan, fold: int, rotation: int,
                   cfg: ExperimentConfig, stage: str, *, kind: str, train_timepoints: tuple,
                   val_timepoints: tuple, use_clinical: bool = True, use_subtype: bool = True,
                   dropout: bool, noise: bool, targets: np.ndarray | None = None,
                   lam: float | None = None, seed: int | None = None) -> ModelBundle:
    seed = cfg.seed if seed is None else seed
    train_ids, val_ids, test_ids = plan.split(fold, rotation)
    train_idx, val_idx = data.indices(train_ids), data.indices(val_ids)
    normalizer = fit_age_normalizer([data.records[i] for i in train_idx])
    key = (stage, fold, rotation)
    init_seed = derive_seed(seed, "init", *key)
    net = init_network(kind, cfg.network(use_clinical, use_subtype, dropout), init_seed)
    started = time.perf_counter()
    result = fit(net, data, train_idx, val_idx, normalizer, cfg,
                 train_timepoints=train_timepoints, val_timepoints=val_timepoints,
                 augment=cfg.augment_spec(noise), dropout=dropout, seed=seed, key=key,
                 targets=targets, lam=lam, forbidden=set(test_ids))
    log.info("%s fold %d rotation %d: best epoch %d of %d (%.1fs)", stage, fold, rotation,
             result.best_epoch, len(result.history), time.perf_counter() - started)
    return ModelBundle(
        stage=stage, fold=fold, rotation=rotation, network=net, config=cfg,
        use_clinical=use_clinical, use_subtype=use_subtype, dropout=dropout,
        train_timepoints=tuple(train_timepoints), normalizer=normalizer,
        best_epoch=result.best_epoch,
        seeds={"master": seed, "init": init_seed, "key": list(key)},
        train_ids=tuple(train_ids), val_ids=tuple(val_ids), optimizer=result.optimizer,
        scheduler=result.scheduler, history=result.history,
    )


def _stage1_cache_key(seed, fold, rotation, use_clinical, use_subtype, cfg) -> tuple:
    canonical = cfg.replace(mode=Mode.TWO_STAGE_DUAL_TASK.value, lam=1.0, seed=0).to_ini()
    return (seed, fold, rotation, use_clinical, use_subtype, canonical)


def train_stage1(cohort, plan: FoldPlan, cfg: ExperimentConfig, fold: int, *,
                 use_clinical: bool = True, use_subtype: bool = True,
                 seed: int | None = None, cache: dict | None = None) -> list:
    """The four Stage-1 rotation models of one outer fold (T0+T1+T2 sequences)."""
    data = _as_data(cohort)
    seed = cfg.seed if seed is None else seed
    if "T2" not in data.volumes:
        missing = next(r.id for r in data.records if "T2" not in r.volumes)
        raise DataError(f"patient {missing}: missing T2 volume (required for Stage 1)")
    bundles = []
    for rotation in range(cfg.folds - 1):
        key = _stage1_cache_key(seed, fold, rotation, use_clinical, use_subtype, cfg)
        if cache is not None and key in cache:
            bundles.append(cache[key])
            continue
        b = train_rotation(data, plan, fold, rotation, cfg, STAGE1, kind=SINGLE,
                           train_timepoints=_ALL, val_timepoints=_ALL,
                           use_clinical=use_clinical, use_subtype=use_subtype,
                           dropout=True, noise=True, seed=seed)
        if cache is not None:
            cache[key] = b
        bundles.append(b)
    return bundles


def extract_t2_targets(bundle: ModelBundle, cohort, fold: int, rotation: int,
                       ids=None) -> dict:
    """``id -> z2`` from the Stage-1 encoder of (fold, rotation) on raw T2 volumes."""
    if bundle.stage != STAGE1 or (bundle.fold, bundle.rotation) != (fold, rotation):
        raise ExperimentError(f"targets for fold {fold} rotation {rotation} requested from a "
                              f"{bundle.stage} bundle of fold {bundle.fold} rotation "
                              f"{bundle.rotation}", fold)
    data = _as_data(cohort)
    ids = list(data.ids if ids is None else ids)
    idx = data.indices(ids)
    z = encode_t2(bundle.network, data.series(idx, ("T2",))[0])
    return {pid: z[i] for i, pid in enumerate(ids)}


def _targets_array(data: CohortArrays, targets: dict, latent: int) -> np.ndarray:
    arr = np.full((len(data.ids), latent), np.nan)
    for pid, z in targets.items():
        arr[data.index[pid]] = z
    return arr


def train_stage2(cohort, plan: FoldPlan, t2_targets: list, cfg: ExperimentConfig, mode,
                 fold: int, *, seed: int | None = None, single_task: bool = False) -> list:
    """The four dual-task rotation models of one outer fold.

    ``t2_targets[j]`` maps patient id to the target latent for rotation j.
    ``single_task=True`` trains the same network without computing the
    auxiliary loss at all (the reference for the lam = 0 equivalence).
    """
    data = _as_data(cohort)
    spec = spec_for(mode)
    if not spec.two_stage:
        raise ValueError(f"train_stage2: {parse_mode(mode).value} is not a two-stage mode")
    bundles = []
    for rotation in range(cfg.folds - 1):
        train_ids, val_ids, _ = plan.split(fold, rotation)
        missing = [i for i in train_ids + val_ids if i not in t2_targets[rotation]]
        if missing:
            raise ExperimentError(f"no T2 target for patient {missing[0]}", fold)
        targets = _targets_array(data, t2_targets[rotation], cfg.latent_dim)
        bundles.append(train_rotation(
            data, plan, fold, rotation, cfg, STAGE2, kind=DUAL,
            train_timepoints=spec.rnn_timepoints, val_timepoints=spec.rnn_timepoints,
            use_clinical=spec.use_clinical, use_subtype=spec.use_subtype,
            dropout=False, noise=False, targets=targets,
            lam=None if single_task else cfg.lam, seed=seed))
    return bundles


def soft_vote(logits) -> np.ndarray:
    """Mean of per-model sigmoid probabilities; ``logits`` is ``[models, patients]``."""
    return np.mean(expit(np.asarray(logits, dtype=np.float64)), axis=0)


def predict_soft_vote(bundles: list, cohort, ids, timepoints) -> np.ndarray:
    data = _as_data(cohort)
    ids = list(ids)
    for b in bundles:
        leaked = set(ids) & b.seen_ids()
        if leaked:
            raise ExperimentError(f"patient {sorted(leaked)[0]} was used to train or validate "
                                  f"{b.stage} fold {b.fold} rotation {b.rotation}", b.fold)
    idx = data.indices(ids)
    logits = [predict_logits(b.network, data, idx, b.normalizer, timepoints)[0] for b in bundles]
    return soft_vote(logits)


@dataclass
class FoldOutput:
    fold: int
    probabilities: dict
    bundles: list
    stage1: list
    audit: list
    r2_parts: list = field(default_factory=list)


def _run_fold(data: CohortArrays, plan: FoldPlan, fold: int, mode: Mode, cfg: ExperimentConfig,
              seed: int, cache: dict | None) -> FoldOutput:
    spec = spec_for(mode)
    test_ids = plan.test_ids(fold)
    test_idx = data.indices(test_ids)
    stage1, r2_parts = [], []
    if mode == Mode.CONVENTIONAL_T0T1:
        final = [train_rotation(data, plan, fold, j, cfg, CONVENTIONAL, kind=SINGLE,
                                train_timepoints=spec.train_timepoints,
                                val_timepoints=spec.val_timepoints, dropout=True, noise=True,
                                seed=seed)
                 for j in range(cfg.folds - 1)]
        test_tps = spec.test_timepoints
    else:
        stage1 = train_stage1(data, plan, cfg, fold, use_clinical=spec.use_clinical,
                              use_subtype=spec.use_subtype, seed=seed, cache=cache)
        if spec.two_stage:
            targets = [extract_t2_targets(b, data, fold, j) for j, b in enumerate(stage1)]
            final = train_stage2(data, plan, targets, cfg, mode, fold, seed=seed)
            test_tps = spec.rnn_timepoints
            for b, tgt in zip(final, targets):
                _, zhat = predict_logits(b.network, data, test_idx, b.normalizer, test_tps)
                r2_parts.append((zhat, np.stack([tgt[i] for i in test_ids])))
        else:
            final = stage1
            test_tps = spec.test_timepoints
    probs = predict_soft_vote(final, data, test_ids, test_tps)
    audit = [{"id": pid, "fold": fold,
              "models": [[b.stage, b.fold, b.rotation] for b in final],
              "disjoint": all(pid not in b.seen_ids() for b in final),
              "test_seq_len": len(test_tps)} for pid in test_ids]
    return FoldOutput(fold, dict(zip(test_ids, probs)), final, stage1, audit, r2_parts)


def _run_fold_safe(args) -> FoldOutput:
    data, plan, fold, mode, cfg, seed, cache = args
    try:
        return _run_fold(data, plan, fold, mode, cfg, seed, cache)
    except ExperimentError as exc:
        if exc.fold is None:
            raise ExperimentError(str(exc), fold) from exc
        raise
    except (ValueError, ArithmeticError, KeyError) as exc:
        raise ExperimentError(f"{type(exc).__name__}: {exc}", fold) from exc


def pooled_r2(parts: list) -> float:
    """1 - SSE/SST over all held-out predictions, centring per model and dimension."""
    sse = sst = 0.0
    for zhat, target in parts:
        sse += float(np.sum((zhat - target) ** 2))
        sst += float(np.sum((target - target.mean(axis=0)) ** 2))
    return 1.0 - sse / sst


def _log_entry(b: ModelBundle, test_len) -> dict:
    return {"stage": b.stage, "fold": b.fold, "rotation": b.rotation,
            "best_epoch": b.best_epoch, "train_seq_len": len(b.train_timepoints),
            "test_seq_len": test_len, "history": b.history}


@dataclass
class ExperimentResult:
    predictions: PredictionSet
    plan: FoldPlan
    bundles: list
    audit: list
    r2: float | None
    logs: list


def run_experiment(cohort, mode, cfg: ExperimentConfig, master_seed: int | None = None,
                   jobs: int = 1, cache: dict | None = None) -> ExperimentResult:
    """Full nested CV for ``mode``; every patient is predicted once by models that never saw it."""
    mode = parse_mode(mode)
    seed = cfg.seed if master_seed is None else master_seed
    cfg = cfg.replace(mode=mode.value, seed=seed)
    spec = spec_for(mode)
    records = cohort.records if isinstance(cohort, CohortArrays) else list(cohort)
    needed = ("T0", "T1") if mode == Mode.CONVENTIONAL_T0T1 else _ALL
    validate_cohort(records, require=needed)
    data = _as_data(cohort)
    plan = stratified_nested_folds(data.ids, data.labels, cfg.folds, seed)
    tasks = [(data, plan, fold, mode, cfg, seed, cache if jobs == 1 else None)
             for fold in range(cfg.folds)]
    if jobs == 1:
        outputs = [_run_fold_safe(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_fold_safe, tasks))
        if cache is not None:
            for out in outputs:
                for j, b in enumerate(out.stage1):
                    cache[_stage1_cache_key(seed, out.fold, j, spec.use_clinical,
                                            spec.use_subtype, cfg)] = b
    probs, audit, bundles, parts = {}, [], [], []
    for out in sorted(outputs, key=lambda o: o.fold):
        probs.update(out.probabilities)
        audit.extend(out.audit)
        bundles.extend(out.bundles)
        parts.extend(out.r2_parts)
    if set(probs) != set(data.ids) or not all(a["disjoint"] for a in audit):
        raise ExperimentError("prediction audit failed: coverage or leakage violation")
    predictions = PredictionSet(list(data.ids), data.labels.astype(int),
                                [probs[i] for i in data.ids], mode.value, seed, plan.digest())
    test_len = len(spec.rnn_timepoints if spec.two_stage else spec.test_timepoints)
    logs = []
    for out in sorted(outputs, key=lambda o: o.fold):
        if spec.two_stage:
            logs += [_log_entry(b, None) for b in out.stage1]
        logs += [_log_entry(b, test_len) for b in out.bundles]
    return ExperimentResult(predictions, plan, bundles, audit,
                            pooled_r2(parts) if parts else None, logs)
