"""Seeded end-to-end benchmark on synthetic cohorts.

Runs several modes per master seed with one shared Stage-1 cache, so the
Stage-1 models are trained once per (seed, tabular inputs) and reused.

    python -m earlypcr.pipeline.benchmark --seeds 0 1 2 3 4
"""

from __future__ import annotations

import argparse
import json
import logging
import time

from ..data.cohort import synth_cohort
from ..evalstat import auroc
from .config import ExperimentConfig
from .experiment import run_experiment
from .train import CohortArrays

# Desk-scale settings used by the acceptance benchmark (see README).
BENCH_N = 240
BENCH_DIM = 16
# a 5^3 stride-4 stem takes 16^3 volumes straight to a 4^3 grid
BENCH_CONFIG = ExperimentConfig(
    stage_widths=(4, 8), blocks_per_stage=1, latent_dim=16, stem_kernel=5, stem_stride=4,
    lstm_hidden=16, head_hidden=16, lr=3e-3, batch_size=8, epochs=35, patience=10,
)
DEFAULT_MODES = ("stage1_full", "two_stage_dual_task", "conventional_t0t1",
                 "two_stage_no_clinical_no_subtypes")


def run_seed(seed: int, modes=DEFAULT_MODES, n: int = BENCH_N, dim: int = BENCH_DIM,
             cfg: ExperimentConfig = BENCH_CONFIG, cohort_seed: int | None = None) -> dict:
    """AUROC (and R2 for two-stage modes) per mode for one master seed.

    The cohort is drawn with ``cohort_seed`` (default: the master seed).
    """
    data = CohortArrays(synth_cohort(n, dim, seed if cohort_seed is None else cohort_seed))
    cache = {}
    out = {}
    for mode in modes:
        started = time.perf_counter()
        res = run_experiment(data, mode, cfg, seed, cache=cache)
        p = res.predictions
        out[mode] = {"auroc": auroc(p.probabilities, p.labels), "r2": res.r2,
                     "seconds": time.perf_counter() - started}
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--modes", nargs="+", default=list(DEFAULT_MODES))
    ap.add_argument("--n", type=int, default=BENCH_N)
    ap.add_argument("--dim", type=int, default=BENCH_DIM)
    ap.add_argument("--epochs", type=int, default=BENCH_CONFIG.epochs)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = BENCH_CONFIG.replace(epochs=args.epochs)
    for seed in args.seeds:
        print(json.dumps({"seed": seed, **run_seed(seed, args.modes, args.n, args.dim, cfg)}),
              flush=True)


if __name__ == "__main__":
    main()
