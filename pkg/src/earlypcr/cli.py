"""Command-line interface.

Subcommands: gen-data, train, evaluate, compare, report.
Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Every command that writes a directory also writes ``provenance.json``
recording the full configuration, seed and SHA-256 of inputs and outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .data.cohort import synth_cohort
from .data.io import MANIFEST, read_cohort, write_cohort
from .errors import DataError, ExperimentError
from .evalstat import (METRICS, bootstrap_ci, delong_paired, format_ci, roc_curve)
from .pipeline.checkpoint import save_bundle
from .pipeline.config import ConfigError, from_ini, load_config
from .pipeline.experiment import run_experiment
from .pipeline.modes import TABLE_MODES, Mode, spec_for
from .pipeline.predictions import read_predictions

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
PROVENANCE = "provenance.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cohort_digest(root) -> str:
    """Hash of the manifest plus every volume file, in sorted relative-path order."""
    root = Path(root)
    h = hashlib.sha256()
    files = [root / MANIFEST] + sorted((root / "volumes").glob("*.lpv"))
    for f in files:
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    records = synth_cohort(args.n, args.dim, args.seed, response_noise=args.response_noise,
                           voxel_noise=args.voxel_noise)
    out = Path(args.out)
    try:
        write_cohort(records, out)
    except OSError as exc:
        raise DataError(f"cannot write cohort to {out}: {exc}") from None
    _write_json(out / PROVENANCE, {
        "command": "gen-data", "version": __version__,
        "generator": {"n": args.n, "dim": args.dim, "seed": args.seed,
                      "response_noise": args.response_noise, "voxel_noise": args.voxel_noise},
        "positives": sum(r.label for r in records),
        "cohort_sha256": cohort_digest(out),
    })
    print(f"wrote {len(records)} patients to {out}")
    return EXIT_OK


def _train(cohort_dir, mode, cfg, out, jobs, checkpoints) -> dict:
    records = read_cohort(cohort_dir, require=("T0", "T1"))
    result = run_experiment(records, mode, cfg, cfg.seed, jobs=jobs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result.predictions.write(out / "predictions.csv")
    with open(out / "logs.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.logs:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    with open(out / "audit.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.audit:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    outputs = {"predictions.csv": sha256_file(out / "predictions.csv")}
    if checkpoints:
        (out / "checkpoints").mkdir(exist_ok=True)
        for b in result.bundles:
            name = f"checkpoints/{b.stage}_f{b.fold}_r{b.rotation}.lpc"
            save_bundle(b, out / name)
            outputs[name] = sha256_file(out / name)
    spec = spec_for(mode)
    return {
        "command": "train", "version": __version__, "mode": cfg.mode, "seed": cfg.seed,
        "config": cfg.to_ini(), "cohort": str(Path(cohort_dir).resolve()),
        "cohort_sha256": cohort_digest(cohort_dir), "fold_plan_sha256": result.plan.digest(),
        "train_seq_len": len(spec.rnn_timepoints if spec.two_stage else spec.train_timepoints),
        "test_seq_len": result.audit[0]["test_seq_len"],
        "representation_r2": result.r2, "checkpoints": checkpoints, "outputs": outputs,
    }


def cmd_train(args) -> int:
    if args.replay:
        try:
            prov = json.loads(Path(args.replay).read_text(encoding="utf-8"))
            cfg = from_ini(prov["config"])
            cohort = args.cohort or prov["cohort"]
            checkpoints = prov.get("checkpoints", True)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot replay {args.replay}: {exc}") from None
        if cohort_digest(cohort) != prov["cohort_sha256"]:
            raise DataError(f"cohort {cohort} does not match the recorded SHA-256")
    else:
        if not args.cohort or not args.mode:
            raise UsageError("train: --cohort and --mode are required (or use --replay)")
        cfg = load_config(args.config, mode=args.mode, seed=args.seed)
        cohort = args.cohort
        checkpoints = not args.no_checkpoints
    prov = _train(cohort, cfg.mode, cfg, args.out, args.jobs, checkpoints)
    _write_json(Path(args.out) / PROVENANCE, prov)
    print(f"mode {cfg.mode}: predictions for {len(read_predictions(Path(args.out) / 'predictions.csv').ids)} "
          f"patients written to {args.out}")
    if prov["representation_r2"] is not None:
        print(f"held-out representation R2 {prov['representation_r2']:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred = read_predictions(args.pred)
    names = list(METRICS) if args.metric == "all" else [args.metric]
    for name in names:
        ci = bootstrap_ci(name, pred.probabilities, pred.labels, args.bootstrap, 0.95, args.seed,
                          args.stratified)
        print(f"{name} {ci.point!r} ci95 [{ci.lower!r}, {ci.upper!r}] "
              f"resamples {ci.n_resamples} skipped_degenerate {ci.n_skipped_degenerate}")
    if args.roc_out:
        Path(args.roc_out).write_text(roc_curve(pred.probabilities, pred.labels).points_text())
    return EXIT_OK


def _compare_lines(a, b) -> list:
    b = a.aligned(b)
    if list(a.labels) != list(b.labels):
        raise DataError("labels differ between prediction files")
    r = delong_paired(a.probabilities, b.probabilities, a.labels)
    return [f"auc_a {r.auc_a!r}", f"auc_b {r.auc_b!r}", f"delta {r.delta!r}",
            f"variance {r.variance!r}", f"z {r.z!r}", f"p {r.p!r}",
            f"degenerate {str(r.degenerate).lower()}"]


def cmd_compare(args) -> int:
    lines = _compare_lines(read_predictions(args.pred_a), read_predictions(args.pred_b))
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(args) -> int:
    preds = [read_predictions(p) for p in args.preds]
    by_mode = {}
    for path, p in zip(args.preds, preds):
        if p.mode in by_mode:
            raise DataError(f"two prediction files for mode {p.mode}")
        by_mode[p.mode] = (path, p)
    order = [m.value for m in TABLE_MODES] + [m.value for m in Mode if m not in TABLE_MODES]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["method\tAUROC [95% CI]\tSensitivity [95% CI]\tSpecificity [95% CI]"]
    for mode in order:
        if mode not in by_mode:
            continue
        _, p = by_mode[mode]
        cis = [bootstrap_ci(m, p.probabilities, p.labels, args.bootstrap, 0.95, args.seed)
               for m in METRICS]
        rows.append("\t".join([spec_for(mode).label] + [format_ci(c) for c in cis]))
        (out / f"roc_{mode}.txt").write_text(roc_curve(p.probabilities, p.labels).points_text())
    text = "\n".join(rows) + "\n"
    ref = Mode.TWO_STAGE_DUAL_TASK.value
    if ref in by_mode:
        comp = []
        for mode in order:
            if mode != ref and mode in by_mode:
                lines = _compare_lines(by_mode[ref][1], by_mode[mode][1])
                comp.append(f"{ref} vs {mode}: " + ", ".join(lines))
        if comp:
            text += "\nDeLong comparisons\n" + "\n".join(comp) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    _write_json(out / PROVENANCE, {
        "command": "report", "version": __version__, "bootstrap": args.bootstrap,
        "seed": args.seed, "inputs": {str(p): sha256_file(p) for p in args.preds},
        "outputs": {f.name: sha256_file(f) for f in sorted(out.iterdir())
                    if f.name != PROVENANCE},
    })
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="earlypcr", description="Two-stage dual-task pCR prediction at desk scale.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic cohort")
    g.add_argument("--n", type=int, default=624)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--response-noise", type=float, default=0.8)
    g.add_argument("--voxel-noise", type=float, default=0.05)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run nested cross-validation for one mode")
    t.add_argument("--cohort")
    t.add_argument("--mode", choices=[m.value for m in Mode], metavar="MODE",
                   help="one of: " + ", ".join(m.value for m in Mode))
    t.add_argument("--config", help="INI experiment config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--jobs", type=int, default=1, help="outer folds trained in parallel")
    t.add_argument("--no-checkpoints", action="store_true")
    t.add_argument("--replay", help="provenance.json of an earlier train run")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="metric with bootstrap 95%% CI")
    e.add_argument("--pred", required=True)
    e.add_argument("--metric", choices=list(METRICS) + ["all"], default="all")
    e.add_argument("--bootstrap", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--stratified", action="store_true", help="resample within each class")
    e.add_argument("--roc-out", help="write ROC points (fpr tpr per line)")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="paired DeLong test of two prediction files")
    c.add_argument("--pred-a", required=True)
    c.add_argument("--pred-b", required=True)
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", help="comparison table over several modes")
    r.add_argument("--preds", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--bootstrap", type=int, default=1000)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("earlypcr: a subcommand is required "
                             "(gen-data, train, evaluate, compare, report)")
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
