"""Experiment runner.

Subcommands:
    phantom     generate a synthetic bundle corpus on disk
    corrupt     apply biased noise to train/val masks of a dataset
    oracle      noise-robust oracle sweep (CSV + SVG curves)
    gridsearch  beta x sigma2 bias-cancellation grid (CSV + heatmap)
    gradcheck   analytic-vs-numeric gradient verification
    score       score prediction bundles against ground-truth masks

Every command reads an optional JSON config (--config); flags override
file values. `segnoise --emit-default-config` prints the full default
tree. Outputs are byte-reproducible from config + seeds, and --jobs N
never changes results, only wall time.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bundleio import load_dataset, load_prediction, write_bundle
from .folds import DatasetSplit
from .metrics import (
    ScoreTriple,
    aggregate_framewise,
    finite_difference_grad_loss,
    grad_loss,
    hard_metrics,
    soft_metrics,
)
from .noise import NoiseMode, corrupt_dataset
from .oracle import run_sweep
from .trainer import beta_gridsearch
from .volume import PatientRecord


def _resolve_out(args_out, config) -> Path:
    out = args_out or config.get("output_dir") or os.environ.get(cfgmod.OUTPUT_DIR_ENV)
    if not out:
        raise cfgmod.ConfigError(
            "no output directory: pass --out, set output_dir in the config, "
            f"or set ${cfgmod.OUTPUT_DIR_ENV}"
        )
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_overrides(config: dict, items: list[tuple[tuple[str, ...], object]]) -> dict:
    for keys, value in items:
        if value is None:
            continue
        node = config
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = value
    return cfgmod.validate_config(config)


def _load_config_for(args) -> dict:
    return cfgmod.load_config(getattr(args, "config", None))


def _fold_overrides(args) -> list[tuple[tuple[str, ...], object]]:
    return [
        (("folds", "n_folds"), getattr(args, "n_folds", None)),
        (("folds", "train"), getattr(args, "train_size", None)),
        (("folds", "val"), getattr(args, "val_size", None)),
        (("folds", "test"), getattr(args, "test_size", None)),
        (("folds", "seed"), getattr(args, "fold_seed", None)),
        (("folds", "fold_index"), getattr(args, "fold_index", None)),
    ]


def cmd_phantom(args) -> int:
    config = _load_config_for(args)
    overrides: list[tuple[tuple[str, ...], object]] = [
        (("data", "phantom", "patients"), args.patients),
        (("data", "phantom", "seed"), args.seed),
        (("data", "phantom", "depth"), args.depth),
        (("data", "phantom", "height"), args.height),
        (("data", "phantom", "width"), args.width),
    ]
    if config["data"]["phantom"] is None:
        raise cfgmod.ConfigError("phantom generation needs data.phantom in the config")
    config = _apply_overrides(config, overrides)
    out = _resolve_out(args.out, config)
    records = cfgmod.records_from(config)
    for record in records:
        write_bundle(record, out)
    print(f"wrote {len(records)} phantom bundles to {out}")
    return 0


def cmd_corrupt(args) -> int:
    config = _load_config_for(args)
    if args.data is not None:
        config["data"]["path"] = args.data
        config["data"]["phantom"] = None
    config = _apply_overrides(
        config,
        [
            (("noise", "mode"), args.mode),
            (("noise", "sigma2"), args.sigma2),
            (("noise", "seed"), args.seed),
            *_fold_overrides(args),
        ],
    )
    out = _resolve_out(args.out, config)
    records = cfgmod.records_from(config)
    plan = cfgmod.foldplan_from(config, [r.patient_id for r in records])
    split = plan.folds[config["folds"]["fold_index"]]
    spec = cfgmod.noise_spec_from(config)
    masks, report = corrupt_dataset(records, split, spec)

    bundle_dir = out / "corrupted"
    by_id = {r.patient_id: r for r in records}
    for pid in sorted(masks):
        original = by_id[pid]
        corrupted = PatientRecord(volume=original.volume, mask=masks[pid])
        write_bundle(corrupted, bundle_dir)
    report.to_csv(out / "corruption_report.csv")
    mean_delta = report.mean_delta_s()
    delta_text = "undefined" if mean_delta is None else format(mean_delta, ".4f")
    print(
        f"corrupted {len(split.train_ids) + len(split.val_ids)} train/val patients "
        f"(mode={spec.mode.value}, sigma2={spec.sigma2:g}); mean delta_s={delta_text}; "
        f"outputs in {out}"
    )
    return 0


def cmd_oracle(args) -> int:
    config = _load_config_for(args)
    overrides: list[tuple[tuple[str, ...], object]] = [
        (("sweep", "repetitions"), args.repetitions),
        (("sweep", "seed"), args.seed),
        *_fold_overrides(args),
    ]
    if args.modes:
        overrides.append((("sweep", "modes"), args.modes))
    if args.sigma2_values:
        overrides.append((("sweep", "sigma2_values"), args.sigma2_values))
    if args.data is not None:
        config["data"]["path"] = args.data
        config["data"]["phantom"] = None
    config = _apply_overrides(config, overrides)
    out = _resolve_out(args.out, config)
    records = cfgmod.records_from(config)
    plan = cfgmod.foldplan_from(config, [r.patient_id for r in records])
    sweep = cfgmod.sweep_config_from(config)
    result = run_sweep(records, plan, sweep, jobs=args.jobs)
    written = result.write_outputs(out)
    print(f"oracle sweep: {len(result.samples)} cells; wrote {len(written)} files to {out}")
    return 0


def cmd_gridsearch(args) -> int:
    config = _load_config_for(args)
    overrides: list[tuple[tuple[str, ...], object]] = [
        (("noise", "mode"), args.mode),
        (("grid", "seeds"), args.seeds),
        (("train", "epochs"), args.epochs),
        (("train", "learning_rate"), args.learning_rate),
        *_fold_overrides(args),
    ]
    if args.betas:
        overrides.append((("grid", "betas"), args.betas))
    if args.sigma2_values:
        overrides.append((("grid", "sigma2_values"), args.sigma2_values))
    if args.data is not None:
        config["data"]["path"] = args.data
        config["data"]["phantom"] = None
    config = _apply_overrides(config, overrides)
    out = _resolve_out(args.out, config)
    records = cfgmod.records_from(config)
    plan = cfgmod.foldplan_from(config, [r.patient_id for r in records])
    split = plan.folds[config["folds"]["fold_index"]]
    grid = beta_gridsearch(
        records,
        split,
        betas=config["grid"]["betas"],
        mode=NoiseMode(config["noise"]["mode"]),
        sigma2_values=config["grid"]["sigma2_values"],
        seeds=range(config["grid"]["seeds"]),
        base_config=cfgmod.train_config_from(config),
        threshold=config["score"]["threshold"],
        jobs=args.jobs,
    )
    written = grid.write_outputs(out)
    print(f"gridsearch: {len(grid.cells)} cells; wrote {len(written)} files to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    config = _load_config_for(args)
    overrides: list[tuple[tuple[str, ...], object]] = [
        (("gradcheck", "height"), args.height),
        (("gradcheck", "width"), args.width),
        (("gradcheck", "trials"), args.trials),
        (("gradcheck", "eps"), args.eps),
        (("gradcheck", "tolerance"), args.tolerance),
        (("gradcheck", "seed"), args.seed),
    ]
    if args.betas:
        overrides.append((("gradcheck", "betas"), args.betas))
    config = _apply_overrides(config, overrides)
    gc = config["gradcheck"]
    if gc["eps"] < 1e-8:
        print(
            f"warning: eps={gc['eps']:g} sits near the float cancellation floor; "
            "finite differences may be dominated by rounding",
            file=sys.stderr,
        )
    rng = np.random.default_rng(gc["seed"])
    shape = (gc["height"], gc["width"])
    worst = 0.0
    for beta in gc["betas"]:
        max_rel = 0.0
        for _ in range(gc["trials"]):
            p = rng.uniform(0.05, 0.95, size=shape)
            t = (rng.random(shape) < 0.5).astype(np.float64)
            analytic = grad_loss(p, t, beta)
            numeric = finite_difference_grad_loss(p, t, beta, eps=gc["eps"])
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-12)
            max_rel = max(max_rel, float(rel.max()))
        status = "PASS" if max_rel < gc["tolerance"] else "FAIL"
        print(f"beta={beta:g}: max_rel_err={max_rel:.3e} [{status}]")
        worst = max(worst, max_rel)
    print(f"gradcheck {'PASS' if worst < gc['tolerance'] else 'FAIL'}: "
          f"worst={worst:.3e} tolerance={gc['tolerance']:g}")
    return 0 if worst < gc["tolerance"] else 1


def cmd_score(args) -> int:
    config = _load_config_for(args)
    config = _apply_overrides(config, [(("score", "threshold"), args.threshold)])
    out = _resolve_out(args.out, config)
    threshold = config["score"]["threshold"]
    records = {r.patient_id: r for r in load_dataset(args.data)}

    pred_root = Path(args.pred)
    pred_dirs = sorted(p for p in pred_root.iterdir() if (p / "meta.json").is_file())
    if not pred_dirs:
        raise FileNotFoundError(f"no prediction bundles under {pred_root}")

    rows = []
    collected: dict[str, list[float]] = {}
    for pred_dir in pred_dirs:
        pid, pred = load_prediction(pred_dir)
        if pid not in records:
            raise KeyError(f"prediction {pid!r} has no matching patient bundle")
        mask = records[pid].mask
        soft = soft_metrics(pred, mask)
        hard = hard_metrics(pred, mask, threshold)
        framewise = aggregate_framewise(
            [soft_metrics(pred[f], mask[f]).dice for f in range(pred.shape[0])]
        )
        for name, value in (
            *((f"soft_{m}", getattr(soft, m)) for m in ScoreTriple._fields),
            *((f"hard_{m}", getattr(hard, m)) for m in ScoreTriple._fields),
            ("framewise_soft_dice", framewise),
        ):
            rows.append((pid, name, value))
            collected.setdefault(name, []).append(value)
    for name in sorted(collected):
        rows.append(("ALL", name, float(np.mean(collected[name]))))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["patient_id", "metric", "value"])
    for pid, name, value in rows:
        writer.writerow([pid, name, format(value, ".10g")])
    (out / "scores.csv").write_text(buf.getvalue())
    print(f"scored {len(pred_dirs)} patients (volume-wise); wrote {out / 'scores.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segnoise",
        description="Biased annotator-noise simulation and f-beta loss experiments.",
    )
    parser.add_argument(
        "--emit-default-config",
        action="store_true",
        help="print the default JSON config and exit",
    )
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help=f"output directory (default: config/${cfgmod.OUTPUT_DIR_ENV})")

    def add_fold_flags(p):
        p.add_argument("--folds", type=int, dest="n_folds", help="number of folds")
        p.add_argument("--train-size", type=int, dest="train_size")
        p.add_argument("--val-size", type=int, dest="val_size")
        p.add_argument("--test-size", type=int, dest="test_size")
        p.add_argument("--fold-seed", type=int, dest="fold_seed")
        p.add_argument("--fold-index", type=int, dest="fold_index")

    p = sub.add_parser("phantom", help="generate a synthetic bundle corpus")
    add_common(p)
    p.add_argument("--patients", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("corrupt", help="corrupt train/val masks of one fold")
    add_common(p)
    add_fold_flags(p)
    p.add_argument("--data", help="bundle directory (overrides phantom source)")
    p.add_argument("--mode", choices=[m.value for m in NoiseMode])
    p.add_argument("--sigma2", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("oracle", help="noise-robust oracle sweep")
    add_common(p)
    add_fold_flags(p)
    p.add_argument("--data", help="bundle directory (overrides phantom source)")
    p.add_argument("--modes", nargs="+", choices=[m.value for m in NoiseMode])
    p.add_argument("--sigma2-values", nargs="+", type=float, dest="sigma2_values")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gridsearch", help="beta x sigma2 bias-cancellation grid")
    add_common(p)
    add_fold_flags(p)
    p.add_argument("--data", help="bundle directory (overrides phantom source)")
    p.add_argument("--mode", choices=[m.value for m in NoiseMode])
    p.add_argument("--betas", nargs="+", type=float)
    p.add_argument("--sigma2-values", nargs="+", type=float, dest="sigma2_values")
    p.add_argument("--seeds", type=int, help="number of corruption seeds per cell")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("gradcheck", help="verify analytic gradients numerically")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--betas", nargs="+", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("score", help="score prediction bundles against masks")
    add_common(p)
    p.add_argument("--pred", required=True, help="directory of prediction bundles")
    p.add_argument("--data", required=True, help="directory of ground-truth bundles")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.emit_default_config:
        sys.stdout.write(cfgmod.default_config_json())
        return 0
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (cfgmod.ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
