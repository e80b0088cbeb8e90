"""Command-line entry points.

Subcommands: synth (generate dataset), prepare (extract ROIs), train
(single variant), eval (score + metrics), compare (DeLong matrix from score
files), run (full experiment), report (re-emit tables/plots).

Exit codes: 0 success, 1 validation/configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .delong import ComparisonMode, delong_test
from .experiment import (
    ConfigError,
    EvalSettings,
    ExperimentConfig,
    RunResults,
    StageError,
    VariantResult,
    _safe_name,
    config_to_dict,
    evaluate_variant,
    load_config,
    load_variant_arrays,
    prepare_data,
    prepare_rois,
    results_to_metrics_dict,
    run_experiment,
    score_variant,
    train_variant,
    variant_seed,
    _synth_from_dict,
)
from .metrics import load_scores
from .network import load_checkpoint
from .report import emit_report, format_p_value
from .synth import generate_dataset
from .training import EpochStats, predict_probabilities
from .types import atomic_write_text


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octroi", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment (or synth) config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="parallel variant workers")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("prepare", parents=[common], help="dataset + split + ROI extraction")
    p_train = sub.add_parser("train", parents=[common], help="train one ROI variant")
    p_train.add_argument("--variant", required=True, help="variant name, e.g. ilm-bm-masking")
    p_eval = sub.add_parser("eval", parents=[common], help="score + metrics for one variant")
    p_eval.add_argument("--variant", required=True)
    p_cmp = sub.add_parser("compare", parents=[common], help="pairwise DeLong tests on score files")
    p_cmp.add_argument("scores", nargs="+", type=Path, help="score CSV files")
    p_cmp.add_argument("--paired", action="store_true", help="use the paired DeLong test")
    sub.add_parser("run", parents=[common], help="full experiment")
    p_rep = sub.add_parser("report", parents=[common], help="re-emit tables and plots")
    p_rep.add_argument("--run", type=Path, required=True, help="run directory to report on")
    return parser


def _load_experiment_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required for this command")
    return Path(args.out)


def _cmd_synth(args) -> int:
    if args.config is None:
        raise ConfigError("--config is required (a synth config or an experiment config)")
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if "dataset" in raw:
        synth = raw["dataset"].get("synth")
        if synth is None:
            raise ConfigError("experiment config has no dataset.synth section")
    else:
        synth = raw
    config = _synth_from_dict(synth)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    out = _require_out(args)
    manifest = generate_dataset(config, out)
    print(f"wrote {len(manifest.entries)} B-scans to {out}")
    return 0


def _cmd_prepare(args) -> int:
    config = _load_experiment_config(args)
    run_dir = _require_out(args)
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(run_dir / "config.json", json.dumps(config_to_dict(config), indent=2) + "\n")
    manifest, samples = prepare_data(config, run_dir)
    prepare_rois(config, run_dir, manifest, samples)
    print(f"prepared {len(samples)} scans x {len(config.roi_variants)} variants under {run_dir}")
    return 0


def _run_config_from_dir(args, run_dir: Path) -> ExperimentConfig:
    if args.config is not None:
        return _load_experiment_config(args)
    echo = run_dir / "config.json"
    if not echo.exists():
        raise ConfigError(f"no --config given and no config echo at {echo}")
    from .experiment import config_from_dict

    raw = json.loads(echo.read_text(encoding="utf-8"))
    return config_from_dict(raw, base_dir=run_dir)


def _cmd_train(args) -> int:
    run_dir = _require_out(args)
    config = _run_config_from_dir(args, run_dir)
    if args.variant not in config.variant_names:
        raise ConfigError(f"unknown variant {args.variant!r}; have {list(config.variant_names)}")
    splits = load_variant_arrays(run_dir, args.variant)
    seed = variant_seed(config.seed, args.variant)
    train_variant(run_dir, args.variant, splits, config.model, config.train, seed)
    print(f"trained {args.variant}; checkpoint under {run_dir / 'models' / _safe_name(args.variant)}")
    return 0


def _cmd_eval(args) -> int:
    run_dir = _require_out(args)
    config = _run_config_from_dir(args, run_dir)
    if args.variant not in config.variant_names:
        raise ConfigError(f"unknown variant {args.variant!r}; have {list(config.variant_names)}")
    splits = load_variant_arrays(run_dir, args.variant)
    model = load_checkpoint(run_dir / "models" / _safe_name(args.variant))
    score_set = score_variant(run_dir, args.variant, model, splits["test"])
    seed = variant_seed(config.seed, args.variant)
    report, youden_report, t_youden = evaluate_variant(score_set, config.eval_settings, seed)
    payload = {
        "variant": args.variant,
        "auroc": report.auroc.point,
        "auroc_ci": [report.auroc.ci_low, report.auroc.ci_high],
        "accuracy": report.accuracy.point,
        "sensitivity": report.sensitivity.point,
        "specificity": report.specificity.point,
        "threshold": report.threshold,
        "youden_threshold": t_youden,
        "n_pos": report.n_pos,
        "n_neg": report.n_neg,
    }
    out_path = run_dir / "scores" / f"metrics_{_safe_name(args.variant)}.json"
    atomic_write_text(out_path, json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_compare(args) -> int:
    if len(args.scores) < 2:
        raise ConfigError("compare needs at least two score files")
    mode = ComparisonMode.PAIRED if args.paired else ComparisonMode.UNPAIRED
    sets = [(path.stem, load_scores(path)) for path in args.scores]
    rows = []
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            (name_a, a), (name_b, b) = sets[i], sets[j]
            r = delong_test(a, b, mode)
            rows.append((name_a, name_b, r))
            print(
                f"{name_a} (AUROC {r.auroc_a:.3f}) vs {name_b} (AUROC {r.auroc_b:.3f}): "
                f"z = {r.z:+.3f}, p = {format_p_value(r.p_value)}"
            )
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparisons.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a", "b", "auroc_a", "auroc_b", "z", "p_value", "mode"])
            for name_a, name_b, r in rows:
                writer.writerow(
                    [name_a, name_b, f"{r.auroc_a:.6f}", f"{r.auroc_b:.6f}", f"{r.z:.6f}", repr(r.p_value), r.mode.value]
                )
        print(f"wrote {out / 'comparisons.csv'}")
    return 0


def _cmd_run(args) -> int:
    config = _load_experiment_config(args)
    results = run_experiment(config, run_dir=args.out, threads=max(1, args.threads))
    emit_report(results, results.run_dir / "report")
    print(f"run complete: {results.run_dir}")
    for v in results.variants:
        print(f"  {v.name}: AUROC {v.report.auroc.point:.3f}")
    return 0


def _load_history_csv(path: Path) -> list[EpochStats]:
    rows: list[EpochStats] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                EpochStats(
                    epoch=int(rec["epoch"]),
                    train_loss=float(rec["train_loss"]),
                    val_loss=float(rec["val_loss"]),
                    train_acc=float(rec["train_acc"]),
                    val_acc=float(rec["val_acc"]),
                )
            )
    return rows


def rebuild_results(run_dir: Path, config: ExperimentConfig) -> RunResults:
    """Reconstruct RunResults from persisted score and history files."""
    variants = []
    for request in config.roi_variants:
        name = request.name
        score_set = load_scores(run_dir / "scores" / f"{_safe_name(name)}.csv")
        seed = variant_seed(config.seed, name)
        report, youden_report, t_youden = evaluate_variant(score_set, config.eval_settings, seed)
        history_path = run_dir / "models" / _safe_name(name) / "history.csv"
        history = _load_history_csv(history_path) if history_path.exists() else []
        variants.append(
            VariantResult(
                name=name,
                request=request,
                scores=score_set,
                report=report,
                youden_report=youden_report,
                youden_threshold=t_youden,
                history=history,
            )
        )
    comparisons = []
    for i in range(len(variants)):
        for j in range(i + 1, len(variants)):
            comparisons.append(
                (
                    variants[i].name,
                    variants[j].name,
                    delong_test(variants[i].scores, variants[j].scores, config.eval_settings.delong_mode),
                )
            )
    return RunResults(run_dir=run_dir, config=config, variants=variants, comparisons=comparisons, timings={})


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    config = _run_config_from_dir(args, run_dir)
    results = rebuild_results(run_dir, config)
    out_dir = args.out if args.out is not None else run_dir / "report"
    paths = emit_report(results, out_dir)
    atomic_write_text(
        run_dir / "metrics.json", json.dumps(results_to_metrics_dict(results), indent=2) + "\n"
    )
    for p in paths:
        print(p)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
