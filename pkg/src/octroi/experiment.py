"""Config-driven experiment runner for the multi-ROI model comparison.

Pipeline order: load/generate dataset -> central-scan selection -> subject
split -> per-variant ROI extraction -> per-variant training -> test-set
scoring -> metrics and pairwise DeLong comparisons. Every stage persists
its outputs under the run directory so stages can be re-run in isolation.
"""

from __future__ import annotations

import dataclasses
import json
import re
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .delong import ComparisonMode, ComparisonResult, delong_test
from .metrics import (
    MetricsReport,
    ScoreSet,
    compute_report,
    save_scores,
    youden_threshold,
)
from .network import MiniVgg, ModelConfig, save_checkpoint
from .pngio import read_png, write_png
from .roi import RoiKind, RoiMethod, RoiRequest, extract_roi, quantize_u8, resize
from .splitting import filter_central_bscans, split_subjects
from .synth import (
    ChoroidTexture,
    DrusenConfig,
    LayerGeometry,
    SynthConfig,
    generate_dataset,
    load_samples,
)
from .training import EpochStats, TrainConfig, predict_probabilities, train, write_history
from .types import DatasetManifest, ManifestEntry, SplitAssignment, atomic_write_text, load_manifest, save_manifest


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class EvalSettings:
    bootstrap_samples: int = 1000
    alpha: float = 0.05
    threshold: float = 0.5
    delong_mode: ComparisonMode = ComparisonMode.UNPAIRED


def default_roi_variants(target_size: tuple[int, int], choroid_offset: int = 80) -> tuple[RoiRequest, ...]:
    """The eight-variant comparison: whole image, three masked ROIs, three
    cropped ROIs, and the binary RPE-BM mask."""
    banded = (RoiKind.ILM_BM, RoiKind.RPE_BM, RoiKind.BM_CHO)
    variants = [RoiRequest(RoiKind.WHOLE_IMAGE, target_size=target_size)]
    for method in (RoiMethod.MASKING, RoiMethod.CROPPING):
        variants.extend(
            RoiRequest(kind, method, choroid_offset=choroid_offset, target_size=target_size)
            for kind in banded
        )
    variants.append(RoiRequest(RoiKind.RPE_BM_MASK, target_size=target_size))
    return tuple(variants)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_manifest: str | None = None
    dataset_synth: SynthConfig | None = None
    keep_fraction: float = 0.4
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    roi_variants: tuple[RoiRequest, ...] = ()
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_settings: EvalSettings = field(default_factory=EvalSettings)
    output_dir: str = "runs"
    seed: int = 0
    base_dir: Path | None = None

    def __post_init__(self) -> None:
        if (self.dataset_manifest is None) == (self.dataset_synth is None):
            raise ConfigError("dataset must specify exactly one of 'manifest' or 'synth'")
        variants = self.roi_variants or default_roi_variants(tuple(self.model.input_size))
        object.__setattr__(self, "roi_variants", tuple(variants))
        names = [v.name for v in self.roi_variants]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate ROI variants: {names}")
        for v in self.roi_variants:
            if tuple(v.target_size) != tuple(self.model.input_size):
                raise ConfigError(
                    f"variant {v.name!r} target_size {v.target_size} does not match "
                    f"model input_size {self.model.input_size}"
                )
        self.model.validate()
        self.train.validate()

    @property
    def variant_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.roi_variants)


def _strict(d: dict, allowed: dict[str, object], context: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}; allowed: {sorted(allowed)}")


def _pair(value, context: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{context} must be a [low, high] pair, got {value!r}")
    return tuple(value)


def _synth_from_dict(d: dict) -> SynthConfig:
    defaults = SynthConfig()
    allowed = {f.name: None for f in dataclasses.fields(SynthConfig)}
    _strict(d, allowed, "dataset.synth")
    geometry = defaults.layer_geometry
    if "layer_geometry" in d:
        g = d["layer_geometry"]
        _strict(g, {f.name: None for f in dataclasses.fields(LayerGeometry)}, "layer_geometry")
        geometry = LayerGeometry(
            mean_ilm_depth=g.get("mean_ilm_depth", geometry.mean_ilm_depth),
            mean_retina_thickness=g.get("mean_retina_thickness", geometry.mean_retina_thickness),
            mean_rpe_bm_gap=g.get("mean_rpe_bm_gap", geometry.mean_rpe_bm_gap),
            curvature_amplitude=_pair(
                g.get("curvature_amplitude", geometry.curvature_amplitude), "curvature_amplitude"
            ),
        )
    drusen = defaults.drusen
    if "drusen" in d:
        dr = d["drusen"]
        _strict(dr, {f.name: None for f in dataclasses.fields(DrusenConfig)}, "drusen")
        drusen = DrusenConfig(
            count_range=tuple(_pair(dr.get("count_range", drusen.count_range), "count_range")),
            width_range_um=_pair(dr.get("width_range_um", drusen.width_range_um), "width_range_um"),
            height_range_px=_pair(dr.get("height_range_px", drusen.height_range_px), "height_range_px"),
        )
    choroid = defaults.choroid_texture
    if "choroid_texture" in d:
        ct = d["choroid_texture"]
        _strict(ct, {f.name: None for f in dataclasses.fields(ChoroidTexture)}, "choroid_texture")
        choroid = ChoroidTexture(
            mean_intensity=ct.get("mean_intensity", choroid.mean_intensity),
            blob_density=ct.get("blob_density", choroid.blob_density),
        )
    return SynthConfig(
        image_width=int(d.get("image_width", defaults.image_width)),
        image_height=int(d.get("image_height", defaults.image_height)),
        axial_resolution_um=float(d.get("axial_resolution_um", defaults.axial_resolution_um)),
        lateral_resolution_um=float(d.get("lateral_resolution_um", defaults.lateral_resolution_um)),
        subjects_per_class=int(d.get("subjects_per_class", defaults.subjects_per_class)),
        bscans_per_subject=int(d.get("bscans_per_subject", defaults.bscans_per_subject)),
        layer_geometry=geometry,
        drusen=drusen,
        speckle_sigma=float(d.get("speckle_sigma", defaults.speckle_sigma)),
        shadow_attenuation=float(d.get("shadow_attenuation", defaults.shadow_attenuation)),
        choroid_texture=choroid,
        seed=int(d.get("seed", defaults.seed)),
    )


def _variant_from_dict(d: dict, default_target: tuple[int, int]) -> RoiRequest:
    _strict(
        d,
        {"kind": None, "method": None, "choroid_offset": None, "target_size": None, "pad_below": None},
        "roi variant",
    )
    try:
        kind = RoiKind(d["kind"])
    except KeyError:
        raise ConfigError(f"roi variant missing 'kind': {d!r}") from None
    except ValueError:
        raise ConfigError(f"unknown roi kind {d['kind']!r}") from None
    method = d.get("method")
    if method is not None:
        try:
            method = RoiMethod(method)
        except ValueError:
            raise ConfigError(f"unknown roi method {d['method']!r}") from None
    target = tuple(d.get("target_size", default_target))
    return RoiRequest(
        kind=kind,
        method=method,
        choroid_offset=int(d.get("choroid_offset", 80)),
        target_size=(int(target[0]), int(target[1])),
        pad_below=bool(d.get("pad_below", False)),
    )


def _model_from_dict(d: dict) -> ModelConfig:
    defaults = ModelConfig()
    _strict(d, {f.name: None for f in dataclasses.fields(ModelConfig)}, "model")
    return ModelConfig(
        input_size=tuple(d.get("input_size", defaults.input_size)),
        block_channels=tuple(d.get("block_channels", defaults.block_channels)),
        convs_per_block=tuple(d.get("convs_per_block", defaults.convs_per_block)),
        dense_sizes=tuple(d.get("dense_sizes", defaults.dense_sizes)),
    )


def _augment_from_dict(d: dict) -> AugmentConfig:
    defaults = AugmentConfig()
    _strict(d, {f.name: None for f in dataclasses.fields(AugmentConfig)}, "train.augmentation")
    return AugmentConfig(
        rotation_degrees=_pair(d.get("rotation_degrees", defaults.rotation_degrees), "rotation_degrees"),
        horizontal_flip=bool(d.get("horizontal_flip", defaults.horizontal_flip)),
        brightness_factor=_pair(d.get("brightness_factor", defaults.brightness_factor), "brightness_factor"),
        shift_fraction=float(d.get("shift_fraction", defaults.shift_fraction)),
        zoom_factor=_pair(d.get("zoom_factor", defaults.zoom_factor), "zoom_factor"),
        enabled=bool(d.get("enabled", defaults.enabled)),
    )


def _train_from_dict(d: dict) -> TrainConfig:
    defaults = TrainConfig()
    allowed = {f.name: None for f in dataclasses.fields(TrainConfig)}
    allowed.pop("seed")  # training seeds derive from the run seed per variant
    _strict(d, allowed, "train")
    return TrainConfig(
        learning_rate=float(d.get("learning_rate", defaults.learning_rate)),
        momentum=float(d.get("momentum", defaults.momentum)),
        batch_size=int(d.get("batch_size", defaults.batch_size)),
        max_epochs=int(d.get("max_epochs", defaults.max_epochs)),
        patience=int(d.get("patience", defaults.patience)),
        min_improvement=float(d.get("min_improvement", defaults.min_improvement)),
        augmentation=_augment_from_dict(d.get("augmentation", {})),
    )


def _eval_from_dict(d: dict) -> EvalSettings:
    defaults = EvalSettings()
    _strict(
        d,
        {"bootstrap_samples": None, "alpha": None, "threshold": None, "delong_mode": None},
        "eval",
    )
    mode = d.get("delong_mode", defaults.delong_mode.value)
    try:
        mode = ComparisonMode(mode)
    except ValueError:
        raise ConfigError(f"unknown delong_mode {mode!r} (use 'paired' or 'unpaired')") from None
    return EvalSettings(
        bootstrap_samples=int(d.get("bootstrap_samples", defaults.bootstrap_samples)),
        alpha=float(d.get("alpha", defaults.alpha)),
        threshold=float(d.get("threshold", defaults.threshold)),
        delong_mode=mode,
    )


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    _strict(
        raw,
        {
            "dataset": None,
            "keep_fraction": None,
            "split_ratios": None,
            "roi_variants": None,
            "model": None,
            "train": None,
            "eval": None,
            "output_dir": None,
            "seed": None,
        },
        "experiment config",
    )
    dataset = raw.get("dataset")
    if not isinstance(dataset, dict):
        raise ConfigError("config requires a 'dataset' object")
    _strict(dataset, {"manifest": None, "synth": None}, "dataset")
    model = _model_from_dict(raw.get("model", {}))
    variants = tuple(
        _variant_from_dict(v, tuple(model.input_size)) for v in raw.get("roi_variants", [])
    )
    ratios = raw.get("split_ratios", (0.8, 0.1, 0.1))
    if len(ratios) != 3:
        raise ConfigError(f"split_ratios must have 3 entries, got {ratios!r}")
    return ExperimentConfig(
        dataset_manifest=dataset.get("manifest"),
        dataset_synth=_synth_from_dict(dataset["synth"]) if "synth" in dataset else None,
        keep_fraction=float(raw.get("keep_fraction", 0.4)),
        split_ratios=tuple(float(r) for r in ratios),
        roi_variants=variants,
        model=model,
        train=_train_from_dict(raw.get("train", {})),
        eval_settings=_eval_from_dict(raw.get("eval", {})),
        output_dir=str(raw.get("output_dir", "runs")),
        seed=int(raw.get("seed", 0)),
        base_dir=base_dir,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent)


def config_to_dict(config: ExperimentConfig) -> dict:
    dataset: dict = {}
    if config.dataset_manifest is not None:
        dataset["manifest"] = config.dataset_manifest
    if config.dataset_synth is not None:
        dataset["synth"] = dataclasses.asdict(config.dataset_synth)
    return {
        "dataset": dataset,
        "keep_fraction": config.keep_fraction,
        "split_ratios": list(config.split_ratios),
        "roi_variants": [
            {
                "kind": v.kind.value,
                "method": v.method.value if v.method else None,
                "choroid_offset": v.choroid_offset,
                "target_size": list(v.target_size),
                "pad_below": v.pad_below,
            }
            for v in config.roi_variants
        ],
        "model": dataclasses.asdict(config.model),
        "train": {
            "learning_rate": config.train.learning_rate,
            "momentum": config.train.momentum,
            "batch_size": config.train.batch_size,
            "max_epochs": config.train.max_epochs,
            "patience": config.train.patience,
            "min_improvement": config.train.min_improvement,
            "augmentation": dataclasses.asdict(config.train.augmentation),
        },
        "eval": {
            "bootstrap_samples": config.eval_settings.bootstrap_samples,
            "alpha": config.eval_settings.alpha,
            "threshold": config.eval_settings.threshold,
            "delong_mode": config.eval_settings.delong_mode.value,
        },
        "output_dir": config.output_dir,
        "seed": config.seed,
    }


def variant_seed(run_seed: int, name: str) -> int:
    """Stable per-variant seed so variant order cannot change results."""
    return ((run_seed & 0x7FFFFFFF) << 32) | zlib.crc32(name.encode("utf-8"))


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


@dataclass
class SplitArrays:
    images: np.ndarray
    labels: np.ndarray
    subjects: tuple[str, ...]


@dataclass
class VariantResult:
    name: str
    request: RoiRequest
    scores: ScoreSet
    report: MetricsReport
    youden_report: MetricsReport
    youden_threshold: float
    history: list[EpochStats]


@dataclass
class RunResults:
    run_dir: Path
    config: ExperimentConfig
    variants: list[VariantResult]
    comparisons: list[tuple[str, str, ComparisonResult]]
    timings: dict[str, float]

    def variant(self, name: str) -> VariantResult:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)


def _extract_variant(
    samples: list,
    entries: tuple[ManifestEntry, ...],
    request: RoiRequest,
    out_dir: Path,
) -> dict[str, SplitArrays]:
    """Extract + resize one variant for all samples; persist PNGs + provenance."""
    by_split: dict[str, list[int]] = {s.value: [] for s in SplitAssignment}
    images = np.empty((len(samples), *request.target_size), dtype=np.uint8)
    records = []
    for i, ((bscan, seg), entry) in enumerate(zip(samples, entries)):
        roi = extract_roi(bscan, seg, request)
        pre_h, pre_w = roi.shape
        if request.kind is RoiKind.RPE_BM_MASK:
            roi = roi * np.uint8(255)
        resized = quantize_u8(resize(roi, request.target_size))
        images[i] = resized
        fname = f"{_safe_name(entry.volume_id)}_{entry.index_in_volume:03d}.png"
        write_png(out_dir / fname, resized)
        records.append(
            {
                "file": fname,
                "source": entry.scan_path,
                "subject_id": entry.subject_id,
                "label": entry.label.value,
                "split": entry.split.value if entry.split else None,
                "pre_resize_height": int(pre_h),
                "pre_resize_width": int(pre_w),
            }
        )
        if entry.split is not None:
            by_split[entry.split.value].append(i)
    provenance = {
        "kind": request.kind.value,
        "method": request.method.value if request.method else None,
        "choroid_offset": request.choroid_offset,
        "target_size": list(request.target_size),
        "images": records,
    }
    atomic_write_text(out_dir / "provenance.json", json.dumps(provenance, indent=2) + "\n")

    labels = np.array([e.label.as_int for e in entries], dtype=np.int64)
    subjects = tuple(e.subject_id for e in entries)
    out: dict[str, SplitArrays] = {}
    for split, idx in by_split.items():
        idx_arr = np.array(idx, dtype=np.int64)
        out[split] = SplitArrays(
            images=images[idx_arr] if len(idx_arr) else images[:0],
            labels=labels[idx_arr] if len(idx_arr) else labels[:0],
            subjects=tuple(subjects[i] for i in idx),
        )
    return out


def load_variant_arrays(run_dir: str | Path, name: str) -> dict[str, SplitArrays]:
    """Rebuild a variant's per-split arrays from its persisted PNGs."""
    var_dir = Path(run_dir) / "roi" / _safe_name(name)
    prov_path = var_dir / "provenance.json"
    if not prov_path.exists():
        raise FileNotFoundError(f"variant {name!r} has no extracted ROIs under {var_dir}")
    provenance = json.loads(prov_path.read_text(encoding="utf-8"))
    groups: dict[str, list[dict]] = {s.value: [] for s in SplitAssignment}
    for rec in provenance["images"]:
        if rec["split"] is not None:
            groups[rec["split"]].append(rec)
    out: dict[str, SplitArrays] = {}
    for split, records in groups.items():
        imgs = [read_png(var_dir / rec["file"]) for rec in records]
        out[split] = SplitArrays(
            images=np.stack(imgs) if imgs else np.empty((0,), np.uint8),
            labels=np.array([1 if rec["label"] == "AMD" else 0 for rec in records], dtype=np.int64),
            subjects=tuple(rec["subject_id"] for rec in records),
        )
    return out


def train_variant(
    run_dir: Path,
    name: str,
    splits: dict[str, SplitArrays],
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
) -> tuple[MiniVgg, list[EpochStats]]:
    """Train one variant from its split arrays and persist checkpoint + history."""
    model = MiniVgg(model_config, seed=seed)
    cfg = dataclasses.replace(train_config, seed=seed)
    tr, va = splits["train"], splits["val"]
    model, history = train(model, (tr.images, tr.labels), (va.images, va.labels), cfg)
    model_dir = Path(run_dir) / "models" / _safe_name(name)
    save_checkpoint(model, model_dir)
    write_history(history, model_dir / "history.csv")
    return model, history


def score_variant(run_dir: Path, name: str, model: MiniVgg, test: SplitArrays) -> ScoreSet:
    probs = predict_probabilities(model, test.images)
    score_set = ScoreSet(scores=probs, labels=test.labels, subject_ids=test.subjects)
    save_scores(score_set, Path(run_dir) / "scores" / f"{_safe_name(name)}.csv")
    return score_set


def evaluate_variant(
    score_set: ScoreSet, settings: EvalSettings, seed: int
) -> tuple[MetricsReport, MetricsReport, float]:
    report = compute_report(
        score_set,
        threshold=settings.threshold,
        n_resamples=settings.bootstrap_samples,
        alpha=settings.alpha,
        seed=seed,
    )
    t_youden = youden_threshold(score_set)
    youden_report = compute_report(
        score_set,
        threshold=t_youden,
        n_resamples=settings.bootstrap_samples,
        alpha=settings.alpha,
        seed=seed,
    )
    return report, youden_report, t_youden


def _run_one_variant(args: tuple) -> tuple[str, ScoreSet, MetricsReport, MetricsReport, float, list[EpochStats]]:
    run_dir, name, splits, model_config, train_config, settings, seed = args
    model, history = train_variant(run_dir, name, splits, model_config, train_config, seed)
    score_set = score_variant(run_dir, name, model, splits["test"])
    report, youden_report, t_youden = evaluate_variant(score_set, settings, seed)
    return name, score_set, report, youden_report, t_youden, history


def _interval_dict(iv) -> dict:
    return {"point": iv.point, "ci_low": iv.ci_low, "ci_high": iv.ci_high}


def results_to_metrics_dict(results: RunResults) -> dict:
    return {
        "variants": [
            {
                "name": v.name,
                "kind": v.request.kind.value,
                "method": v.request.method.value if v.request.method else None,
                "threshold": v.report.threshold,
                "n_pos": v.report.n_pos,
                "n_neg": v.report.n_neg,
                "auroc": _interval_dict(v.report.auroc),
                "accuracy": _interval_dict(v.report.accuracy),
                "sensitivity": _interval_dict(v.report.sensitivity),
                "specificity": _interval_dict(v.report.specificity),
                "youden_threshold": v.youden_threshold,
                "youden": {
                    "accuracy": _interval_dict(v.youden_report.accuracy),
                    "sensitivity": _interval_dict(v.youden_report.sensitivity),
                    "specificity": _interval_dict(v.youden_report.specificity),
                },
            }
            for v in results.variants
        ],
        "comparisons": [
            {
                "a": a,
                "b": b,
                "auroc_a": r.auroc_a,
                "auroc_b": r.auroc_b,
                "z": r.z,
                "p_value": r.p_value,
                "mode": r.mode.value,
            }
            for a, b, r in results.comparisons
        ],
    }


def _make_run_dir(config: ExperimentConfig, run_dir: str | Path | None) -> Path:
    if run_dir is not None:
        path = Path(run_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path
    base = Path(config.output_dir)
    if config.base_dir is not None and not base.is_absolute():
        base = config.base_dir / base
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    for n in range(1000):
        candidate = base / (f"run-{stamp}" if n == 0 else f"run-{stamp}-{n}")
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            continue
    raise RuntimeError(f"could not allocate a fresh run directory under {base}")


def prepare_data(config: ExperimentConfig, run_dir: Path) -> tuple[DatasetManifest, list]:
    """Stages 1-3: obtain the dataset, select central scans, split subjects."""
    if config.dataset_synth is not None:
        manifest = generate_dataset(config.dataset_synth, Path(run_dir) / "dataset")
    else:
        manifest_path = Path(config.dataset_manifest)
        if config.base_dir is not None and not manifest_path.is_absolute():
            manifest_path = config.base_dir / manifest_path
        manifest = load_manifest(manifest_path)
    manifest = filter_central_bscans(manifest, config.keep_fraction)
    manifest = split_subjects(manifest, config.split_ratios, seed=config.seed)
    for split in SplitAssignment:
        if not manifest.entries_for_split(split):
            raise ValueError(
                f"the {split.value} split is empty; add subjects or adjust split_ratios"
            )
    save_manifest(manifest, Path(run_dir) / "split" / "manifest.json")
    samples = load_samples(manifest)
    return manifest, samples


def prepare_rois(
    config: ExperimentConfig, run_dir: Path, manifest: DatasetManifest, samples: list
) -> dict[str, dict[str, SplitArrays]]:
    """Stage 4: per-variant ROI extraction, persisted as PNG + provenance."""
    per_variant: dict[str, dict[str, SplitArrays]] = {}
    for request in config.roi_variants:
        out_dir = Path(run_dir) / "roi" / _safe_name(request.name)
        per_variant[request.name] = _extract_variant(samples, manifest.entries, request, out_dir)
    return per_variant


def run_experiment(
    config: ExperimentConfig, run_dir: str | Path | None = None, threads: int = 1
) -> RunResults:
    """Execute the full pipeline and return the collected results.

    With ``threads > 1`` variants train in parallel worker processes;
    results are identical to sequential execution because all randomness is
    seeded per variant.
    """
    run_dir = _make_run_dir(config, run_dir)
    atomic_write_text(run_dir / "config.json", json.dumps(config_to_dict(config), indent=2) + "\n")
    timings: dict[str, float] = {}
    info: dict = {"run_dir": str(run_dir), "completed": False}

    def finish_info() -> None:
        info["stages_seconds"] = {k: round(v, 3) for k, v in timings.items()}
        atomic_write_text(run_dir / "run_info.json", json.dumps(info, indent=2) + "\n")

    stage = "dataset"
    try:
        t0 = time.perf_counter()
        manifest, samples = prepare_data(config, run_dir)
        timings[stage] = time.perf_counter() - t0

        stage = "roi-extraction"
        t0 = time.perf_counter()
        per_variant = prepare_rois(config, run_dir, manifest, samples)
        timings[stage] = time.perf_counter() - t0

        stage = "train-and-score"
        t0 = time.perf_counter()
        jobs = [
            (
                run_dir,
                request.name,
                per_variant[request.name],
                config.model,
                config.train,
                config.eval_settings,
                variant_seed(config.seed, request.name),
            )
            for request in config.roi_variants
        ]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(_run_one_variant, jobs))
        else:
            outcomes = [_run_one_variant(job) for job in jobs]
        timings[stage] = time.perf_counter() - t0

        stage = "compare"
        t0 = time.perf_counter()
        by_name = {name: rest for name, *rest in outcomes}
        variants = []
        for request in config.roi_variants:
            score_set, report, youden_report, t_youden, history = by_name[request.name]
            variants.append(
                VariantResult(
                    name=request.name,
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
                result = delong_test(
                    variants[i].scores, variants[j].scores, config.eval_settings.delong_mode
                )
                comparisons.append((variants[i].name, variants[j].name, result))
        timings[stage] = time.perf_counter() - t0

        results = RunResults(
            run_dir=run_dir,
            config=config,
            variants=variants,
            comparisons=comparisons,
            timings=timings,
        )
        atomic_write_text(
            run_dir / "metrics.json", json.dumps(results_to_metrics_dict(results), indent=2) + "\n"
        )
        info["completed"] = True
        info["variants"] = [v.name for v in variants]
        finish_info()
        return results
    except Exception as exc:
        info["failed_stage"] = stage
        info["error"] = str(exc)
        finish_info()
        raise StageError(stage, exc) from exc
