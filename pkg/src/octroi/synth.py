"""Synthetic OCT B-scan generation and dataset ingestion.

The generator is a desk-scale stand-in for a clinical dataset: smooth
polynomial layer boundaries, Gaussian drusen elevating the RPE away from
Bruch's membrane in AMD scans, a blobby choroid texture beneath BM, optional
shadowing of the choroid under drusen, and multiplicative speckle noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pngio import read_png, write_png
from .types import (
    BScan,
    ClassLabel,
    DatasetManifest,
    LayerSegmentation,
    ManifestEntry,
    atomic_write_text,
    load_manifest,
    save_manifest,
)

# Base reflectivities of the rendered tissue bands, before noise.
_VITREOUS_INTENSITY = 14.0
_RETINA_INTENSITY = 110.0
_RPE_BAND_INTENSITY = 205.0
_VESSEL_DARKENING = 0.5

# Per-subject / per-scan geometry jitter, in pixels.
_SUBJECT_DEPTH_JITTER = 4.0
_SUBJECT_THICKNESS_JITTER = 4.0
_SUBJECT_GAP_JITTER = 1.0
_SCAN_OFFSET_JITTER = 3.0
_SCAN_THICKNESS_JITTER = 1.5
_SCAN_CURVE_JITTER = 1.5

# Seed-stream tags so each generation component draws from its own stream;
# skipping one component (e.g. drusen on controls) leaves the rest untouched.
_STREAM_SUBJECT = 1
_STREAM_SCAN = 2
_STREAM_DRUSEN = 3
_STREAM_CHOROID = 4
_STREAM_SPECKLE = 5


@dataclass(frozen=True)
class LayerGeometry:
    """Mean layer positions and curvature, all in pixels."""

    mean_ilm_depth: float = 34.0
    mean_retina_thickness: float = 60.0
    mean_rpe_bm_gap: float = 4.0
    curvature_amplitude: tuple[float, float] = (4.0, 12.0)


@dataclass(frozen=True)
class DrusenConfig:
    count_range: tuple[int, int] = (1, 3)
    width_range_um: tuple[float, float] = (150.0, 300.0)
    height_range_px: tuple[float, float] = (7.0, 14.0)


@dataclass(frozen=True)
class ChoroidTexture:
    mean_intensity: float = 90.0
    blob_density: float = 0.004  # vessel blobs per choroid pixel


@dataclass(frozen=True)
class SynthConfig:
    image_width: int = 256
    image_height: int = 192
    axial_resolution_um: float = 4.0
    lateral_resolution_um: float = 10.0
    subjects_per_class: int = 4
    bscans_per_subject: int = 4
    layer_geometry: LayerGeometry = field(default_factory=LayerGeometry)
    drusen: DrusenConfig = field(default_factory=DrusenConfig)
    speckle_sigma: float = 0.12
    shadow_attenuation: float = 0.6
    choroid_texture: ChoroidTexture = field(default_factory=ChoroidTexture)
    seed: int = 0

    def validate(self) -> None:
        if self.image_width < 16 or self.image_height < 16:
            raise ValueError(
                f"image size must be at least 16x16, got {self.image_width}x{self.image_height}"
            )
        if self.axial_resolution_um <= 0 or self.lateral_resolution_um <= 0:
            raise ValueError("pixel resolutions must be positive")
        if self.drusen.width_range_um[0] <= 125.0:
            raise ValueError(
                "intermediate-AMD drusen must be wider than 125 um, got minimum "
                f"{self.drusen.width_range_um[0]} um"
            )
        if self.drusen.width_range_um[0] > self.drusen.width_range_um[1]:
            raise ValueError("drusen width range is empty")
        if not (0 <= self.drusen.count_range[0] <= self.drusen.count_range[1]):
            raise ValueError(f"invalid drusen count range {self.drusen.count_range}")
        if not (0.0 <= self.shadow_attenuation <= 1.0):
            raise ValueError(f"shadow_attenuation must be in [0, 1], got {self.shadow_attenuation}")
        if self.speckle_sigma < 0:
            raise ValueError(f"speckle_sigma must be non-negative, got {self.speckle_sigma}")
        if self.subjects_per_class < 1 or self.bscans_per_subject < 1:
            raise ValueError("subjects_per_class and bscans_per_subject must be at least 1")


@dataclass(frozen=True)
class GeneratedSample:
    bscan: BScan
    segmentation: LayerSegmentation
    drusen_footprint: np.ndarray  # (width,) bool, True under a druse


def _zero_mean_unit_poly(rng: np.random.Generator, width: int) -> np.ndarray:
    """Random degree-<=3 polynomial over the columns, zero-mean, max |value| == 1."""
    u = np.linspace(-1.0, 1.0, width)
    p = np.polyval(rng.uniform(-1.0, 1.0, size=4), u)
    p = p - p.mean()
    peak = np.max(np.abs(p))
    return p / peak if peak > 0 else np.zeros(width)


def generate_bscan(
    config: SynthConfig,
    subject_seed: int,
    label: ClassLabel,
    index: int,
    subject_id: str | None = None,
    volume_id: str | None = None,
) -> GeneratedSample:
    """Render one synthetic B-scan with its ground-truth segmentation.

    Layer geometry that would leave the image (or leave no room for the
    choroid) raises a ValueError naming the violated bound.
    """
    config.validate()
    W, H = config.image_width, config.image_height
    geo = config.layer_geometry

    subj_rng = np.random.default_rng([_STREAM_SUBJECT, config.seed, subject_seed])
    ilm_depth = geo.mean_ilm_depth + subj_rng.uniform(-_SUBJECT_DEPTH_JITTER, _SUBJECT_DEPTH_JITTER)
    thickness = geo.mean_retina_thickness + subj_rng.uniform(
        -_SUBJECT_THICKNESS_JITTER, _SUBJECT_THICKNESS_JITTER
    )
    gap = max(1.5, geo.mean_rpe_bm_gap + subj_rng.uniform(-_SUBJECT_GAP_JITTER, _SUBJECT_GAP_JITTER))
    amplitude = subj_rng.uniform(*geo.curvature_amplitude)
    subject_curve = _zero_mean_unit_poly(subj_rng, W)

    scan_rng = np.random.default_rng([_STREAM_SCAN, config.seed, subject_seed, index])
    offset = scan_rng.uniform(-_SCAN_OFFSET_JITTER, _SCAN_OFFSET_JITTER)
    thickness = thickness + scan_rng.uniform(-_SCAN_THICKNESS_JITTER, _SCAN_THICKNESS_JITTER)
    scan_curve = scan_rng.uniform(0.0, _SCAN_CURVE_JITTER) * _zero_mean_unit_poly(scan_rng, W)

    ilm = ilm_depth + offset + amplitude * subject_curve + scan_curve
    bm = ilm + thickness
    rpe_baseline = bm - gap

    if float(ilm.min()) < 0:
        raise ValueError(f"layer geometry out of bounds: ILM reaches row {ilm.min():.1f} above row 0")
    if float(bm.max()) > H - 2:
        raise ValueError(
            f"layer geometry out of bounds: BM reaches row {bm.max():.1f}, "
            f"leaving no choroid above row {H - 1}"
        )

    footprint = np.zeros(W, dtype=bool)
    rpe = rpe_baseline.copy()
    if label is ClassLabel.AMD:
        drusen_rng = np.random.default_rng([_STREAM_DRUSEN, config.seed, subject_seed, index])
        lo, hi = config.drusen.count_range
        count = int(drusen_rng.integers(lo, hi + 1))
        cols = np.arange(W, dtype=np.float64)
        bump = np.zeros(W)
        for _ in range(count):
            width_px = drusen_rng.uniform(*config.drusen.width_range_um) / config.lateral_resolution_um
            height_px = drusen_rng.uniform(*config.drusen.height_range_px)
            center = drusen_rng.uniform(width_px / 2.0, W - 1 - width_px / 2.0)
            sigma = width_px / 4.0
            bump += height_px * np.exp(-((cols - center) ** 2) / (2.0 * sigma**2))
            footprint |= np.abs(cols - center) <= width_px / 2.0
        # Drusen lift the RPE toward the ILM; BM stays put.
        rpe = np.maximum(rpe_baseline - bump, ilm + 1.0)

    seg = LayerSegmentation(ilm=ilm, rpe=rpe, bm=bm)
    seg.validate_for(W, H, context="generated segmentation")

    rows = np.arange(H, dtype=np.float64)[:, None]
    ilm_r, rpe_r, bm_r = np.rint(ilm), np.rint(rpe), np.rint(bm)
    img = np.full((H, W), _VITREOUS_INTENSITY)
    img[(rows >= ilm_r) & (rows < rpe_r)] = _RETINA_INTENSITY
    img[(rows >= rpe_r) & (rows <= bm_r)] = _RPE_BAND_INTENSITY
    choroid_mask = rows > bm_r
    img[choroid_mask] = config.choroid_texture.mean_intensity

    choroid_rng = np.random.default_rng([_STREAM_CHOROID, config.seed, subject_seed, index])
    choroid_height = H - 1 - float(bm_r.mean())
    n_blobs = int(round(config.choroid_texture.blob_density * W * max(choroid_height, 0.0)))
    rr_full = np.arange(H, dtype=np.float64)[:, None]
    cc_full = np.arange(W, dtype=np.float64)[None, :]
    for _ in range(n_blobs):
        c0 = choroid_rng.uniform(0, W - 1)
        depth = choroid_rng.uniform(2.0, max(choroid_height, 3.0))
        radius = choroid_rng.uniform(2.0, 5.0)
        r0 = bm_r[int(round(c0))] + depth
        r_lo, r_hi = max(0, int(r0 - radius - 1)), min(H, int(r0 + radius + 2))
        c_lo, c_hi = max(0, int(c0 - radius - 1)), min(W, int(c0 + radius + 2))
        patch = ((rr_full[r_lo:r_hi] - r0) ** 2 + (cc_full[:, c_lo:c_hi] - c0) ** 2) <= radius**2
        region = img[r_lo:r_hi, c_lo:c_hi]
        region[patch & choroid_mask[r_lo:r_hi, c_lo:c_hi]] *= _VESSEL_DARKENING

    if config.shadow_attenuation < 1.0 and footprint.any():
        img[choroid_mask & footprint[None, :]] *= config.shadow_attenuation

    speckle_rng = np.random.default_rng([_STREAM_SPECKLE, config.seed, subject_seed, index])
    img = img * speckle_rng.lognormal(mean=0.0, sigma=config.speckle_sigma, size=(H, W))
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    sid = subject_id if subject_id is not None else f"s{subject_seed}"
    vid = volume_id if volume_id is not None else f"{sid}-v0"
    bscan = BScan(
        pixels=pixels, subject_id=sid, volume_id=vid, index_in_volume=index, label=label
    )
    return GeneratedSample(bscan=bscan, segmentation=seg, drusen_footprint=footprint)


def _segmentation_to_json(seg: LayerSegmentation) -> str:
    payload = {"ilm": seg.ilm.tolist(), "rpe": seg.rpe.tolist(), "bm": seg.bm.tolist()}
    return json.dumps(payload) + "\n"


def _subject_seed(class_index: int, subject_index: int) -> int:
    return class_index * 1_000_000 + subject_index


def generate_dataset(config: SynthConfig, output_dir: str | Path) -> DatasetManifest:
    """Write a labeled synthetic dataset (PNGs + segmentation sidecars + manifest).

    Deterministic in ``config.seed``: identical configs produce byte-identical
    files. Splits are left unassigned; see ``splitting.split_subjects``.
    """
    config.validate()
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    prefixes = {ClassLabel.CONTROL: "ctl", ClassLabel.AMD: "amd"}

    entries = []
    for class_index, label in enumerate(ClassLabel):
        for s in range(config.subjects_per_class):
            sid = f"{prefixes[label]}{s:03d}"
            vid = f"{sid}-v0"
            seed = _subject_seed(class_index, s)
            for i in range(config.bscans_per_subject):
                sample = generate_bscan(config, seed, label, i, subject_id=sid, volume_id=vid)
                scan_rel = f"scans/{sid}_{i:03d}.png"
                seg_rel = f"segs/{sid}_{i:03d}.json"
                try:
                    write_png(output_dir / scan_rel, sample.bscan.pixels)
                    seg_path = output_dir / seg_rel
                    seg_path.parent.mkdir(parents=True, exist_ok=True)
                    atomic_write_text(seg_path, _segmentation_to_json(sample.segmentation))
                except OSError as exc:
                    raise OSError(f"failed writing sample {sid}_{i:03d} under {output_dir}: {exc}") from exc
                entries.append(
                    ManifestEntry(
                        subject_id=sid,
                        label=label,
                        volume_id=vid,
                        scan_path=scan_rel,
                        segmentation_path=seg_rel,
                        index_in_volume=i,
                        split=None,
                    )
                )
    manifest = DatasetManifest(entries=tuple(entries), root=output_dir)
    save_manifest(manifest, output_dir / "manifest.json")
    return manifest


def _load_segmentation(path: Path, context: str) -> LayerSegmentation:
    if not path.exists():
        raise FileNotFoundError(f"{context}: segmentation file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    missing = {"ilm", "rpe", "bm"} - set(data)
    if missing:
        raise ValueError(f"{context}: segmentation missing curves {sorted(missing)}")
    return LayerSegmentation(ilm=data["ilm"], rpe=data["rpe"], bm=data["bm"])


def load_samples(manifest: DatasetManifest) -> list[tuple[BScan, LayerSegmentation]]:
    """Load (B-scan, segmentation) pairs in manifest order, validating invariants."""
    samples = []
    for e in manifest.entries:
        context = f"entry {e.describe()}"
        scan_path = manifest.resolve(e.scan_path)
        if not scan_path.exists():
            raise FileNotFoundError(f"{context}: scan file not found: {scan_path}")
        pixels = read_png(scan_path)
        bscan = BScan(
            pixels=pixels,
            subject_id=e.subject_id,
            volume_id=e.volume_id,
            index_in_volume=e.index_in_volume,
            label=e.label,
        )
        seg = _load_segmentation(manifest.resolve(e.segmentation_path), context)
        seg.validate_for(bscan.width, bscan.height, context=context)
        samples.append((bscan, seg))
    return samples


def load_dataset(manifest_path: str | Path) -> list[tuple[BScan, LayerSegmentation]]:
    """Load a dataset from its manifest file. Order-stable (manifest order)."""
    return load_samples(load_manifest(manifest_path))
