"""Shared domain types: B-scans, layer segmentations, dataset manifests."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np


class ClassLabel(Enum):
    """Binary diagnosis label. AMD is the positive class."""

    CONTROL = "Control"
    AMD = "AMD"

    @property
    def as_int(self) -> int:
        return 1 if self is ClassLabel.AMD else 0


class SplitAssignment(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class BScan:
    """One grayscale OCT cross-section.

    ``pixels`` is a (height, width) uint8 array; columns are A-scans and
    rows are axial depth, increasing downward.
    """

    pixels: np.ndarray
    subject_id: str
    volume_id: str
    index_in_volume: int
    label: ClassLabel

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"B-scan pixels must be 2-D, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"B-scan must be at least 1x1, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.issubdtype(px.dtype, np.floating) or np.issubdtype(px.dtype, np.integer):
                lo, hi = float(px.min()), float(px.max())
                if lo < 0 or hi > 255:
                    raise ValueError(f"B-scan intensities must lie in [0, 255], got [{lo}, {hi}]")
                px = np.rint(px).astype(np.uint8)
            else:
                raise ValueError(f"unsupported pixel dtype {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def with_pixels(self, pixels: np.ndarray) -> "BScan":
        return replace(self, pixels=pixels)


@dataclass(frozen=True)
class LayerSegmentation:
    """Per-column row positions of the ILM, RPE and BM boundaries.

    Curves are real-valued and must satisfy 0 <= ilm <= rpe <= bm <= height-1
    at every column of the associated B-scan.
    """

    ilm: np.ndarray
    rpe: np.ndarray
    bm: np.ndarray

    def __post_init__(self) -> None:
        for name in ("ilm", "rpe", "bm"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name} curve must be 1-D, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        if not (len(self.ilm) == len(self.rpe) == len(self.bm)):
            raise ValueError(
                "layer curves must have equal length, got "
                f"ilm={len(self.ilm)}, rpe={len(self.rpe)}, bm={len(self.bm)}"
            )

    @property
    def width(self) -> int:
        return int(len(self.ilm))

    def validate_for(self, width: int, height: int, context: str = "segmentation") -> None:
        """Check the curve invariants against an image of the given size."""
        if self.width != width:
            raise ValueError(f"{context}: curve length {self.width} != image width {width}")
        if np.any(self.ilm < 0):
            raise ValueError(f"{context}: ILM rises above row 0")
        if np.any(self.bm > height - 1):
            raise ValueError(f"{context}: BM extends below row {height - 1}")
        if np.any(self.ilm > self.rpe):
            col = int(np.argmax(self.ilm > self.rpe))
            raise ValueError(f"{context}: ILM below RPE at column {col}")
        if np.any(self.rpe > self.bm):
            col = int(np.argmax(self.rpe > self.bm))
            raise ValueError(f"{context}: RPE below BM at column {col}")

    def shifted(self, shifts: np.ndarray, height: int) -> "LayerSegmentation":
        """Apply a per-column row shift to all three curves, clipped into bounds."""
        shifts = np.asarray(shifts, dtype=np.float64)
        return LayerSegmentation(
            ilm=np.clip(self.ilm + shifts, 0.0, height - 1.0),
            rpe=np.clip(self.rpe + shifts, 0.0, height - 1.0),
            bm=np.clip(self.bm + shifts, 0.0, height - 1.0),
        )


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    label: ClassLabel
    volume_id: str
    scan_path: str
    segmentation_path: str
    index_in_volume: int
    split: SplitAssignment | None = None

    def describe(self) -> str:
        return f"{self.volume_id}[{self.index_in_volume}] ({self.scan_path})"


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered collection of B-scan records plus the directory anchoring their paths."""

    entries: tuple[ManifestEntry, ...]
    root: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        self.validate()

    def validate(self) -> None:
        seen: dict[tuple[str, int], ManifestEntry] = {}
        subject_label: dict[str, ClassLabel] = {}
        subject_split: dict[str, SplitAssignment | None] = {}
        for e in self.entries:
            key = (e.volume_id, e.index_in_volume)
            if key in seen:
                raise ValueError(f"duplicate manifest entry {e.describe()}")
            seen[key] = e
            if e.subject_id in subject_label:
                if subject_label[e.subject_id] is not e.label:
                    raise ValueError(f"subject {e.subject_id} carries conflicting labels")
                if subject_split[e.subject_id] is not e.split:
                    raise ValueError(f"subject {e.subject_id} carries conflicting splits")
            else:
                subject_label[e.subject_id] = e.label
                subject_split[e.subject_id] = e.split

    @property
    def subjects(self) -> dict[str, ClassLabel]:
        return {e.subject_id: e.label for e in self.entries}

    def entries_for_split(self, split: SplitAssignment) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split is split)

    def resolve(self, relative: str) -> Path:
        if self.root is None:
            raise ValueError("manifest has no root directory; load it from a file first")
        return Path(self.root) / relative


def manifest_to_json(manifest: DatasetManifest) -> str:
    records = [
        {
            "subject_id": e.subject_id,
            "label": e.label.value,
            "volume_id": e.volume_id,
            "scan_path": e.scan_path,
            "segmentation_path": e.segmentation_path,
            "index_in_volume": e.index_in_volume,
            "split": e.split.value if e.split is not None else None,
        }
        for e in manifest.entries
    ]
    return json.dumps(records, indent=2) + "\n"


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(path, manifest_to_json(manifest))
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    entries = []
    for i, rec in enumerate(records):
        try:
            split = rec.get("split")
            entries.append(
                ManifestEntry(
                    subject_id=str(rec["subject_id"]),
                    label=ClassLabel(rec["label"]),
                    volume_id=str(rec["volume_id"]),
                    scan_path=str(rec["scan_path"]),
                    segmentation_path=str(rec["segmentation_path"]),
                    index_in_volume=int(rec["index_in_volume"]),
                    split=SplitAssignment(split) if split is not None else None,
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: invalid manifest record {i}: {exc}") from exc
    return DatasetManifest(entries=tuple(entries), root=path.parent)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
