"""Subject-level dataset splitting and central B-scan selection."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .types import ClassLabel, DatasetManifest, SplitAssignment

_SPLIT_ORDER = (SplitAssignment.TRAIN, SplitAssignment.VAL, SplitAssignment.TEST)


def largest_remainder_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Apportion n items to the three splits, each count within 1 of n*ratio.

    Leftover items go to the splits with the largest fractional remainder;
    remainder ties are broken by split declaration order (train, val, test).
    """
    quotas = [n * r for r in ratios]
    base = [math.floor(q) for q in quotas]
    leftover = n - sum(base)
    order = sorted(range(3), key=lambda k: (-(quotas[k] - base[k]), k))
    for k in order[:leftover]:
        base[k] += 1
    return tuple(base)  # type: ignore[return-value]


def split_subjects(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetManifest:
    """Assign every subject to train/val/test, stratified by class.

    All B-scans of a subject share one split. Per class, the subject counts
    per split are within +/-1 of the ratio targets. Deterministic in ``seed``.
    """
    if len(ratios) != 3:
        raise ValueError(f"expected 3 split ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios):
        raise ValueError(f"split ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")

    by_class: dict[ClassLabel, list[str]] = {label: [] for label in ClassLabel}
    for sid, label in manifest.subjects.items():
        by_class[label].append(sid)

    n_active = sum(1 for r in ratios if r > 0)
    rng = np.random.default_rng(seed)
    assignment: dict[str, SplitAssignment] = {}
    for label in ClassLabel:
        subjects = sorted(by_class[label])
        if not subjects:
            continue
        if len(subjects) < n_active:
            raise ValueError(
                f"class {label.value} has {len(subjects)} subjects, "
                f"fewer than the {n_active} splits with nonzero ratio"
            )
        order = [subjects[i] for i in rng.permutation(len(subjects))]
        counts = largest_remainder_counts(len(subjects), tuple(ratios))
        pos = 0
        for split, count in zip(_SPLIT_ORDER, counts):
            for sid in order[pos : pos + count]:
                assignment[sid] = split
            pos += count

    entries = tuple(replace(e, split=assignment[e.subject_id]) for e in manifest.entries)
    return DatasetManifest(entries=entries, root=manifest.root)


def select_central_bscans(n: int, keep_fraction: float) -> range:
    """Centered contiguous index window of size round(n * keep_fraction).

    The window always contains at least one index and is clipped to [0, n).
    """
    if n < 1:
        raise ValueError(f"volume must contain at least one B-scan, got {n}")
    if not (0 < keep_fraction <= 1):
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    size = min(n, max(1, round(n * keep_fraction)))
    start = (n - size) // 2
    return range(start, start + size)


def filter_central_bscans(manifest: DatasetManifest, keep_fraction: float) -> DatasetManifest:
    """Keep only the central window of each volume's B-scans."""
    by_volume: dict[str, list[int]] = {}
    for e in manifest.entries:
        by_volume.setdefault(e.volume_id, []).append(e.index_in_volume)
    keep: set[tuple[str, int]] = set()
    for vol, indices in by_volume.items():
        indices.sort()
        window = select_central_bscans(len(indices), keep_fraction)
        keep.update((vol, indices[i]) for i in window)
    entries = tuple(e for e in manifest.entries if (e.volume_id, e.index_in_volume) in keep)
    return DatasetManifest(entries=entries, root=manifest.root)
