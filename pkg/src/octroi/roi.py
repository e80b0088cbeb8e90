"""Region-of-interest machinery: BM flattening, masking, cropping, resizing.

Two extraction methods are supported. Masking zeroes everything outside the
exact ROI band but keeps the full frame, preserving position and shape.
Cropping first flattens the retina (per-column shifts that put Bruch's
membrane on a horizontal reference line) and then cuts a tight full-width
rectangle, normalizing scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .types import BScan, LayerSegmentation


class RoiKind(Enum):
    WHOLE_IMAGE = "img"
    ILM_BM = "ilm-bm"
    RPE_BM = "rpe-bm"
    BM_CHO = "bm-cho"
    RPE_BM_MASK = "rpe-bm-mask"


class RoiMethod(Enum):
    MASKING = "masking"
    CROPPING = "cropping"


_METHOD_FREE_KINDS = (RoiKind.WHOLE_IMAGE, RoiKind.RPE_BM_MASK)


@dataclass(frozen=True)
class RoiRequest:
    """Which region to extract, by which method.

    ``method`` is required for the banded kinds (ilm-bm, rpe-bm, bm-cho) and
    ignored for the whole image and the binary RPE-BM mask. ``target_size``
    is (rows, cols) for the final resize.
    """

    kind: RoiKind
    method: RoiMethod | None = None
    choroid_offset: int = 80
    target_size: tuple[int, int] = (224, 224)
    pad_below: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _METHOD_FREE_KINDS and self.method is None:
            raise ValueError(f"ROI kind {self.kind.value!r} requires a method (masking or cropping)")
        if self.choroid_offset < 1:
            raise ValueError(f"choroid_offset must be at least 1, got {self.choroid_offset}")
        if len(self.target_size) != 2 or min(self.target_size) < 1:
            raise ValueError(f"target_size must be two positive dimensions, got {self.target_size}")

    @property
    def name(self) -> str:
        if self.kind in _METHOD_FREE_KINDS:
            return self.kind.value
        return f"{self.kind.value}-{self.method.value}"


@dataclass(frozen=True)
class FlattenResult:
    """Flattened scan, the per-column integer shifts, and the shifted curves."""

    image: BScan
    shifts: np.ndarray
    segmentation: LayerSegmentation

    @property
    def reference_row(self) -> int:
        return int(np.rint(np.mean(self.segmentation.bm)))


def _shift_columns(pixels: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """out[r, c] = pixels[r - shifts[c], c], zero where the source row is outside."""
    H, W = pixels.shape
    src = np.arange(H)[:, None] - shifts[None, :]
    valid = (src >= 0) & (src < H)
    gathered = pixels[np.clip(src, 0, H - 1), np.arange(W)[None, :]]
    return np.where(valid, gathered, 0).astype(pixels.dtype)


def _flatten_arrays(
    pixels: np.ndarray, seg: LayerSegmentation
) -> tuple[np.ndarray, np.ndarray, LayerSegmentation]:
    height = pixels.shape[0]
    reference = float(np.mean(seg.bm))
    shifts = np.rint(reference - seg.bm).astype(np.int64)
    return _shift_columns(pixels, shifts), shifts, seg.shifted(shifts, height)


def flatten(bscan: BScan, seg: LayerSegmentation) -> FlattenResult:
    """Shift every A-scan so the BM lands on the horizontal mean-BM line.

    Vacated rows are zero-filled; ILM and RPE receive the identical
    per-column shift as the BM.
    """
    seg.validate_for(bscan.width, bscan.height)
    flat, shifts, shifted_seg = _flatten_arrays(bscan.pixels, seg)
    return FlattenResult(image=bscan.with_pixels(flat), shifts=shifts, segmentation=shifted_seg)


def _band_for(kind: RoiKind, seg: LayerSegmentation, choroid_offset: int) -> tuple[np.ndarray, np.ndarray]:
    if kind is RoiKind.ILM_BM:
        return seg.ilm, seg.bm
    if kind is RoiKind.RPE_BM:
        return seg.rpe, seg.bm
    if kind is RoiKind.BM_CHO:
        return seg.bm, seg.bm + (choroid_offset - 1)
    raise ValueError(f"no ROI band for kind {kind.value!r}")


def _band_mask(shape: tuple[int, int], top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    # Row r belongs to the band [a, b] iff round(a) <= r <= round(b).
    rows = np.arange(shape[0])[:, None]
    return (rows >= np.rint(top)[None, :]) & (rows <= np.rint(bottom)[None, :])


def extract_roi(bscan: BScan, seg: LayerSegmentation, request: RoiRequest) -> np.ndarray:
    """Extract the requested region, pre-resize.

    Masked outputs keep the input's full dimensions with zeros outside the
    band; cropped outputs are full-width rectangles of the flattened image.
    The binary RPE-BM mask contains only values {0, 1}.
    """
    seg.validate_for(bscan.width, bscan.height)
    pixels = bscan.pixels
    kind = request.kind

    if kind is RoiKind.WHOLE_IMAGE:
        return pixels.copy()

    if kind is RoiKind.RPE_BM_MASK:
        mask = _band_mask(pixels.shape, seg.rpe, seg.bm)
        return mask.astype(np.uint8)

    if request.method is RoiMethod.MASKING:
        top, bottom = _band_for(kind, seg, request.choroid_offset)
        keep = _band_mask(pixels.shape, top, bottom)
        return np.where(keep, pixels, 0).astype(pixels.dtype)

    # Cropping: flatten first, then cut a full-width rectangle.
    flat, _, fseg = _flatten_arrays(pixels, seg)
    height = pixels.shape[0]
    if kind is RoiKind.ILM_BM:
        top = int(math.floor(fseg.ilm.min()))
        bottom = int(math.ceil(fseg.bm.max()))
    elif kind is RoiKind.RPE_BM:
        top = int(math.floor(fseg.rpe.min()))
        bottom = int(math.ceil(fseg.bm.max()))
    else:  # BM_CHO: fixed offset below the flattened BM reference line
        top = int(np.rint(np.mean(seg.bm)))
        bottom = top + request.choroid_offset - 1

    if bottom > height - 1:
        deficit = bottom - (height - 1)
        if not request.pad_below:
            raise ValueError(
                f"{kind.value} crop extends {deficit} row(s) past the image bottom "
                f"(rows {top}..{bottom} of {height}); regenerate with more room below BM "
                "or set pad_below"
            )
        padded = np.zeros((bottom + 1, flat.shape[1]), dtype=flat.dtype)
        padded[:height] = flat
        flat = padded
    return flat[top : bottom + 1].copy()


def resize(image: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling; output clamped to [0, 255]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty 2-D image, got shape {img.shape}")
    rows_t, cols_t = int(target[0]), int(target[1])
    if rows_t < 1 or cols_t < 1:
        raise ValueError(f"target size must be positive, got {target}")
    H, W = img.shape
    r = np.linspace(0.0, H - 1.0, rows_t)
    c = np.linspace(0.0, W - 1.0, cols_t)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    top = img[np.ix_(r0, c0)] * (1 - fc) + img[np.ix_(r0, c1)] * fc
    bottom = img[np.ix_(r1, c0)] * (1 - fc) + img[np.ix_(r1, c1)] * fc
    out = top * (1 - fr) + bottom * fr
    return np.clip(out, 0.0, 255.0).astype(np.float32)


def extract_and_resize(bscan: BScan, seg: LayerSegmentation, request: RoiRequest) -> np.ndarray:
    """Extract the ROI and resize it to ``request.target_size``.

    The binary RPE-BM mask is rescaled to {0, 255} before interpolation so
    all variants share the 8-bit intensity range.
    """
    roi = extract_roi(bscan, seg, request)
    if request.kind is RoiKind.RPE_BM_MASK:
        roi = roi * np.uint8(255)
    return resize(roi, request.target_size)


def quantize_u8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)


class RoiExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from (BScan, LayerSegmentation) pairs to ROI stacks.

    Parameters mirror :class:`RoiRequest` with string kind/method so the
    estimator round-trips through ``get_params``/``set_params``/``clone``.
    """

    def __init__(
        self,
        kind: str = "img",
        method: str | None = None,
        choroid_offset: int = 80,
        target_size: tuple[int, int] = (224, 224),
        pad_below: bool = False,
        as_uint8: bool = True,
    ):
        self.kind = kind
        self.method = method
        self.choroid_offset = choroid_offset
        self.target_size = target_size
        self.pad_below = pad_below
        self.as_uint8 = as_uint8

    def _request(self) -> RoiRequest:
        return RoiRequest(
            kind=RoiKind(self.kind),
            method=RoiMethod(self.method) if self.method is not None else None,
            choroid_offset=self.choroid_offset,
            target_size=tuple(self.target_size),
            pad_below=self.pad_below,
        )

    def fit(self, X, y=None):
        self._request()  # validates the parameter combination
        self.n_features_in_ = len(X) if hasattr(X, "__len__") else None
        return self

    def transform(self, X) -> np.ndarray:
        request = self._request()
        images = [extract_and_resize(bscan, seg, request) for bscan, seg in X]
        stack = np.stack(images) if images else np.empty((0, *request.target_size), np.float32)
        return quantize_u8(stack) if self.as_uint8 else stack
