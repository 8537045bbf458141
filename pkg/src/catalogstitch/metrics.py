"""Aspect-ratio error and masked PSNR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DimensionMismatch, EmptyMask, NoObjectFound, NonPositiveRatio
from .raster import BBox, BinaryMask, RasterImage

PSNR_CAP_DB = 99.0
DEFAULT_DIFF_THRESHOLD = 8


@dataclass
class MetricReport:
    ar_error_pct: Optional[float] = None
    occluder_psnr_db: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    # slots for network-based scores merged in by external tooling
    fid: Optional[float] = None
    clip_score: Optional[float] = None
    dino_score: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "ar_error_pct": self.ar_error_pct,
            "occluder_psnr_db": self.occluder_psnr_db,
            "notes": list(self.notes),
            "fid": self.fid,
            "clip_score": self.clip_score,
            "dino_score": self.dino_score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            ar_error_pct=d.get("ar_error_pct"),
            occluder_psnr_db=d.get("occluder_psnr_db"),
            notes=list(d.get("notes", [])),
            fid=d.get("fid"),
            clip_score=d.get("clip_score"),
            dino_score=d.get("dino_score"),
        )


def ar_error(ar_input: float, ar_output: float) -> float:
    """Relative aspect-ratio deviation, in percent."""
    if not (ar_input > 0 and ar_output > 0):
        raise NonPositiveRatio(f"aspect ratios must be positive, got {ar_input}, {ar_output}")
    return abs(ar_output - ar_input) / ar_input * 100.0


def output_object_bbox(
    output: RasterImage,
    reference_bg: RasterImage,
    region: BBox,
    diff_threshold: int = DEFAULT_DIFF_THRESHOLD,
) -> BBox:
    """Tight box of pixels in ``region`` that moved more than ``diff_threshold`` on any channel."""
    if output.size != reference_bg.size:
        raise DimensionMismatch(f"output {output.size} vs reference {reference_bg.size}")
    if region.x1 > output.width or region.y1 > output.height:
        raise ValueError(f"region {region} exceeds image {output.size}")
    a = output.rgb().pixels[region.slices()].astype(np.int16)
    b = reference_bg.rgb().pixels[region.slices()].astype(np.int16)
    changed = np.abs(a - b).max(axis=2) > diff_threshold
    rows = np.flatnonzero(changed.any(axis=1))
    if rows.size == 0:
        raise NoObjectFound(f"no pixel in {region} differs by more than {diff_threshold}")
    cols = np.flatnonzero(changed.any(axis=0))
    return BBox(region.x + int(cols[0]), region.y + int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def masked_psnr(a: RasterImage, b: RasterImage, mask: BinaryMask, cap_db: float = PSNR_CAP_DB) -> float:
    """PSNR over every channel sample of the mask's foreground pixels.

    Returns ``cap_db`` when the region is byte-identical.
    """
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"{a!r} vs {b!r}")
    if mask.size != a.size:
        raise DimensionMismatch(f"mask {mask.size} vs image {a.size}")
    fg = mask.fg
    if not fg.any():
        raise EmptyMask("PSNR mask has no foreground pixel")
    diff = a.pixels[fg].astype(np.int64) - b.pixels[fg].astype(np.int64)
    sse = int(np.sum(diff * diff))
    if sse == 0:
        return cap_db
    mse = sse / diff.size
    return 10.0 * math.log10(255.0 ** 2 / mse)
