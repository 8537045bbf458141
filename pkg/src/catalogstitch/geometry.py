"""Dimension-aware target masks and box overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DimensionMismatch
from .raster import BBox, BinaryMask, mask_centroid_exact, mask_to_bbox

DEFAULT_TAU = 0.06


@dataclass(frozen=True)
class AspectRatioPolicy:
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def tau_exact(self) -> Fraction:
        # compare against the decimal the user wrote, not its binary approximation
        return Fraction(repr(float(self.tau)))


@dataclass(frozen=True)
class MaskPlan:
    """Target mask handed to the compositor.

    ``ideal_w``/``ideal_h`` are the continuous extents before rounding and
    clipping. ``shifted`` records that the box origin was pushed to 0 on some
    axis, which moves the box off the original centroid without changing its size.
    """

    mask: BinaryMask
    bbox: BBox
    adapted: bool
    clipped: bool
    ideal_w: float
    ideal_h: float
    shifted: bool = False


def aspect_ratio(b: BBox) -> float:
    return b.w / b.h


def _aspect_exact(b: BBox) -> Fraction:
    return Fraction(b.w, b.h)


def _round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def compute_dimension_aware_mask(
    target_mask: BinaryMask,
    product_mask: BinaryMask,
    image_w: int,
    image_h: int,
    policy: AspectRatioPolicy = AspectRatioPolicy(),
) -> MaskPlan:
    """Expand the target region so its aspect ratio matches the product's.

    The box keeps the target height and widens, unless that would make it
    narrower than the target, in which case it keeps the width and grows in
    height. It is centered on the target mask's centroid (origin floored at
    0), snapped to integers with round-half-up origin and ceiling extents, and
    clipped to the image. All arithmetic is exact rational.
    """
    if target_mask.size != (image_w, image_h):
        raise DimensionMismatch(f"target mask {target_mask.size} vs image {(image_w, image_h)}")
    target_box = mask_to_bbox(target_mask)
    product_box = mask_to_bbox(product_mask)
    ar_t = _aspect_exact(target_box)
    ar_p = _aspect_exact(product_box)

    if abs(ar_t - ar_p) < policy.tau_exact:
        return MaskPlan(
            mask=target_mask,
            bbox=target_box,
            adapted=False,
            clipped=False,
            ideal_w=float(target_box.w),
            ideal_h=float(target_box.h),
        )

    h_star = Fraction(target_box.h)
    w_star = h_star * ar_p
    if w_star < target_box.w:
        w_star = Fraction(target_box.w)
        h_star = w_star / ar_p

    c_x, c_y = mask_centroid_exact(target_mask)
    x_raw = c_x - w_star / 2
    y_raw = c_y - h_star / 2
    x_star = max(Fraction(0), x_raw)
    y_star = max(Fraction(0), y_raw)

    x = _round_half_up(x_star)
    y = _round_half_up(y_star)
    w = math.ceil(w_star)
    h = math.ceil(h_star)
    w_clip = min(x + w, image_w) - x
    h_clip = min(y + h, image_h) - y
    box = BBox(x, y, w_clip, h_clip)

    return MaskPlan(
        mask=BinaryMask.rect(image_w, image_h, box),
        bbox=box,
        adapted=True,
        clipped=(w_clip, h_clip) != (w, h),
        ideal_w=float(w_star),
        ideal_h=float(h_star),
        shifted=x_raw < 0 or y_raw < 0,
    )


def bbox_plan(target_mask: BinaryMask) -> MaskPlan:
    """Solid rectangle over the tight box of ``target_mask``."""
    box = mask_to_bbox(target_mask)
    return MaskPlan(
        mask=BinaryMask.rect(target_mask.width, target_mask.height, box),
        bbox=box,
        adapted=False,
        clipped=False,
        ideal_w=float(box.w),
        ideal_h=float(box.h),
    )


def freeform_plan(target_mask: BinaryMask) -> MaskPlan:
    box = mask_to_bbox(target_mask)
    return MaskPlan(target_mask, box, False, False, float(box.w), float(box.h))


def bbox_iou(a: BBox, b: BBox) -> float:
    inter = a.intersection(b)
    if inter is None:
        return 0.0
    union = a.area + b.area - inter.area
    return inter.area / union
