"""Occluder detection, exact-pixel caching and recomposition."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, EmptyMask
from .geometry import bbox_iou
from .raster import BBox, BinaryMask, RasterImage, alpha_paste, mask_to_bbox

log = logging.getLogger(__name__)

DEFAULT_TAU_OCC = 0.01


@dataclass(frozen=True)
class EntityInstance:
    id: str
    mask: BinaryMask
    bbox: BBox

    @classmethod
    def from_mask(cls, id: str, mask: BinaryMask) -> "EntityInstance":
        return cls(id, mask, mask_to_bbox(mask))


def make_entities(masks: Iterable[Tuple[str, BinaryMask]]) -> List[EntityInstance]:
    """Wrap full-frame masks as entities, dropping empty ones."""
    out = []
    for entity_id, mask in masks:
        try:
            out.append(EntityInstance.from_mask(entity_id, mask))
        except EmptyMask:
            log.warning("entity %s has an empty mask; dropped", entity_id)
    return out


@dataclass(frozen=True)
class OccluderEntry:
    id: str
    pixels: RasterImage
    mask: BinaryMask
    coords: BBox
    iou_with_target: float


@dataclass(frozen=True)
class OccluderCache:
    entries: Tuple[OccluderEntry, ...]
    union_mask: BinaryMask

    def __len__(self):
        return len(self.entries)


def detect_occluders(
    entities: Sequence[EntityInstance],
    target_bbox: BBox,
    tau_occ: float = DEFAULT_TAU_OCC,
) -> List[EntityInstance]:
    """Entities whose box IoU with the target box strictly exceeds ``tau_occ``."""
    if not 0 < tau_occ <= 1:
        raise ValueError(f"tau_occ must be in (0, 1], got {tau_occ}")
    return [e for e in entities if bbox_iou(e.bbox, target_bbox) > tau_occ]


def build_cache(
    background: RasterImage,
    occluders: Sequence[EntityInstance],
    target_bbox: BBox = None,
) -> OccluderCache:
    """Copy each occluder's visible pixels verbatim from ``background``.

    Entries are ordered for recomposition: larger boxes first, so smaller
    occluders land on top. Ties keep input order.
    """
    union = np.zeros((background.height, background.width), dtype=bool)
    entries = []
    for occ in occluders:
        if occ.mask.size != background.size:
            raise DimensionMismatch(f"occluder {occ.id} mask {occ.mask.size} vs background {background.size}")
        union |= occ.mask.fg
        iou = bbox_iou(occ.bbox, target_bbox) if target_bbox is not None else float("nan")
        entries.append(
            OccluderEntry(
                id=occ.id,
                pixels=background.crop(occ.bbox),
                mask=occ.mask.crop(occ.bbox),
                coords=occ.bbox,
                iou_with_target=iou,
            )
        )
    entries.sort(key=lambda e: -e.coords.area)
    return OccluderCache(tuple(entries), BinaryMask.from_bool(union))


def restore(composited: RasterImage, cache: OccluderCache) -> RasterImage:
    """Paste every cached occluder back over the generated image."""
    if composited.size != cache.union_mask.size:
        raise DimensionMismatch(f"composited {composited.size} vs cached frame {cache.union_mask.size}")
    out = composited
    for entry in cache.entries:
        out = alpha_paste(out, entry.pixels, entry.mask, entry.coords)
    return out
