"""Deterministic synthetic benchmark scenes.

Two scene families mirror the benchmark split:

* ``dimension`` scenes: a flat-shaded product whose aspect ratio differs
  from the target region by a controlled amount, the differences spread
  evenly over [0.1, 3.0]. The target mask is an irregular blob whose tight
  box is the designed target rectangle, and the scene leaves room for the
  expanded box so it never touches the image border.
* ``occlusion`` scenes: the target region is overlapped by one or two
  textured foreground shapes; some scenes also carry a distant distractor
  entity that must not be flagged.

Every example gets a ``meta.json`` sidecar with the design values.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .dataset import ExampleRecord, write_index
from .geometry import AspectRatioPolicy, bbox_iou, compute_dimension_aware_mask
from .raster import BBox, BinaryMask, RasterImage, mask_to_bbox, save_png

PRODUCT_COLORS = [(220, 30, 30), (30, 60, 210), (20, 170, 60), (240, 200, 20), (150, 30, 180), (240, 120, 10)]
OCCLUDER_COLORS = [(34, 110, 45), (205, 200, 185), (125, 80, 40), (50, 140, 160), (180, 60, 90)]
OLD_PRODUCT_COLOR = (70, 50, 40)
PRODUCT_CANVAS = (245, 245, 245)

MIN_DELTA, MAX_DELTA = 0.1, 3.0
MIN_AR, MAX_AR = 0.25, 4.0
MAX_ATTEMPTS = 200


def _grid(h: int, w: int):
    """Pixel-center coordinates as broadcastable row/column vectors."""
    xs = np.arange(w, dtype=np.float64)[None, :] + 0.5
    ys = np.arange(h, dtype=np.float64)[:, None] + 0.5
    return xs, ys


def textured_background(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    """Mid-gray wall/floor with horizontal banding and grain, samples in [85, 165].

    The grain is a tiled 64 px patch and the banding varies by row only, so
    rows repeat horizontally and the PNGs stay small and quick to encode.
    """
    _, ys = _grid(h, w)
    horizon = rng.uniform(0.55, 0.75) * h
    wall = rng.uniform(118, 138) + rng.uniform(-6, 6, size=3)
    floor = rng.uniform(100, 120) + rng.uniform(-6, 6, size=3)
    base = np.where((ys < horizon)[:, :, None], wall, floor)
    freq, phase = rng.uniform(1.0, 5.0), rng.uniform(0, 2 * math.pi)
    band = 9.0 * np.sin(2 * math.pi * freq * ys / h + phase)
    tile = rng.integers(-5, 6, size=(64, 64, 3))
    grain = np.tile(tile, (h // 64 + 1, w // 64 + 1, 1))[:h, :w]
    img = np.rint(base + band[:, :, None]) + grain
    return np.clip(img, 85, 165).astype(np.uint8)


def ellipse_fg(w: int, h: int, box: BBox) -> np.ndarray:
    xs, ys = _grid(box.h, box.w)
    fg = np.zeros((h, w), dtype=bool)
    fg[box.slices()] = ((xs - box.w / 2.0) / (box.w / 2.0)) ** 2 + ((ys - box.h / 2.0) / (box.h / 2.0)) ** 2 <= 1.0
    return fg


def rect_fg(w: int, h: int, box: BBox) -> np.ndarray:
    fg = np.zeros((h, w), dtype=bool)
    fg[box.slices()] = True
    return fg


def freeform_blob(rng: np.random.Generator, w: int, h: int, box: BBox) -> np.ndarray:
    """Irregular blob whose tight bounding box is exactly ``box``."""
    xs, ys = _grid(box.h, box.w)
    dx, dy = (xs - box.w / 2.0) / (box.w / 2.0), (ys - box.h / 2.0) / (box.h / 2.0)
    theta = np.arctan2(dy, dx)
    radius = np.ones_like(theta)
    for k in (2, 3, 5):
        radius += rng.uniform(0.02, 0.07) * np.sin(k * theta + rng.uniform(0, 2 * math.pi))
    fg = np.zeros((h, w), dtype=bool)
    fg[box.slices()] = np.abs(dx) ** 3 + np.abs(dy) ** 3 <= radius ** 3
    # thin bars through the center pin the blob to all four box edges
    bar_h, bar_w = max(2, box.h // 10), max(2, box.w // 10)
    my, mx = box.y + (box.h - bar_h) // 2, box.x + (box.w - bar_w) // 2
    fg[my:my + bar_h, box.x:box.x1] = True
    fg[box.y:box.y1, mx:mx + bar_w] = True
    return fg


def make_product(rng: np.random.Generator, pw: int, ph: int) -> Tuple[np.ndarray, np.ndarray, str]:
    """Product photo on a light canvas plus its mask; shape is a rectangle or an ellipse."""
    pad = int(rng.integers(6, 20))
    cw, ch = pw + 2 * pad, ph + 2 * pad
    box = BBox(pad, pad, pw, ph)
    shape = "ellipse" if rng.random() < 0.5 else "rectangle"
    fg = ellipse_fg(cw, ch, box) if shape == "ellipse" else rect_fg(cw, ch, box)
    color = np.array(PRODUCT_COLORS[int(rng.integers(len(PRODUCT_COLORS)))], dtype=np.float64)
    _, ys = _grid(ch, cw)
    shade = -12.0 + 24.0 * (ys - pad) / max(ph, 1)
    body = np.broadcast_to(np.clip(color[None, None, :] - shade[:, :, None], 0, 255), (ch, cw, 3))
    img = np.empty((ch, cw, 3), dtype=np.float64)
    img[:] = PRODUCT_CANVAS
    img[fg] = body[fg]
    return np.rint(img).astype(np.uint8), fg, shape


def _paint(img: np.ndarray, fg: np.ndarray, color, rng: np.random.Generator, texture: int = 0) -> None:
    n = int(np.count_nonzero(fg))
    vals = np.empty((n, 3), dtype=np.int16)
    vals[:] = color
    if texture:
        vals += rng.integers(-texture, texture + 1, size=n, dtype=np.int16)[:, None]
    img[fg] = np.clip(vals, 0, 255).astype(np.uint8)


def _choose_ratios(rng: np.random.Generator, delta: float) -> Tuple[float, float]:
    lo = rng.uniform(MIN_AR, MAX_AR - delta)
    hi = lo + delta
    return (lo, hi) if rng.random() < 0.5 else (hi, lo)


def _target_for(ar_t: float, ar_p: float, long_side: float) -> Tuple[int, int, float, float]:
    """Target extents and the expanded extents they imply."""
    if ar_p >= 1:
        w_star, h_star = long_side, long_side / ar_p
    else:
        w_star, h_star = long_side * ar_p, long_side
    if ar_p >= ar_t:
        h_t = h_star
        w_t = h_t * ar_t
    else:
        w_t = w_star
        h_t = w_t / ar_t
    return max(1, int(round(w_t))), max(1, int(round(h_t))), w_star, h_star


def _product_extent(ar: float, long_side: int) -> Tuple[int, int]:
    if ar >= 1:
        return long_side, max(8, int(round(long_side / ar)))
    return max(8, int(round(long_side * ar))), long_side


def _write_common(ex_dir: Path, background, product, product_fg, target_fg) -> dict:
    ex_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "background": ex_dir / "background.png",
        "product": ex_dir / "product.png",
        "product_mask": ex_dir / "product_mask.png",
        "target_mask": ex_dir / "target_mask.png",
    }
    save_png(RasterImage(background), paths["background"])
    save_png(RasterImage(product), paths["product"])
    save_png(BinaryMask.from_bool(product_fg), paths["product_mask"])
    save_png(BinaryMask.from_bool(target_fg), paths["target_mask"])
    return paths


def _write_meta(path: Path, meta: dict) -> Path:
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _dimension_scene(root: Path, seed: int, index: int, delta: float, size: int) -> ExampleRecord:
    rng = np.random.default_rng([seed, 0, index])
    w = h = size
    margin = int(0.04 * size) + 2
    for _ in range(MAX_ATTEMPTS):
        ar_t, ar_p = _choose_ratios(rng, delta)
        long_side = rng.uniform(0.6, 0.8) * size
        w_t, h_t, w_star, h_star = _target_for(ar_t, ar_p, long_side)
        if min(w_t, h_t) < 16:
            continue
        cx = rng.uniform(w_star / 2 + margin, w - w_star / 2 - margin)
        cy = rng.uniform(h_star / 2 + margin, h - h_star / 2 - margin)
        target = BBox(int(round(cx - w_t / 2)), int(round(cy - h_t / 2)), w_t, h_t)
        if target.x1 > w or target.y1 > h:
            continue
        product, product_fg, shape = make_product(rng, *_product_extent(ar_p, 150))
        blob = freeform_blob(rng, w, h, target)
        plan = compute_dimension_aware_mask(
            BinaryMask.from_bool(blob), BinaryMask.from_bool(product_fg), w, h, AspectRatioPolicy()
        )
        if plan.adapted and not plan.clipped and not plan.shifted:
            break
    else:
        raise RuntimeError(f"could not lay out dimension scene {index}")

    background = textured_background(rng, w, h)
    inset = BBox(target.x + target.w // 10, target.y + target.h // 10, max(1, target.w - 2 * (target.w // 10)), max(1, target.h - 2 * (target.h // 10)))
    _paint(background, rect_fg(w, h, inset), OLD_PRODUCT_COLOR, rng)

    ex_id = f"dim_{index:03d}"
    ex_dir = root / ex_id
    paths = _write_common(ex_dir, background, product, product_fg, blob)
    product_box = mask_to_bbox(BinaryMask.from_bool(product_fg))
    meta = {
        "id": ex_id,
        "category": "dimension",
        "image_size": [w, h],
        "target_bbox": target.to_list(),
        "product_bbox": product_box.to_list(),
        "product_shape": shape,
        "ar_target": target.w / target.h,
        "ar_product": product_box.w / product_box.h,
        "ar_delta_design": delta,
        "design_ideal_wh": [w_star, h_star],
        "design_ar_target": ar_t,
        "design_ar_product": ar_p,
    }
    meta_path = _write_meta(ex_dir / "meta.json", meta)
    return ExampleRecord(id=ex_id, category="dimension", meta=meta_path, **paths)


def _place_occluder(rng: np.random.Generator, target: BBox, w: int, h: int) -> BBox:
    ow = max(6, int(target.w * rng.uniform(0.3, 0.45)))
    oh = max(6, int(target.h * rng.uniform(0.35, 0.55)))
    cx = target.x + target.w * rng.uniform(0.2, 0.8)
    cy = target.y + target.h * rng.uniform(0.65, 0.95)
    x = int(np.clip(round(cx - ow / 2), 0, w - ow))
    y = int(np.clip(round(cy - oh / 2), 0, h - oh))
    return BBox(x, y, ow, oh)


def _occlusion_scene(root: Path, seed: int, index: int, size: int) -> ExampleRecord:
    rng = np.random.default_rng([seed, 1, index])
    w = h = size
    n_occ = 1 + index % 2
    margin = int(0.04 * size) + 2
    for _ in range(MAX_ATTEMPTS):
        delta = rng.uniform(0.0, 0.8)
        ar_t, ar_p = _choose_ratios(rng, delta) if delta > 0 else (1.0, 1.0)
        ar_t, ar_p = float(np.clip(ar_t, 0.4, 2.5)), float(np.clip(ar_p, 0.4, 2.5))
        long_side = rng.uniform(0.45, 0.65) * size
        w_t, h_t, w_star, h_star = _target_for(ar_t, ar_p, long_side)
        w_span, h_span = max(w_star, w_t), max(h_star, h_t)
        cx = rng.uniform(w_span / 2 + margin, w - w_span / 2 - margin)
        cy = rng.uniform(h_span / 2 + margin, h - h_span / 2 - margin)
        target = BBox(int(round(cx - w_t / 2)), int(round(cy - h_t / 2)), w_t, h_t)
        if target.x1 > w or target.y1 > h:
            continue
        product, product_fg, shape = make_product(rng, *_product_extent(ar_p, 140))
        blob = freeform_blob(rng, w, h, target)
        plan = compute_dimension_aware_mask(
            BinaryMask.from_bool(blob), BinaryMask.from_bool(product_fg), w, h, AspectRatioPolicy()
        )
        occ_boxes = [_place_occluder(rng, target, w, h) for _ in range(n_occ)]
        if all(bbox_iou(b, target) > 0.02 and bbox_iou(b, plan.bbox) > 0.02 for b in occ_boxes):
            break
    else:
        raise RuntimeError(f"could not lay out occlusion scene {index}")

    background = textured_background(rng, w, h)
    inset = BBox(target.x + target.w // 10, target.y + target.h // 10, max(1, target.w - 2 * (target.w // 10)), max(1, target.h - 2 * (target.h // 10)))
    _paint(background, rect_fg(w, h, inset), OLD_PRODUCT_COLOR, rng)

    occ_fgs = []
    for k, box in enumerate(occ_boxes):
        fg = ellipse_fg(w, h, box) if (index + k) % 2 == 0 else rect_fg(w, h, box)
        color = OCCLUDER_COLORS[(index + 2 * k) % len(OCCLUDER_COLORS)]
        _paint(background, fg, color, rng, texture=12)
        occ_fgs.append(fg)

    distractors = []
    if index % 3 == 0:
        side = max(8, size // 10)
        for corner in (BBox(4, 4, side, side), BBox(w - side - 4, 4, side, side)):
            if corner.intersection(plan.bbox) is None and corner.intersection(target) is None:
                fg = rect_fg(w, h, corner)
                _paint(background, fg, (90, 90, 200), rng, texture=6)
                distractors.append((corner, fg))
                break

    ex_id = f"occ_{index:03d}"
    ex_dir = root / ex_id
    paths = _write_common(ex_dir, background, product, product_fg, blob)
    (ex_dir / "occluders").mkdir(exist_ok=True)
    occ_paths = []
    for k, fg in enumerate(occ_fgs):
        p = ex_dir / "occluders" / f"occluder_{k}.png"
        save_png(BinaryMask.from_bool(fg), p)
        occ_paths.append(p)
    entity_paths = list(occ_paths)
    for k, (_, fg) in enumerate(distractors):
        p = ex_dir / "occluders" / f"distractor_{k}.png"
        save_png(BinaryMask.from_bool(fg), p)
        entity_paths.append(p)

    product_box = mask_to_bbox(BinaryMask.from_bool(product_fg))
    meta = {
        "id": ex_id,
        "category": "occlusion",
        "image_size": [w, h],
        "target_bbox": target.to_list(),
        "product_bbox": product_box.to_list(),
        "product_shape": shape,
        "ar_target": target.w / target.h,
        "ar_product": product_box.w / product_box.h,
        "occluder_bboxes": [b.to_list() for b in occ_boxes],
        "distractor_bboxes": [b.to_list() for b, _ in distractors],
    }
    meta_path = _write_meta(ex_dir / "meta.json", meta)
    return ExampleRecord(
        id=ex_id,
        category="occlusion",
        occluder_masks=tuple(occ_paths),
        entity_masks=tuple(entity_paths) if distractors else None,
        meta=meta_path,
        **paths,
    )


def generate_fixtures(
    root,
    seed: int = 7,
    n_dimension: int = 35,
    n_occlusion: int = 23,
    size: int = 512,
) -> List[ExampleRecord]:
    """Write a full synthetic dataset (scenes + ``index.json``) under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if size < 128:
        raise ValueError("fixture images must be at least 128 px")
    records = []
    for i in range(n_dimension):
        delta = MIN_DELTA if n_dimension == 1 else MIN_DELTA + (MAX_DELTA - MIN_DELTA) * i / (n_dimension - 1)
        records.append(_dimension_scene(root, seed, i, delta, size))
    for i in range(n_occlusion):
        records.append(_occlusion_scene(root, seed, i, size))
    write_index(records, root)
    return sorted(records, key=lambda r: r.id)
