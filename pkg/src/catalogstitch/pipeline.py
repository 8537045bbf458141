"""End-to-end runs: mask planning, occluder caching, compositing, restoration, scoring."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .backends import BackendSpec, compositor_placement, run_compositor, run_inpainter, run_segmenter
from .dataset import ExampleRecord
from .errors import CatalogStitchError, DimensionMismatch, NoObjectFound
from .geometry import (
    AspectRatioPolicy,
    MaskPlan,
    aspect_ratio,
    bbox_plan,
    compute_dimension_aware_mask,
    freeform_plan,
)
from .metrics import DEFAULT_DIFF_THRESHOLD, MetricReport, ar_error, masked_psnr, output_object_bbox
from .occlusion import OccluderCache, build_cache, detect_occluders, restore
from .raster import BinaryMask, RasterImage, load_image, load_mask, mask_to_bbox, save_png

log = logging.getLogger(__name__)

MASK_MODES = ("freeform", "bbox", "dim_aware")
WRAPPER_STAGES = ("mask", "detect", "cache", "restore")
STAGE_ORDER = ("load", "mask", "segment", "detect", "cache", "inpaint", "composite", "restore", "metrics", "write")


def default_backends() -> Dict[str, BackendSpec]:
    return {
        "segment": BackendSpec.mock("oracle_segmenter"),
        "inpaint": BackendSpec.mock("nearest_fill_inpainter"),
        "composite": BackendSpec.mock("stretch_fill_compositor"),
    }


@dataclass
class PipelineConfig:
    """Run settings.

    ``detect_against`` picks the box occluders are tested against: the
    planned (possibly expanded) mask, or the original target mask.
    ``record_timings=False`` leaves ``timings_ms`` empty so that repeated
    runs produce byte-identical ``results.json`` files.
    """

    tau: float = 0.06
    tau_occ: float = 0.01
    mask_mode: str = "dim_aware"
    restore_occluders: bool = True
    backends: Dict[str, BackendSpec] = field(default_factory=default_backends)
    output_dir: Path = Path("catalogstitch-out")
    parallelism: int = 1
    detect_against: str = "adapted"
    record_timings: bool = True
    diff_threshold: int = DEFAULT_DIFF_THRESHOLD

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        merged = default_backends()
        merged.update(self.backends or {})
        self.backends = merged

    def validate(self) -> None:
        for name in ("tau", "tau_occ"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.detect_against not in ("adapted", "original"):
            raise ValueError(f"detect_against must be 'adapted' or 'original', got {self.detect_against!r}")
        if int(self.parallelism) < 1:
            raise ValueError("parallelism must be a positive integer")

    def label(self) -> str:
        comp = self.backends["composite"].describe()
        parts = [comp, self.mask_mode]
        if self.restore_occluders:
            parts.append("restore")
        return " + ".join(parts)

    def to_dict(self) -> dict:
        # output_dir is left out on purpose: two runs into different folders must serialize identically
        return {
            "tau": self.tau,
            "tau_occ": self.tau_occ,
            "mask_mode": self.mask_mode,
            "restore_occluders": self.restore_occluders,
            "detect_against": self.detect_against,
            "diff_threshold": self.diff_threshold,
            "parallelism": self.parallelism,
            "backends": {stage: spec.describe() for stage, spec in sorted(self.backends.items())},
        }


@dataclass
class RunResult:
    example_id: str
    category: str
    ok: bool
    artifacts: Dict[str, str] = field(default_factory=dict)
    metrics: MetricReport = field(default_factory=MetricReport)
    timings_ms: Dict[str, float] = field(default_factory=dict)
    flags: Dict[str, object] = field(default_factory=dict)
    error: Optional[str] = None
    placement: Optional[List[int]] = None

    @property
    def wrapper_ms(self) -> Optional[float]:
        if not self.timings_ms:
            return None
        return sum(self.timings_ms.get(s, 0.0) for s in WRAPPER_STAGES)

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "category": self.category,
            "ok": self.ok,
            "error": self.error,
            "artifacts": dict(self.artifacts),
            "metrics": self.metrics.to_dict(),
            "timings_ms": dict(self.timings_ms),
            "flags": dict(self.flags),
            "placement": self.placement,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            example_id=d["example_id"],
            category=d["category"],
            ok=bool(d["ok"]),
            error=d.get("error"),
            artifacts=dict(d.get("artifacts", {})),
            metrics=MetricReport.from_dict(d.get("metrics", {})),
            timings_ms=dict(d.get("timings_ms", {})),
            flags=dict(d.get("flags", {})),
            placement=d.get("placement"),
        )


class ExampleFailed(CatalogStitchError):
    def __init__(self, example_id: str, cause: BaseException):
        super().__init__(f"{example_id}: {type(cause).__name__}: {cause}")
        self.example_id = example_id
        self.cause = cause


class _StageClock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.ms: Dict[str, float] = {}
        self.order: List[str] = []

    @contextmanager
    def __call__(self, stage: str):
        self.order.append(stage)
        start = time.perf_counter()
        try:
            yield
        finally:
            if self.enabled:
                self.ms[stage] = self.ms.get(stage, 0.0) + (time.perf_counter() - start) * 1000.0


def plan_mask(mode: str, target_mask: BinaryMask, product_mask: BinaryMask, policy: AspectRatioPolicy) -> MaskPlan:
    if mode == "freeform":
        return freeform_plan(target_mask)
    if mode == "bbox":
        return bbox_plan(target_mask)
    if mode == "dim_aware":
        return compute_dimension_aware_mask(target_mask, product_mask, target_mask.width, target_mask.height, policy)
    raise ValueError(f"unknown mask mode {mode!r}")


def mask_overlay(background: RasterImage, mask: BinaryMask) -> RasterImage:
    """Background with the planned mask tinted red at half strength."""
    out = background.rgb().pixels.astype(np.uint16)
    fg = mask.fg
    tint = np.array([255, 0, 0], dtype=np.uint16)
    out[fg] = (out[fg] + tint + 1) // 2
    return RasterImage(out.astype(np.uint8))


def _segmenter_for(rec: ExampleRecord, spec: BackendSpec) -> BackendSpec:
    """Point oracle segmenters at the record's entity masks.

    External commands only get a scalar ``entity_dir`` hint, and only when
    all entity masks share one folder.
    """
    if "entity_paths" in spec.params or spec.params.get("entity_dir"):
        return spec
    if spec.kind == "builtin_mock":
        return spec.with_params(entity_paths=[str(p) for p in rec.segmentable_masks])
    parents = {p.parent for p in rec.segmentable_masks}
    if len(parents) == 1:
        return spec.with_params(entity_dir=str(parents.pop()))
    return spec


def _union(masks: Sequence[BinaryMask], size) -> Optional[BinaryMask]:
    if not masks:
        return None
    fg = np.zeros((size[1], size[0]), dtype=bool)
    for m in masks:
        fg |= m.fg
    return BinaryMask.from_bool(fg)


def run_example(rec: ExampleRecord, cfg: PipelineConfig) -> RunResult:
    """Run one example through every stage and write its artifacts.

    Raises ``ExampleFailed`` carrying the example id and the original error.
    """
    try:
        return _run_example(rec, cfg)
    except (CatalogStitchError, OSError, ValueError) as exc:
        if isinstance(exc, ExampleFailed):
            raise
        raise ExampleFailed(rec.id, exc) from exc


def _run_example(rec: ExampleRecord, cfg: PipelineConfig) -> RunResult:
    clock = _StageClock(cfg.record_timings)
    backends = cfg.backends
    notes: List[str] = []

    with clock("load"):
        background = load_image(rec.background).rgb()
        product = load_image(rec.product)
        product_mask = load_mask(rec.product_mask)
        target_mask = load_mask(rec.target_mask)
        if target_mask.size != background.size:
            raise DimensionMismatch(f"target mask {target_mask.size} vs background {background.size}")
        if product_mask.size != product.size:
            raise DimensionMismatch(f"product mask {product_mask.size} vs product {product.size}")

    with clock("mask"):
        plan = plan_mask(cfg.mask_mode, target_mask, product_mask, AspectRatioPolicy(cfg.tau))

    cache: Optional[OccluderCache] = None
    inpainted = None
    n_entities = 0
    if cfg.restore_occluders:
        with clock("segment"):
            entities = run_segmenter(background, _segmenter_for(rec, backends["segment"]))
            n_entities = len(entities)
        with clock("detect"):
            against = plan.bbox if cfg.detect_against == "adapted" else mask_to_bbox(target_mask)
            occluders = detect_occluders(entities, against, cfg.tau_occ)
        with clock("cache"):
            cache = build_cache(background, occluders, against)
        with clock("inpaint"):
            if cache.entries:
                inpainted = run_inpainter(background, cache.union_mask, backends["inpaint"])
            else:
                inpainted = background

    comp_input = inpainted if inpainted is not None else background
    with clock("composite"):
        composited = run_compositor(comp_input, product, product_mask, plan.mask, backends["composite"])

    with clock("restore"):
        final = restore(composited, cache) if cache is not None else composited

    metrics = MetricReport(notes=notes)
    with clock("metrics"):
        if plan.clipped:
            notes.append("clipped mask")
        if plan.shifted:
            notes.append("mask shifted at image border")
        if rec.category == "dimension":
            ar_in = aspect_ratio(mask_to_bbox(product_mask))
            try:
                obj = output_object_bbox(composited, comp_input, plan.bbox, cfg.diff_threshold)
                metrics.ar_error_pct = ar_error(ar_in, aspect_ratio(obj))
            except NoObjectFound:
                notes.append("no generated object found")
        else:
            gt = _union([load_mask(p) for p in rec.occluder_masks], background.size)
            if gt is None or gt.is_empty():
                notes.append("no occluders")
            else:
                metrics.occluder_psnr_db = masked_psnr(final, background, gt)

    placement = None
    comp_spec = backends["composite"]
    if comp_spec.kind == "builtin_mock":
        placement = compositor_placement(product_mask, plan.mask, comp_spec.mock_variant).to_list()

    with clock("write"):
        ex_dir = cfg.output_dir / rec.id
        ex_dir.mkdir(parents=True, exist_ok=True)
        images = {
            "background": background,
            "product": product,
            "adapted_mask": plan.mask,
            "mask_overlay": mask_overlay(background, plan.mask),
            "composited": composited,
            "final": final,
        }
        if inpainted is not None:
            images["inpainted_bg"] = inpainted
        artifacts = {}
        for role in sorted(images):
            save_png(images[role], ex_dir / f"{role}.png")
            artifacts[role] = f"{rec.id}/{role}.png"
        if cfg.restore_occluders:
            artifacts["before_restore"] = artifacts["composited"]

    flags = {
        "adapted": plan.adapted,
        "clipped": plan.clipped,
        "shifted": plan.shifted,
        "n_occluders": len(cache.entries) if cache is not None else 0,
        "n_entities": n_entities,
        "mask_bbox": plan.bbox.to_list(),
        "stage_order": [s for s in clock.order if s not in ("load", "metrics", "write")],
    }
    return RunResult(
        example_id=rec.id,
        category=rec.category,
        ok=True,
        artifacts=artifacts,
        metrics=metrics,
        timings_ms={k: round(v, 3) for k, v in clock.ms.items()},
        flags=flags,
        placement=placement,
    )


def _safe_run(rec: ExampleRecord, cfg: PipelineConfig) -> RunResult:
    try:
        return run_example(rec, cfg)
    except ExampleFailed as exc:
        log.error("example failed: %s", exc)
        return RunResult(example_id=rec.id, category=rec.category, ok=False, error=str(exc))


def run_batch(records: Sequence[ExampleRecord], cfg: PipelineConfig) -> List[RunResult]:
    """Run every record; failures are recorded, never raised. Output keeps input order."""
    cfg.validate()
    records = list(records)
    if not records:
        return []
    jobs = min(int(cfg.parallelism), len(records))
    if jobs == 1:
        return [_safe_run(r, cfg) for r in records]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda r: _safe_run(r, cfg), records))


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def aggregate(results: Sequence[RunResult]) -> dict:
    """Batch means over successful examples."""
    ok = [r for r in results if r.ok]
    return {
        "n_examples": len(results),
        "n_ok": len(ok),
        "n_failed": len(results) - len(ok),
        "ar_error_pct_mean": _mean(r.metrics.ar_error_pct for r in ok),
        "n_ar_error": sum(1 for r in ok if r.metrics.ar_error_pct is not None),
        "occluder_psnr_db_mean": _mean(r.metrics.occluder_psnr_db for r in ok),
        "n_occluder_psnr": sum(1 for r in ok if r.metrics.occluder_psnr_db is not None),
        "wrapper_ms_mean": _mean(r.wrapper_ms for r in ok),
    }
