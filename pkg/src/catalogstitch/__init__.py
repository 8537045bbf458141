"""Model-agnostic wrappers for product-swap compositing.

Dimension-aware target masks keep the inserted product's aspect ratio;
occluder caching and restoration keep foreground objects pixel-exact.
"""

from .errors import (
    BackendFailure,
    CatalogStitchError,
    ContractViolation,
    DanglingPath,
    DimensionMismatch,
    EmptyMask,
    FormatError,
    IndexMissing,
    NoObjectFound,
    NonPositiveRatio,
    SchemaError,
)
from .raster import (
    BBox,
    BinaryMask,
    RasterImage,
    alpha_paste,
    load_png,
    mask_centroid,
    mask_to_bbox,
    save_png,
)
from .geometry import AspectRatioPolicy, MaskPlan, aspect_ratio, bbox_iou, compute_dimension_aware_mask
from .occlusion import EntityInstance, OccluderCache, OccluderEntry, build_cache, detect_occluders, restore
from .backends import BackendManifest, BackendSpec, run_compositor, run_inpainter, run_segmenter
from .metrics import MetricReport, ar_error, masked_psnr, output_object_bbox
from .dataset import ExampleRecord, load_dataset
from .fixtures import generate_fixtures
from .pipeline import PipelineConfig, RunResult, aggregate, run_batch, run_example

__version__ = "0.1.0"

__all__ = [
    "AspectRatioPolicy", "BBox", "BackendFailure", "BackendManifest", "BackendSpec", "BinaryMask",
    "CatalogStitchError", "ContractViolation", "DanglingPath", "DimensionMismatch", "EmptyMask",
    "EntityInstance", "ExampleRecord", "FormatError", "IndexMissing", "MaskPlan", "MetricReport",
    "NoObjectFound", "NonPositiveRatio", "OccluderCache", "OccluderEntry", "PipelineConfig",
    "RasterImage", "RunResult", "SchemaError", "aggregate", "alpha_paste", "ar_error", "aspect_ratio",
    "bbox_iou", "build_cache", "compute_dimension_aware_mask", "detect_occluders", "generate_fixtures",
    "load_dataset", "load_png", "mask_centroid", "mask_to_bbox", "masked_psnr", "output_object_bbox",
    "restore", "run_batch", "run_compositor", "run_example", "run_inpainter", "run_segmenter", "save_png",
]
