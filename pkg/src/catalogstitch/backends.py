"""Segmenter / inpainter / compositor backends.

A backend is either a built-in deterministic mock or an external command.
External commands talk through files: the pipeline writes the stage inputs
as PNGs plus a ``manifest.json`` into a fresh working directory, runs
``<argv...> <manifest-path>``, and reads back the declared outputs. The
directory is removed on success and kept on failure.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import BackendFailure, CatalogStitchError, ContractViolation, DimensionMismatch
from .occlusion import EntityInstance, make_entities
from .raster import (
    BBox,
    BinaryMask,
    RasterImage,
    alpha_paste,
    load_image,
    load_mask,
    mask_to_bbox,
    resize_nearest,
    save_png,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
STAGES = ("segment", "inpaint", "composite")
REQUIRED_INPUTS = {
    "segment": ("background",),
    "inpaint": ("background", "mask"),
    "composite": ("background", "product", "product_mask", "target_mask"),
}
STAGE_OUTPUTS = {
    "segment": {"entities": "entities"},
    "inpaint": {"image": "inpainted.png"},
    "composite": {"image": "composited.png"},
}
MOCK_VARIANTS = {
    "oracle_segmenter": "segment",
    "nearest_fill_inpainter": "inpaint",
    "fit_inside_compositor": "composite",
    "stretch_fill_compositor": "composite",
}


# ------------------------------------------------------------------ manifest


@dataclass
class BackendManifest:
    stage: str
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    params: Dict[str, object] = field(default_factory=dict)

    def validate(self, root: Optional[Path] = None) -> None:
        if self.stage not in STAGES:
            raise ContractViolation(f"unknown stage {self.stage!r}")
        missing = [r for r in REQUIRED_INPUTS[self.stage] if r not in self.inputs]
        if missing:
            raise ContractViolation(f"{self.stage} manifest missing input roles {missing}")
        for key, value in self.params.items():
            if not isinstance(value, (str, int, float, bool)) and value is not None:
                raise ContractViolation(f"param {key!r} is not a scalar")
        for kind, paths in (("input", self.inputs), ("output", self.outputs)):
            for role, rel in paths.items():
                p = Path(rel)
                if p.is_absolute() or ".." in p.parts:
                    raise ContractViolation(f"{kind} {role!r} path {rel!r} escapes the working directory")
                if kind == "input" and not rel.endswith(".png"):
                    raise ContractViolation(f"input {role!r} is not a PNG: {rel!r}")
                if kind == "input" and root is not None and not (root / p).is_file():
                    raise ContractViolation(f"input {role!r} file {rel!r} does not exist")

    def to_dict(self) -> dict:
        return {"stage": self.stage, "inputs": dict(self.inputs), "outputs": dict(self.outputs), "params": dict(self.params)}

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "BackendManifest":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            m = cls(raw["stage"], dict(raw["inputs"]), dict(raw["outputs"]), dict(raw.get("params", {})))
        except (KeyError, TypeError) as exc:
            raise ContractViolation(f"malformed manifest {path}: {exc}") from exc
        m.validate(Path(path).parent)
        return m


@dataclass(frozen=True)
class BackendSpec:
    """How one stage is served.

    ``params`` go to the mock in-process, or into the manifest for external
    commands. Working directories are created under ``work_root`` (system
    temp dir if unset).
    """

    kind: str = "builtin_mock"
    command: Tuple[str, ...] = ()
    mock_variant: Optional[str] = None
    params: Dict[str, object] = field(default_factory=dict)
    work_root: Optional[str] = None
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("builtin_mock", "external_command"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "builtin_mock" and self.mock_variant not in MOCK_VARIANTS:
            raise ValueError(f"unknown mock variant {self.mock_variant!r}")
        if self.kind == "external_command" and not self.command:
            raise ValueError("external backend needs a command")
        object.__setattr__(self, "command", tuple(self.command))

    @classmethod
    def mock(cls, variant: str, **params) -> "BackendSpec":
        return cls(kind="builtin_mock", mock_variant=variant, params=params)

    @classmethod
    def external(cls, command: Sequence[str], **kwargs) -> "BackendSpec":
        return cls(kind="external_command", command=tuple(command), **kwargs)

    def stage(self) -> Optional[str]:
        return MOCK_VARIANTS.get(self.mock_variant) if self.kind == "builtin_mock" else None

    def with_params(self, **params) -> "BackendSpec":
        merged = dict(self.params)
        merged.update(params)
        return BackendSpec(self.kind, self.command, self.mock_variant, merged, self.work_root, self.timeout)

    def describe(self) -> str:
        if self.kind == "builtin_mock":
            return f"mock:{self.mock_variant}"
        return "external:" + " ".join(self.command)


def _require_stage(spec: BackendSpec, stage: str) -> None:
    if spec.kind == "builtin_mock" and spec.stage() != stage:
        raise ValueError(f"mock {spec.mock_variant} cannot serve the {stage} stage")


# --------------------------------------------------------------------- mocks


def oracle_segment(background: RasterImage, entity_paths: Sequence) -> List[EntityInstance]:
    masks = []
    for p in entity_paths:
        mask = load_mask(p)
        if mask.size != background.size:
            raise ContractViolation(f"entity mask {p} is {mask.size}, background is {background.size}")
        masks.append((Path(p).stem, mask))
    return make_entities(masks)


def _list_entity_pngs(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png" and p.is_file())


def _four_neighbor_dilate(fg: np.ndarray) -> np.ndarray:
    out = fg.copy()
    out[1:, :] |= fg[:-1, :]
    out[:-1, :] |= fg[1:, :]
    out[:, 1:] |= fg[:, :-1]
    out[:, :-1] |= fg[:, 1:]
    return out


def nearest_fill(image: RasterImage, mask: BinaryMask) -> RasterImage:
    """Fill each masked pixel with its nearest unmasked pixel.

    Euclidean distance on the integer grid; ties go to the smaller row, then
    the smaller column. Only unmasked pixels 4-adjacent to the mask can be
    nearest, so the search tree is built over that boundary alone.
    """
    if mask.size != image.size:
        raise DimensionMismatch(f"mask {mask.size} vs image {image.size}")
    fg = mask.fg
    if not fg.any():
        return image
    known = ~fg
    if not known.any():
        raise BackendFailure("mask covers the whole image; nothing to fill from")
    boundary = known & _four_neighbor_dilate(fg)
    by, bx = np.nonzero(boundary)  # row-major, so a lower index is a lexicographically smaller (row, col)
    qy, qx = np.nonzero(fg)
    tree = cKDTree(np.column_stack([by, bx]).astype(np.float64))
    queries = np.column_stack([qy, qx]).astype(np.float64)
    k = min(8, len(by))
    _, idx = tree.query(queries, k=k)
    idx = np.asarray(idx).reshape(len(qy), k)
    sq = (by[idx] - qy[:, None]) ** 2 + (bx[idx] - qx[:, None]) ** 2
    best_sq = sq.min(axis=1)
    big = np.iinfo(np.int64).max
    best = np.where(sq == best_sq[:, None], idx, big).min(axis=1)
    # more equidistant candidates may exist past the k-th neighbor
    overflow = np.flatnonzero(sq[:, -1] == best_sq) if k < len(by) else np.array([], dtype=np.int64)
    for i in overflow:
        radius = math.sqrt(int(best_sq[i])) + 1e-6
        cand = np.asarray(tree.query_ball_point(queries[i], radius), dtype=np.int64)
        csq = (by[cand] - qy[i]) ** 2 + (bx[cand] - qx[i]) ** 2
        best[i] = cand[csq == csq.min()].min()
    out = image.pixels.copy()
    out[qy, qx] = image.pixels[by[best], bx[best]]
    return RasterImage(out)


def _round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def compositor_placement(product_mask: BinaryMask, target_mask: BinaryMask, variant: str) -> BBox:
    """Where a mock compositor puts the scaled product crop."""
    crop = mask_to_bbox(product_mask)
    target = mask_to_bbox(target_mask)
    if variant == "stretch_fill_compositor":
        return target
    if variant != "fit_inside_compositor":
        raise ValueError(f"{variant} is not a compositor")
    scale = min(Fraction(target.w, crop.w), Fraction(target.h, crop.h))
    w = min(target.w, max(1, _round_half_up(crop.w * scale)))
    h = min(target.h, max(1, _round_half_up(crop.h * scale)))
    return BBox(target.x + (target.w - w) // 2, target.y + (target.h - h) // 2, w, h)


def mock_composite(
    background: RasterImage,
    product: RasterImage,
    product_mask: BinaryMask,
    target_mask: BinaryMask,
    variant: str,
) -> RasterImage:
    """Resample the product crop into its placement and paste it inside the target mask."""
    if target_mask.size != background.size:
        raise DimensionMismatch(f"target mask {target_mask.size} vs background {background.size}")
    if product_mask.size != product.size:
        raise DimensionMismatch(f"product mask {product_mask.size} vs product {product.size}")
    place = compositor_placement(product_mask, target_mask, variant)
    crop = mask_to_bbox(product_mask)
    pixels = resize_nearest(product.crop(crop).rgb().pixels, place.w, place.h)
    scaled_fg = resize_nearest(product_mask.crop(crop).fg, place.w, place.h)
    region = place.intersection(BBox(0, 0, background.width, background.height))
    paste_fg = np.zeros_like(scaled_fg)
    if region is not None:
        ys = slice(region.y - place.y, region.y1 - place.y)
        xs = slice(region.x - place.x, region.x1 - place.x)
        paste_fg[ys, xs] = scaled_fg[ys, xs] & target_mask.fg[region.slices()]
    return alpha_paste(background, RasterImage(pixels), BinaryMask.from_bool(paste_fg), place)


# ------------------------------------------------------------ external calls


class _Invocation:
    """One hermetic working directory; kept on disk if the call fails."""

    def __init__(self, stage: str, spec: BackendSpec):
        self.stage = stage
        self.spec = spec
        if spec.work_root:
            os.makedirs(spec.work_root, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=f"catalogstitch-{stage}-", dir=spec.work_root))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            shutil.rmtree(self.dir, ignore_errors=True)
        else:
            log.error("%s backend failed; working directory kept at %s", self.stage, self.dir)
        return False

    def run(self, inputs: Dict[str, object], params: Dict[str, object]) -> BackendManifest:
        rel_inputs = {}
        for role, raster in inputs.items():
            rel = f"{role}.png"
            save_png(raster, self.dir / rel)
            rel_inputs[role] = rel
        scalar_params = {k: v for k, v in params.items() if isinstance(v, (str, int, float, bool))}
        manifest = BackendManifest(self.stage, rel_inputs, dict(STAGE_OUTPUTS[self.stage]), scalar_params)
        manifest_path = manifest.write(self.dir / MANIFEST_NAME)
        argv = list(self.spec.command) + [str(manifest_path)]
        try:
            proc = subprocess.run(argv, cwd=self.dir, capture_output=True, text=True, timeout=self.spec.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendFailure(f"{self.stage} backend could not run ({exc}); see {self.dir}") from exc
        (self.dir / "stdout.log").write_text(proc.stdout or "", encoding="utf-8")
        (self.dir / "stderr.log").write_text(proc.stderr or "", encoding="utf-8")
        if proc.returncode != 0:
            tail = (proc.stderr or "").strip().splitlines()[-5:]
            raise BackendFailure(f"{self.stage} backend exited {proc.returncode}; see {self.dir}: " + " | ".join(tail))
        for role, rel in manifest.outputs.items():
            if not (self.dir / rel).exists():
                raise BackendFailure(f"{self.stage} backend did not produce output {role!r} ({rel}); see {self.dir}")
        return manifest

    def load(self, loader, rel: str):
        try:
            return loader(self.dir / rel)
        except CatalogStitchError as exc:
            raise BackendFailure(f"{self.stage} backend output {rel} unreadable: {exc}; see {self.dir}") from exc
        except OSError as exc:
            raise BackendFailure(f"{self.stage} backend output {rel} unreadable: {exc}; see {self.dir}") from exc


# ------------------------------------------------------------------- stages


def _check_inpaint_contract(source: RasterImage, mask: BinaryMask, output: RasterImage) -> None:
    if output.size != source.size or output.channels != source.channels:
        raise ContractViolation(f"inpainter returned {output!r} for input {source!r}")
    changed = np.any(output.pixels != source.pixels, axis=2) & ~mask.fg
    if changed.any():
        ys, xs = np.nonzero(changed)
        raise ContractViolation(
            f"inpainter altered {len(ys)} unmasked pixel(s), first at (x={xs[0]}, y={ys[0]})"
        )


def run_segmenter(background: RasterImage, spec: BackendSpec) -> List[EntityInstance]:
    """Instance masks for ``background``.

    The oracle mock reads masks listed in ``params['entity_paths']`` or every
    PNG in ``params['entity_dir']`` in filename order.
    """
    _require_stage(spec, "segment")
    if spec.kind == "builtin_mock":
        paths = spec.params.get("entity_paths")
        if paths is None:
            paths = _list_entity_pngs(spec.params["entity_dir"]) if spec.params.get("entity_dir") else []
        return oracle_segment(background, paths)
    with _Invocation("segment", spec) as inv:
        manifest = inv.run({"background": background}, spec.params)
        files = _list_entity_pngs(inv.dir / manifest.outputs["entities"])
        masks = []
        for f in files:
            mask = inv.load(load_mask, str(f.relative_to(inv.dir)))
            if mask.size != background.size:
                raise ContractViolation(f"segmenter mask {f.name} is {mask.size}, background is {background.size}")
            masks.append((f.stem, mask))
        return make_entities(masks)


def run_inpainter(background: RasterImage, mask: BinaryMask, spec: BackendSpec) -> RasterImage:
    _require_stage(spec, "inpaint")
    if mask.size != background.size:
        raise DimensionMismatch(f"mask {mask.size} vs background {background.size}")
    if spec.kind == "builtin_mock":
        out = nearest_fill(background, mask)
        _check_inpaint_contract(background, mask, out)
        return out
    with _Invocation("inpaint", spec) as inv:
        manifest = inv.run({"background": background, "mask": mask}, spec.params)
        out = inv.load(load_image, manifest.outputs["image"])
        _check_inpaint_contract(background, mask, out)
        return out


def run_compositor(
    background: RasterImage,
    product: RasterImage,
    product_mask: BinaryMask,
    target_mask: BinaryMask,
    spec: BackendSpec,
) -> RasterImage:
    _require_stage(spec, "composite")
    if target_mask.size != background.size:
        raise DimensionMismatch(f"target mask {target_mask.size} vs background {background.size}")
    if product_mask.size != product.size:
        raise DimensionMismatch(f"product mask {product_mask.size} vs product {product.size}")
    if spec.kind == "builtin_mock":
        return mock_composite(background, product, product_mask, target_mask, spec.mock_variant)
    with _Invocation("composite", spec) as inv:
        inputs = {"background": background, "product": product, "product_mask": product_mask, "target_mask": target_mask}
        manifest = inv.run(inputs, spec.params)
        out = inv.load(load_image, manifest.outputs["image"])
        if out.size != background.size:
            raise ContractViolation(f"compositor returned {out.size}, background is {background.size}")
        return out


# ------------------------------------------------------- mocks as processes


def serve_manifest(manifest_path, variant: str) -> None:
    """Answer one manifest with a built-in mock, as an external backend would."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    manifest = BackendManifest.read(manifest_path)
    stage = MOCK_VARIANTS.get(variant)
    if stage != manifest.stage:
        raise ContractViolation(f"mock {variant} cannot answer a {manifest.stage} manifest")
    inp = {role: root / rel for role, rel in manifest.inputs.items()}
    if stage == "segment":
        background = load_image(inp["background"])
        entity_dir = manifest.params.get("entity_dir")
        entities = oracle_segment(background, _list_entity_pngs(entity_dir) if entity_dir else [])
        out_dir = root / manifest.outputs["entities"]
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, ent in enumerate(entities):
            save_png(ent.mask, out_dir / f"{i:03d}.png")
    elif stage == "inpaint":
        result = nearest_fill(load_image(inp["background"]), load_mask(inp["mask"]))
        save_png(result, root / manifest.outputs["image"])
    else:
        result = mock_composite(
            load_image(inp["background"]),
            load_image(inp["product"]),
            load_mask(inp["product_mask"]),
            load_mask(inp["target_mask"]),
            variant,
        )
        save_png(result, root / manifest.outputs["image"])
