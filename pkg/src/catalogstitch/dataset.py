"""Benchmark dataset layout.

A dataset root holds ``index.json``::

    {"version": 1,
     "examples": [{"id": "dim_000", "category": "dimension",
                   "background": "dim_000/background.png",
                   "product": "dim_000/product.png",
                   "product_mask": "dim_000/product_mask.png",
                   "target_mask": "dim_000/target_mask.png",
                   "occluder_masks": [],
                   "entity_masks": [],          # optional
                   "meta": "dim_000/meta.json"}]}  # optional

Paths are relative to the root and may not leave it. ``occluder_masks`` are
the ground-truth occluders used for evaluation; ``entity_masks`` (defaulting
to the occluders) are what the oracle segmenter reports, which may include
non-overlapping distractors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

from .errors import DanglingPath, IndexMissing, SchemaError

INDEX_NAME = "index.json"
CATEGORIES = ("dimension", "occlusion")
_PATH_FIELDS = ("background", "product", "product_mask", "target_mask")


@dataclass(frozen=True)
class ExampleRecord:
    id: str
    category: str
    background: Path
    product: Path
    target_mask: Path
    product_mask: Path
    occluder_masks: Tuple[Path, ...] = ()
    entity_masks: Optional[Tuple[Path, ...]] = None
    meta: Optional[Path] = None

    @property
    def segmentable_masks(self) -> Tuple[Path, ...]:
        return self.occluder_masks if self.entity_masks is None else self.entity_masks

    def load_meta(self) -> dict:
        if self.meta is None:
            return {}
        return json.loads(self.meta.read_text(encoding="utf-8"))


def _resolve(root: Path, rel, field_name: str, example_id: str) -> Path:
    if not isinstance(rel, str) or not rel:
        raise SchemaError(f"example {example_id!r}: field {field_name!r} must be a non-empty path string", field_name)
    path = (root / rel).resolve()
    try:
        path.relative_to(root)
    except ValueError:
        raise SchemaError(f"example {example_id!r}: {field_name} path {rel!r} leaves the dataset root", field_name)
    if not path.is_file():
        raise DanglingPath(f"example {example_id!r}: {field_name} file {rel} not found", path)
    return path


def _path_list(root: Path, values, field_name: str, example_id: str) -> Tuple[Path, ...]:
    if not isinstance(values, list):
        raise SchemaError(f"example {example_id!r}: field {field_name!r} must be a list", field_name)
    return tuple(_resolve(root, v, f"{field_name}[{i}]", example_id) for i, v in enumerate(values))


def parse_record(root: Path, entry) -> ExampleRecord:
    if not isinstance(entry, dict):
        raise SchemaError("every example entry must be an object", "examples")
    example_id = entry.get("id")
    if not isinstance(example_id, str) or not example_id:
        raise SchemaError("example is missing a string 'id'", "id")
    category = entry.get("category")
    if category not in CATEGORIES:
        raise SchemaError(f"example {example_id!r}: category must be one of {CATEGORIES}, got {category!r}", "category")
    paths = {}
    for name in _PATH_FIELDS:
        if name not in entry:
            raise SchemaError(f"example {example_id!r}: missing field {name!r}", name)
        paths[name] = _resolve(root, entry[name], name, example_id)
    occluders = _path_list(root, entry.get("occluder_masks", []), "occluder_masks", example_id)
    entities = None
    if "entity_masks" in entry:
        entities = _path_list(root, entry["entity_masks"], "entity_masks", example_id)
    meta = _resolve(root, entry["meta"], "meta", example_id) if entry.get("meta") else None
    return ExampleRecord(id=example_id, category=category, occluder_masks=occluders, entity_masks=entities, meta=meta, **paths)


def load_dataset(root) -> List[ExampleRecord]:
    """Validated records sorted by id."""
    root = Path(root).resolve()
    index = root / INDEX_NAME
    if not index.is_file():
        raise IndexMissing(f"{index} not found")
    try:
        raw = json.loads(index.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{index}: invalid JSON ({exc})", None) from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("examples"), list):
        raise SchemaError(f"{index}: top level must be an object with an 'examples' list", "examples")
    records = [parse_record(root, e) for e in raw["examples"]]
    seen = set()
    for r in records:
        if r.id in seen:
            raise SchemaError(f"duplicate example id {r.id!r}", "id")
        seen.add(r.id)
    return sorted(records, key=lambda r: r.id)


def record_to_index_entry(rec: ExampleRecord, root: Path) -> dict:
    root = Path(root).resolve()

    def rel(p: Path) -> str:
        return Path(p).resolve().relative_to(root).as_posix()

    entry = {
        "id": rec.id,
        "category": rec.category,
        "background": rel(rec.background),
        "product": rel(rec.product),
        "product_mask": rel(rec.product_mask),
        "target_mask": rel(rec.target_mask),
        "occluder_masks": [rel(p) for p in rec.occluder_masks],
    }
    if rec.entity_masks is not None:
        entry["entity_masks"] = [rel(p) for p in rec.entity_masks]
    if rec.meta is not None:
        entry["meta"] = rel(rec.meta)
    return entry


def write_index(records, root, name: str = "catalogstitch-fixtures") -> Path:
    root = Path(root)
    doc = {"name": name, "version": 1, "examples": [record_to_index_entry(r, root) for r in records]}
    path = root / INDEX_NAME
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path
