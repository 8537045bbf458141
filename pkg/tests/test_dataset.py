import json

import pytest

from catalogstitch.dataset import load_dataset, write_index
from catalogstitch.errors import DanglingPath, IndexMissing, SchemaError
from catalogstitch.raster import BBox, BinaryMask, RasterImage, save_png


def make_example(root, ex_id, category="dimension", n_occ=0):
    d = root / ex_id
    d.mkdir(parents=True)
    save_png(RasterImage.filled(8, 8), d / "background.png")
    save_png(RasterImage.filled(4, 4), d / "product.png")
    save_png(BinaryMask.rect(4, 4, BBox(0, 0, 4, 4)), d / "product_mask.png")
    save_png(BinaryMask.rect(8, 8, BBox(1, 1, 3, 3)), d / "target_mask.png")
    occ = []
    for k in range(n_occ):
        save_png(BinaryMask.rect(8, 8, BBox(k, k, 2, 2)), d / f"occ_{k}.png")
        occ.append(f"{ex_id}/occ_{k}.png")
    return {
        "id": ex_id,
        "category": category,
        "background": f"{ex_id}/background.png",
        "product": f"{ex_id}/product.png",
        "product_mask": f"{ex_id}/product_mask.png",
        "target_mask": f"{ex_id}/target_mask.png",
        "occluder_masks": occ,
    }


def write(root, entries):
    (root / "index.json").write_text(json.dumps({"version": 1, "examples": entries}))


def test_three_examples_sorted_by_id(tmp_path):
    write(tmp_path, [make_example(tmp_path, i) for i in ("c", "a", "b")])
    assert [r.id for r in load_dataset(tmp_path)] == ["a", "b", "c"]


def test_occluders_kept_in_index_order(tmp_path):
    e = make_example(tmp_path, "o", "occlusion", n_occ=2)
    e["occluder_masks"].reverse()
    write(tmp_path, [e])
    (rec,) = load_dataset(tmp_path)
    assert [p.name for p in rec.occluder_masks] == ["occ_1.png", "occ_0.png"]
    assert rec.segmentable_masks == rec.occluder_masks


def test_missing_index(tmp_path):
    with pytest.raises(IndexMissing):
        load_dataset(tmp_path)


def test_dangling_mask_names_file(tmp_path):
    e = make_example(tmp_path, "x")
    (tmp_path / "x" / "target_mask.png").unlink()
    write(tmp_path, [e])
    with pytest.raises(DanglingPath, match="target_mask.png") as info:
        load_dataset(tmp_path)
    assert info.value.path.name == "target_mask.png"


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda e: e.update(category="other"), "category"),
        (lambda e: e.pop("product"), "product"),
        (lambda e: e.update(id=""), "id"),
        (lambda e: e.update(occluder_masks="nope"), "occluder_masks"),
        (lambda e: e.update(background="../outside.png"), "background"),
    ],
)
def test_schema_errors_name_field(tmp_path, mutate, field):
    e = make_example(tmp_path, "x")
    (tmp_path.parent / "outside.png").write_bytes(b"")
    mutate(e)
    write(tmp_path, [e])
    with pytest.raises(SchemaError) as info:
        load_dataset(tmp_path)
    assert info.value.field == field


def test_duplicate_ids_and_bad_json(tmp_path):
    e = make_example(tmp_path, "x")
    write(tmp_path, [e, dict(e)])
    with pytest.raises(SchemaError, match="duplicate"):
        load_dataset(tmp_path)
    (tmp_path / "index.json").write_text("{not json")
    with pytest.raises(SchemaError):
        load_dataset(tmp_path)


def test_write_index_round_trip(tmp_path):
    write(tmp_path, [make_example(tmp_path, "a", "occlusion", 1), make_example(tmp_path, "b")])
    recs = load_dataset(tmp_path)
    write_index(recs, tmp_path)
    assert load_dataset(tmp_path) == recs
