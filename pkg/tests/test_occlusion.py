import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catalogstitch.errors import DimensionMismatch
from catalogstitch.occlusion import EntityInstance, build_cache, detect_occluders, make_entities, restore
from catalogstitch.raster import BBox, BinaryMask, RasterImage


def entity(name, w, h, box):
    return EntityInstance.from_mask(name, BinaryMask.rect(w, h, box))


def random_scene(seed, w=24, h=20, n=3):
    rng = np.random.default_rng(seed)
    bg = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    comp = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    ents = []
    for i in range(n):
        fg = np.zeros((h, w), bool)
        x, y = rng.integers(0, w - 2), rng.integers(0, h - 2)
        bw, bh = rng.integers(1, w - x + 1), rng.integers(1, h - y + 1)
        fg[y:y + bh, x:x + bw] = rng.random((bh, bw)) < 0.7
        if fg.any():
            ents.append(EntityInstance.from_mask(f"e{i}", BinaryMask.from_bool(fg)))
    return bg, comp, ents


def test_detect_examples():
    w = h = 40
    target = BBox(8, 0, 20, 5)
    inside = entity("in", w, h, BBox(0, 0, 10, 10))
    far = entity("far", w, h, BBox(30, 30, 5, 5))
    assert [e.id for e in detect_occluders([inside, far], target, 0.01)] == ["in"]


def test_detect_boundary_is_strict():
    # inter 1, union 100
    a = entity("a", 200, 10, BBox(0, 0, 1, 1))
    target = BBox(0, 0, 100, 1)
    assert detect_occluders([a], target, 0.01) == []
    assert detect_occluders([a], target, 0.0099) == [a]


def test_detect_preserves_input_order_and_validates_tau():
    w = h = 50
    es = [entity(str(i), w, h, BBox(i, i, 20, 20)) for i in range(4)]
    assert [e.id for e in detect_occluders(es, BBox(0, 0, 30, 30))] == ["0", "1", "2", "3"]
    assert detect_occluders([], BBox(0, 0, 3, 3)) == []
    with pytest.raises(ValueError):
        detect_occluders(es, BBox(0, 0, 3, 3), 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(3)))
def test_detect_is_permutation_invariant(seed, perm):
    _, _, ents = random_scene(seed)
    target = BBox(5, 5, 10, 8)
    base = {e.id for e in detect_occluders(ents, target)}
    shuffled = [ents[i] for i in perm if i < len(ents)]
    assert {e.id for e in detect_occluders(shuffled, target)} == base


def test_make_entities_drops_empty(caplog):
    ents = make_entities([("a", BinaryMask.empty(4, 4)), ("b", BinaryMask.rect(4, 4, BBox(1, 1, 2, 2)))])
    assert [e.id for e in ents] == ["b"]
    assert ents[0].bbox == BBox(1, 1, 2, 2)
    assert "empty" in caplog.text


def test_cache_copies_bytes_verbatim():
    bg = RasterImage(np.random.default_rng(0).integers(0, 256, (10, 10, 3), dtype=np.uint8))
    fg = np.zeros((10, 10), bool)
    fg[5, 5] = True
    occ = EntityInstance.from_mask("p", BinaryMask.from_bool(fg))
    cache = build_cache(bg, [occ])
    e = cache.entries[0]
    assert e.coords == BBox(5, 5, 1, 1)
    assert e.pixels.pixels[0, 0].tolist() == bg.pixels[5, 5].tolist()
    assert e.pixels.size == e.mask.size == (e.coords.w, e.coords.h)


def test_empty_cache():
    bg = RasterImage.filled(6, 4, (1, 2, 3))
    cache = build_cache(bg, [])
    assert cache.entries == () and cache.union_mask.is_empty()
    assert cache.union_mask.size == bg.size


def test_union_of_overlapping_occluders():
    w, h = 30, 20
    a = entity("a", w, h, BBox(2, 2, 10, 10))
    b = entity("b", w, h, BBox(8, 5, 10, 10))
    cache = build_cache(RasterImage.filled(w, h), [a, b])
    brute = sum(1 for y in range(h) for x in range(w) if a.mask.fg[y, x] or b.mask.fg[y, x])
    assert cache.union_mask.count() == brute == 100 + 100 - 4 * 7


def test_cache_orders_larger_first_with_stable_ties():
    w = h = 40
    ents = [entity("small", w, h, BBox(0, 0, 2, 2)), entity("big", w, h, BBox(0, 0, 10, 10)),
            entity("mid1", w, h, BBox(0, 0, 5, 4)), entity("mid2", w, h, BBox(3, 3, 4, 5))]
    cache = build_cache(RasterImage.filled(w, h), ents)
    assert [e.id for e in cache.entries] == ["big", "mid1", "mid2", "small"]


def test_cache_size_mismatch():
    with pytest.raises(DimensionMismatch):
        build_cache(RasterImage.filled(5, 5), [entity("x", 6, 5, BBox(0, 0, 2, 2))])


def test_restore_empty_cache_is_identity():
    comp = RasterImage(np.random.default_rng(1).integers(0, 256, (7, 9, 3), dtype=np.uint8))
    assert restore(comp, build_cache(comp, [])) == comp


def test_restore_over_black_composite():
    rng = np.random.default_rng(2)
    bg = RasterImage(rng.integers(1, 256, (12, 12, 3), dtype=np.uint8))
    fg = rng.random((12, 12)) < 0.3
    occ = EntityInstance.from_mask("o", BinaryMask.from_bool(fg))
    out = restore(RasterImage.filled(12, 12, (0, 0, 0)), build_cache(bg, [occ]))
    expected = np.where(fg[:, :, None], bg.pixels, 0)
    assert np.array_equal(out.pixels, expected)


def test_restore_size_mismatch():
    cache = build_cache(RasterImage.filled(5, 5), [])
    with pytest.raises(DimensionMismatch):
        restore(RasterImage.filled(6, 5), cache)


def test_restore_applies_entries_in_order():
    w = h = 10
    big = entity("big", w, h, BBox(0, 0, 8, 8))
    small = entity("small", w, h, BBox(2, 2, 2, 2))
    dark = build_cache(RasterImage.filled(w, h, (0, 0, 0)), [big])
    light = build_cache(RasterImage.filled(w, h, (255, 255, 255)), [small])
    union = BinaryMask.from_bool(dark.union_mask.fg | light.union_mask.fg)
    comp = RasterImage.filled(w, h, (7, 7, 7))
    on_top = restore(comp, type(dark)(dark.entries + light.entries, union))
    beneath = restore(comp, type(dark)(light.entries + dark.entries, union))
    assert on_top.pixels[2, 2].tolist() == [255, 255, 255]
    assert beneath.pixels[2, 2].tolist() == [0, 0, 0]


def test_disjoint_occluders_are_order_independent():
    w, h = 20, 10
    bg = RasterImage(np.random.default_rng(5).integers(0, 256, (h, w, 3), dtype=np.uint8))
    ents = [entity("a", w, h, BBox(0, 0, 4, 4)), entity("b", w, h, BBox(10, 2, 3, 6)), entity("c", w, h, BBox(5, 5, 4, 5))]
    comp = RasterImage.filled(w, h, (9, 9, 9))
    outs = set()
    for perm in itertools.permutations(ents):
        cache = build_cache(bg, list(perm))
        cache = type(cache)(tuple(cache.entries[::-1]), cache.union_mask)
        outs.add(restore(comp, cache).tobytes())
    assert len(outs) == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_restore_properties(seed):
    bg, comp, ents = random_scene(seed)
    cache = build_cache(bg, ents)
    out = restore(comp, cache)
    fg = cache.union_mask.fg
    assert np.array_equal(out.pixels[fg], bg.pixels[fg])
    assert np.array_equal(out.pixels[~fg], comp.pixels[~fg])
    assert restore(out, cache) == out
    by_id = {x.id: x for x in ents}
    for e in cache.entries:
        src = by_id[e.id]
        assert e.coords == src.bbox
        assert np.array_equal(e.mask.fg, src.mask.fg[e.coords.slices()])
        assert np.array_equal(e.pixels.pixels, bg.pixels[e.coords.slices()])
