"""Acceptance gate: one PASS/FAIL line per criterion (see the summary section)."""

import filecmp
import json
import math
import sys
import time
from fractions import Fraction

import numpy as np

from catalogstitch.backends import BackendSpec, nearest_fill, run_inpainter
from catalogstitch.cli import EXIT_OK, main
from catalogstitch.dataset import load_dataset
from catalogstitch.errors import ContractViolation
from catalogstitch.fixtures import generate_fixtures
from catalogstitch.geometry import bbox_iou, compute_dimension_aware_mask
from catalogstitch.metrics import PSNR_CAP_DB, ar_error, masked_psnr
from catalogstitch.occlusion import EntityInstance, build_cache, restore
from catalogstitch.pipeline import WRAPPER_STAGES, PipelineConfig, aggregate, run_batch
from catalogstitch.raster import BBox, BinaryMask, RasterImage, load_image, load_mask
from catalogstitch.report import emit_report
from oracles import iou_by_pixels, random_unclipped_case

MOCK_CMD = [sys.executable, "-m", "catalogstitch", "mock-backend", "--variant"]


def test_criterion_1_pixel_perfect_restoration(fixture_records, tmp_path, verdict):
    recs = [r for r in fixture_records if r.category == "occlusion"]
    t0 = time.perf_counter()
    results = run_batch(recs, PipelineConfig(output_dir=tmp_path))
    elapsed = time.perf_counter() - t0
    exact = 0
    for rec, res in zip(recs, results):
        if not res.ok or res.metrics.occluder_psnr_db != PSNR_CAP_DB:
            continue
        final = load_image(tmp_path / res.artifacts["final"]).pixels
        bg = load_image(rec.background).pixels
        union = np.zeros(bg.shape[:2], bool)
        for p in rec.occluder_masks:
            union |= load_mask(p).fg
        exact += bool(np.array_equal(final[union], bg[union]))
    ok = len(recs) == 23 and exact == 23 and elapsed < 10
    verdict(1, "pixel-perfect occluder restoration", ok, f"{exact}/{len(recs)} byte-exact at 99 dB, {elapsed:.2f} s")


def test_criterion_2_ar_trend(fixture_records, tmp_path, verdict):
    recs = [r for r in fixture_records if r.category == "dimension"]
    means, times = {}, {}
    for mode in ("dim_aware", "bbox", "freeform"):
        t0 = time.perf_counter()
        res = run_batch(recs, PipelineConfig(mask_mode=mode, output_dir=tmp_path / mode))
        times[mode] = time.perf_counter() - t0
        agg = aggregate(res)
        assert agg["n_ok"] == len(recs), [r.error for r in res if not r.ok]
        means[mode] = agg["ar_error_pct_mean"]
    d, b, f = means["dim_aware"], means["bbox"], means["freeform"]
    ok = len(recs) == 35 and d <= 1.0 and b >= 10 * d and d < b and d < f and times["dim_aware"] < 10
    detail = (f"dim_aware {d:.3f}%, bbox {b:.2f}%, freeform {f:.2f}%; "
              f"dim_aware run {times['dim_aware']:.2f} s, all three {sum(times.values()):.2f} s")
    verdict(2, "AR error trend with stretch_fill", ok, detail)


def _full(pw, ph):
    return BinaryMask.from_bool(np.ones((ph, pw), bool))


def test_criterion_3_dimension_aware_oracle(verdict):
    target = BinaryMask.rect(800, 600, BBox(100, 50, 200, 100))
    hand = [
        compute_dimension_aware_mask(target, _full(50, 100), 800, 600).bbox == BBox(100, 0, 200, 400),
        compute_dimension_aware_mask(target, _full(400, 100), 800, 600).bbox == BBox(0, 50, 400, 100),
    ]
    rng = np.random.default_rng(20240607)
    failures, skipped, checked, abs_checked = [], 0, 0, 0
    while checked < 1000:
        (iw, ih), (x, y, tw, th), (pw, ph) = random_unclipped_case(rng)
        plan = compute_dimension_aware_mask(BinaryMask.rect(iw, ih, BBox(x, y, tw, th)), _full(pw, ph), iw, ih)
        if not plan.adapted:
            skipped += 1
            continue
        checked += 1
        b = plan.bbox
        ar_p = Fraction(pw, ph)
        rel = abs(Fraction(b.w, b.h) - ar_p) / ar_p
        bound = Fraction(2) / min(Fraction(plan.ideal_w), Fraction(plan.ideal_h))
        same = [b.w == tw, b.h == th]
        good = (not plan.clipped and rel <= bound and sum(same) == 1
                and (b.w >= tw if same[1] else b.h >= th))
        if ar_p <= 2:
            abs_checked += 1
            good = good and abs(Fraction(b.w, b.h) - ar_p) <= bound
        if not good:
            failures.append(((tw, th), (pw, ph), b))
    ok = all(hand) and not failures
    verdict(3, "dimension-aware mask oracle", ok,
            f"hand cases {sum(hand)}/2, {checked - len(failures)}/{checked} adapted random cases within "
            f"2/min(w*,h*) relative ({abs_checked} also absolute), {skipped} non-adapting draws skipped")


def test_criterion_4_iou_oracle(verdict):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        boxes = []
        for _ in range(2):
            w, h = (int(v) for v in rng.integers(1, 65, size=2))
            x, y = (int(v) for v in rng.integers(0, 48, size=2))
            boxes.append((x, y, w, h))
        worst = max(worst, abs(bbox_iou(BBox(*boxes[0]), BBox(*boxes[1])) - iou_by_pixels(*boxes)))
    a, t = BBox(0, 0, 1, 1), BBox(0, 0, 100, 1)
    from catalogstitch.occlusion import detect_occluders

    ent = EntityInstance.from_mask("a", BinaryMask.rect(200, 10, a))
    strict = bbox_iou(a, t) == 0.01 and detect_occluders([ent], t, 0.01) == []
    verdict(4, "box IoU vs pixel count, strict threshold", worst <= 1e-12 and strict,
            f"max |diff| {worst:.2e} over 1000 pairs, IoU=0.01 rejected at tau_occ=0.01: {strict}")


def test_criterion_5_metric_formulas(verdict):
    e = ar_error(2.0, 1.5)
    b = RasterImage(np.zeros((10, 10, 3), np.uint8))
    c = b.pixels.copy()
    c[0, 0, 0] = 255
    p = masked_psnr(b, RasterImage(c), BinaryMask.from_bool(np.ones((10, 10), bool)))
    ok = e == 25.0 and abs(p - 10 * math.log10(300)) <= 1e-9
    verdict(5, "metric formulas", ok, f"ar_error(2, 1.5) = {e!r}, single-sample PSNR = {p!r}")


def _tree_diff(a, b):
    cmp = filecmp.dircmp(a, b)
    bad = cmp.left_only + cmp.right_only + cmp.funny_files
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    bad += mismatch + errors
    for sub in cmp.common_dirs:
        bad += [f"{sub}/{x}" for x in _tree_diff(a / sub, b / sub)]
    return bad


def test_criterion_6_determinism(tmp_path, verdict):
    diffs, n_files = [], 0
    for i in (1, 2):
        generate_fixtures(tmp_path / f"data{i}", seed=7)
    diffs += ["fixtures:" + x for x in _tree_diff(tmp_path / "data1", tmp_path / "data2")]
    for i in (1, 2):
        code = main(["run", "--dataset", str(tmp_path / f"data{i}"), "--out", str(tmp_path / f"run{i}"),
                     "--jobs", "4", "--no-timings"])
        assert code == EXIT_OK
    diffs += _tree_diff(tmp_path / "run1", tmp_path / "run2")
    n_files = sum(1 for p in (tmp_path / "run1").rglob("*") if p.is_file())
    same_core = all((tmp_path / "run1" / n).read_bytes() == (tmp_path / "run2" / n).read_bytes()
                    for n in ("results.json", "report.html"))
    verdict(6, "byte-identical reruns (seed 7, jobs=4)", not diffs and same_core,
            f"{n_files} run files compared, {len(diffs)} differences")


def test_criterion_7_backend_contract(tmp_path, verdict):
    stub = tmp_path / "flip.py"
    stub.write_text(
        "import json, sys\n"
        "from pathlib import Path\n"
        "import numpy as np\n"
        "from PIL import Image\n"
        "manifest = Path(sys.argv[1])\n"
        "root = manifest.parent\n"
        "m = json.loads(manifest.read_text())\n"
        "img = np.array(Image.open(root / m['inputs']['background']))\n"
        "mask = np.array(Image.open(root / m['inputs']['mask'])) >= 128\n"
        "ys, xs = np.nonzero(~mask)\n"
        "img[ys[0], xs[0], 1] ^= 4\n"
        "Image.fromarray(img).save(root / m['outputs']['image'])\n"
    )
    rng = np.random.default_rng(3)
    bg = RasterImage(rng.integers(0, 256, (48, 64, 3), dtype=np.uint8))
    mask = BinaryMask.from_bool(rng.random((48, 64)) < 0.15)
    rejected = False
    try:
        run_inpainter(bg, mask, BackendSpec.external([sys.executable, str(stub)], work_root=str(tmp_path / "w")))
    except ContractViolation:
        rejected = True
    ext = run_inpainter(bg, mask, BackendSpec.external(MOCK_CMD + ["nearest_fill_inpainter"]))
    exact = ext.tobytes() == nearest_fill(bg, mask).tobytes()
    verdict(7, "backend contract enforcement", rejected and exact,
            f"one-pixel stub rejected: {rejected}, conforming external mock bit-exact: {exact}")


def _random_restore_case(rng):
    h, w = (int(v) for v in rng.integers(1, 49, size=2))
    bg = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    comp = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    ents = []
    for i in range(int(rng.integers(0, 6))):
        fg = np.zeros((h, w), bool)
        x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
        bw, bh = int(rng.integers(1, w - x + 1)), int(rng.integers(1, h - y + 1))
        fg[y:y + bh, x:x + bw] = rng.random((bh, bw)) < rng.uniform(0.3, 1.0)
        if fg.any():
            ents.append(EntityInstance.from_mask(f"e{i}", BinaryMask.from_bool(fg)))
    return bg, comp, build_cache(bg, ents)


def test_criterion_8_restore_invariants(verdict):
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(500):
        bg, comp, cache = _random_restore_case(rng)
        once = restore(comp, cache)
        fg = cache.union_mask.fg
        good = (restore(once, cache) == once
                and np.array_equal(once.pixels[~fg], comp.pixels[~fg])
                and np.array_equal(once.pixels[fg], bg.pixels[fg]))
        bad += not good
    verdict(8, "restore idempotent and local", bad == 0, f"{500 - bad}/500 randomized cases")


def test_criterion_9_wrapper_overhead(tmp_path, verdict):
    generate_fixtures(tmp_path / "data", seed=7, n_dimension=4, n_occlusion=4, size=1024)
    results = run_batch(load_dataset(tmp_path / "data"), PipelineConfig(output_dir=tmp_path / "run"))
    emit_report(results, tmp_path / "run" / "report.html", figures=False)
    data = json.loads((tmp_path / "run" / "results.json").read_text())
    per_example = []
    for d in data:
        assert d["ok"], d["error"]
        assert set(WRAPPER_STAGES) <= set(d["timings_ms"])
        per_example.append(sum(d["timings_ms"][s] for s in WRAPPER_STAGES))
    stage_max = {s: max(d["timings_ms"][s] for d in data) for s in WRAPPER_STAGES}
    ok = len(data) == 8 and max(per_example) < 100
    detail = f"max {max(per_example):.1f} ms per example; stage max " + ", ".join(
        f"{s} {v:.1f}" for s, v in stage_max.items())
    verdict(9, "wrapper overhead on 1024x1024", ok, detail)
