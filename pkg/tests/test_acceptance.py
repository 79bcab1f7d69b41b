"""Acceptance criteria 1-10.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line with its measured
numbers, then asserts at the stated tolerance.
"""

import json
import math
import time

import mpmath
import numpy as np
import pytest

from acontrario_tamper.acontrario import binom_tail_exact, binom_tail_hoeffding, detect_channel
from acontrario_tamper.core import CHANNELS, ChannelResult, Heatmap, NfaRecord, Region, geometry_for
from acontrario_tamper.evaluation import iou, roc_auc
from acontrario_tamper.features import (DEFAULT_ANGLES, baseline_periodicity_score, laplacian_residual,
                                        patch_features, radon_transform)
from acontrario_tamper.fusion import fuse, fuse_scores, union_mask
from acontrario_tamper.io import read_mask, write_image
from acontrario_tamper.pipeline import AnalysisReport, run_analysis
from acontrario_tamper.proposals import RegionProposalSet, grid_proposals
from acontrario_tamper.synth import smooth_noise, synth_heatmap, synth_tamper, synth_texture, upsample_patch

pytestmark = pytest.mark.acceptance

HM = 64  # heatmap side for the synthetic a-contrario criteria


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def fixed_grid(geom, count=500):
    """Data-independent square windows (8, 12 then 16 cells, step 4), first ``count`` kept."""
    regions = grid_proposals(geom, sizes=(8, 12, 16), step=4).regions[:count]
    assert len(regions) == count
    return RegionProposalSet(regions)


def test_1_binomial_oracle(verdict):
    t0 = time.perf_counter()
    mpmath.mp.dps = 60
    worst, count = 0.0, 0
    for p in (0.01, 0.05, 0.1, 0.3, 0.5, 0.9):
        mp_p = mpmath.mpf(p)  # the exact binary value of the float
        for n in range(61):
            pmf = [mpmath.binomial(n, k) * mp_p ** k * (1 - mp_p) ** (n - k) for k in range(n + 1)]
            tail = mpmath.mpf(0)
            for r in range(n, -1, -1):
                tail += pmf[r]
                worst = max(worst, abs(binom_tail_exact(n, r, p) - float(tail)))
                count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    verdict(1, ok, f"max |exact - mpmath| = {worst:.2e} over {count} cases (<= 1e-12), {elapsed:.1f} s (< 10 s)")
    assert ok


def test_2_hoeffding_dominance(verdict):
    t0 = time.perf_counter()
    violations, count = 0, 0
    ps = [k / 100 for k in range(1, 100)]
    for n in range(201):
        for r in range(n + 1):
            for p in ps:
                if binom_tail_hoeffding(n, r, p) < binom_tail_exact(n, r, p):
                    violations += 1
                count += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 30
    verdict(2, ok, f"{violations} violations over {count} (n<=200, all r, p=0.01..0.99), {elapsed:.1f} s (< 30 s)")
    assert ok


def test_3_false_alarm_control(verdict):
    t0 = time.perf_counter()
    hm0 = synth_heatmap(HM, HM, 0.05, seed=0)
    props = fixed_grid(hm0.geometry)
    counts = []
    for trial in range(1000):
        hm = synth_heatmap(HM, HM, 0.05, seed=10_000 + trial)
        res = detect_channel(hm, props)
        counts.append(sum(rec.meaningful for rec in res.all_records))
    counts = np.array(counts, dtype=float)
    mean, se = counts.mean(), counts.std(ddof=1) / math.sqrt(len(counts))
    elapsed = time.perf_counter() - t0
    ok = mean <= 1.0 + 3 * se and elapsed < 120
    verdict(3, ok, f"mean meaningful regions {mean:.4f} (SE {se:.4f}, bound {1 + 3 * se:.4f}); "
                   f"trials with any: {(counts > 0).sum()}/1000; {elapsed:.1f} s (< 120 s)")
    assert ok


def test_4_planted_cluster(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    props = None
    detected = localized = 0
    trials = 200
    for trial in range(trials):
        u0, v0 = (int(x) for x in rng.integers(0, 14, size=2) * 4)
        hm = synth_heatmap(HM, HM, 0.05, ((u0, v0, 12, 12), 1.0), seed=20_000 + trial)
        if props is None:
            props = fixed_grid(hm.geometry)
        plant = {(u, v) for v in range(v0, v0 + 12) for u in range(u0, u0 + 12)}
        res = detect_channel(hm, props)
        truth = [rec for reg, rec in zip(props, res.all_records)
                 if {tuple(c) for c in reg.cells.tolist()} == plant]
        assert len(truth) == 1  # the true block is among the candidates
        detected += truth[0].nfa < 1
        if res.detections:
            cells = {tuple(c) for c in res.detections[0][0].cells.tolist()}
            localized += len(cells & plant) / len(cells | plant) >= 0.5
    elapsed = time.perf_counter() - t0
    det_rate, loc_rate = detected / trials, localized / trials
    ok = det_rate >= 0.99 and loc_rate >= 0.95 and elapsed < 60
    verdict(4, ok, f"detected {det_rate:.3f} (>= 0.99), IoU>=0.5 {loc_rate:.3f} (>= 0.95), "
                   f"{len(props)} candidates, {elapsed:.1f} s (< 60 s)")
    assert ok


def test_5_radon_mass_conservation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    angles = DEFAULT_ANGLES + (30.0, 117.5)
    worst = 0.0
    for _ in range(1000):
        grid = rng.random((64, 64))
        sums = radon_transform(grid, angles).values.sum(axis=1)
        worst = max(worst, float(np.max(np.abs(sums - grid.sum()) / abs(grid.sum()))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    verdict(5, ok, f"max relative mass error {worst:.2e} (<= 1e-6) at angles {angles}, {elapsed:.1f} s (< 30 s)")
    assert ok


def test_6_laplacian_annihilation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    y, x = np.indices((64, 64))
    worst = 0.0
    for _ in range(100):
        b, c = rng.uniform(-1 / 130, 1 / 130, size=2)
        patch = 0.5 + b * (x - 31.5) + c * (y - 31.5)
        worst = max(worst, float(laplacian_residual(patch).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 1
    verdict(6, ok, f"max residual {worst:.2e} on 100 ramps (<= 1e-9), {elapsed:.3f} s (< 1 s)")
    assert ok


def test_7_baseline_separation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    originals = [smooth_noise(64, 2.0, rng=rng) for _ in range(500)]
    upsampled = [upsample_patch(p, 1.5) for p in originals]
    scores = [float(baseline_periodicity_score(patch_features(p))) for p in originals + upsampled]
    auc = roc_auc(scores, [0] * 500 + [1] * 500)
    elapsed = time.perf_counter() - t0
    ok = auc >= 0.75 and elapsed < 120
    verdict(7, ok, f"periodicity AUC {auc:.4f} (>= 0.75), 500 upsampled x1.5 vs 500 originals, "
                   f"{elapsed:.1f} s (< 120 s)")
    assert ok


def test_8_fusion_contract(verdict):
    t0 = time.perf_counter()
    checks = [
        fuse_scores([0.0] * 6) == 0.0,
        all(fuse_scores([x if i == j else 0 for i in range(6)]) == x for j in range(6) for x in (1e-9, 0.3, 1.0)),
        fuse_scores([0.5, 0.9, 0, 0, 0, 0.1]) == (0.5 + 0.9 + 0.1) / 3,
        fuse_scores([0.2, 0.4, 0.6, 0.8, 1.0, 0.0]) == (0.2 + 0.4 + 0.6 + 0.8 + 1.0) / 5,
    ]
    # union mask is all-zero exactly when the fused score is 0
    rng = np.random.default_rng(8)
    g = geometry_for(200, 160)
    for _ in range(200):
        results = []
        for ch in CHANNELS:
            if rng.random() < 0.3:
                u, v = int(rng.integers(g.hm_width)), int(rng.integers(g.hm_height))
                nfa = float(10 ** -rng.uniform(0.1, 12))
                region = Region(0, "synthetic", np.array([[u, v]]), 81)
                rec = NfaRecord(0, 1, 1, 0.1, nfa, nfa, True, math.log(nfa))
                score = min(1.0, -math.log10(nfa) / 10)
                results.append(ChannelResult(ch, score, ((region, rec),), (rec,), 0.1, nfa, g))
            else:
                results.append(ChannelResult(ch, 0.0, (), (), 0.1, None, g))
        out = fuse(results, g)
        checks.append((out.final_score == 0) == (not out.union_mask.any()))
        checks.append(np.array_equal(out.union_mask, union_mask(results, g)))
    elapsed = time.perf_counter() - t0
    ok = all(checks) and elapsed < 1
    verdict(8, ok, f"{sum(checks)}/{len(checks)} fusion/mask checks exact, {elapsed:.3f} s (< 1 s)")
    assert ok


def test_9_determinism(tmp_path, verdict):
    base = synth_texture(256, seed=9)
    tampered, _ = synth_tamper(base, "rotate:5", (64, 64, 128, 128))
    write_image(tmp_path / "img.png", tampered)
    outputs = []
    for run, jobs in enumerate((1, 1, 4, 3)):
        out = tmp_path / f"run{run}"
        run_analysis(tmp_path / "img.png", out, image_id="img", n_jobs=jobs, grid=((8, 12), 4))
        outputs.append(((out / "img.json").read_bytes(), (out / "img_mask.png").read_bytes()))
    ok = all(o == outputs[0] for o in outputs)
    score = json.loads(outputs[0][0])["final_score"]
    verdict(9, ok, f"4 runs (threads 1, 1, 4, 3): reports and masks byte-identical = {ok} "
                   f"(final_score {score:.4f})")
    assert ok


def test_10_end_to_end(tmp_path, verdict):
    texture = synth_texture(512, seed=10)
    tampered, truth = synth_tamper(texture, "upsample:1.5", (192, 160, 128, 128))
    write_image(tmp_path / "tampered.png", tampered)
    write_image(tmp_path / "pristine.png", texture)
    t0 = time.perf_counter()
    report = run_analysis(tmp_path / "tampered.png", tmp_path / "out", classifier="periodicity")
    elapsed = time.perf_counter() - t0

    doc = json.loads((tmp_path / "out" / "tampered.json").read_text())
    mask = read_mask(tmp_path / "out" / doc["mask_path"])
    positive = [s for s in doc["channel_scores"] if s > 0]
    structural = [
        AnalysisReport.from_json(json.dumps(doc)) == report,
        [c["channel"] for c in doc["channels"]] == list(CHANNELS),
        all(0 <= s <= 1 for s in doc["channel_scores"]),
        math.isclose(doc["final_score"], sum(positive) / len(positive) if positive else 0.0),
        all(c["score"] == s for c, s in zip(doc["channels"], doc["channel_scores"])),
        all((c["min_nfa"] is None) == (c["score"] == 0) for c in doc["channels"]),
        mask.shape == (512, 512),
        mask.any() == (doc["final_score"] > 0),
        doc["geometry"]["hm_width"] == doc["geometry"]["hm_height"] == 50,
        doc["candidate_count"] >= 0,
    ]
    pristine = run_analysis(tmp_path / "pristine.png", tmp_path / "out", classifier="periodicity")
    ok = all(structural) and elapsed < 60
    verdict(10, ok, f"analyze {elapsed:.1f} s (< 60 s), report valid {sum(structural)}/{len(structural)}; "
                    f"quality (not gated): tampered score {report.final_score:.3f}, "
                    f"pristine score {pristine.final_score:.3f}, mask IoU {iou(mask, truth):.3f}")
    assert ok
