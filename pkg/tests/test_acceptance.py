"""Acceptance suite: one test per release criterion, each printing a PASS line
with the measured numbers (run with ``pytest -s`` to see them inline).

The end-to-end benchmarks drive the real CLI entry point in-process, write
real datasets to disk, and re-run themselves to check byte-level determinism.
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from lesionforge import kernels
from lesionforge.cli import main
from lesionforge.cli.flowio import flow_from_bytes, flow_to_bytes
from lesionforge.cli.manifest import read_manifest, validate_manifest_files
from lesionforge.evalkit import pck, roc_curve
from lesionforge.poissonblend import (
    BlendRequest,
    assemble,
    effective_region,
    seamless_clone,
    solve_cg,
)
from lesionforge.synth import (
    DeformParams,
    FlowField,
    PerturbParams,
    SynthConfig,
    synth_detection_sample,
    synth_tracking_pair,
)

from conftest import blob_mask, rng, smooth_image
from test_evalkit import brute_force_pck, disc_truth, proposal
from test_poissonblend import one_pixel_request, reference_apply

SOLVER_TOL = 1e-8


def _random_request(r, size=64):
    target = smooth_image(r, size, size, base=0.55, amp=0.25)
    source = smooth_image(r, size, size, base=0.5, amp=0.3)
    region = blob_mask(r, size, size, max_radius=size // 4)
    dx = int(r.integers(-4, 5))
    dy = int(r.integers(-4, 5))
    return BlendRequest(target=target, source=source, region=region,
                        offset=(dx, dy))


def test_criterion_1_poisson_solver_correctness():
    start = time.time()
    r = rng(1001)
    worst = 0.0
    for _ in range(100):
        req = _random_request(r)
        system = assemble(req)
        values, report = solve_cg(system, tol=SOLVER_TOL)
        assert report.converged
        eff = effective_region(req)
        for ch in range(3):
            norm_b = np.linalg.norm(system.rhs[ch])
            if norm_b == 0:
                continue
            resid = system.rhs[ch] - reference_apply(eff, values[ch])
            rel = np.linalg.norm(resid) / norm_b
            worst = max(worst, rel)
            assert rel <= SOLVER_TOL

    system = assemble(one_pixel_request())
    values, report = solve_cg(system, tol=1e-12)
    assert report.converged
    np.testing.assert_allclose(values, 0.25, atol=1e-10)

    img = smooth_image(rng(1002), 64, 64)
    region = blob_mask(rng(1003), 64, 64)
    out = seamless_clone(BlendRequest(target=img, source=img.copy(),
                                      region=region))
    identity_err = float(np.abs(out - img).max())
    assert identity_err <= 1e-6

    elapsed = time.time() - start
    assert elapsed <= 30.0
    print(f"\n[PASS] criterion 1: 100 random solves, worst re-verified "
          f"residual {worst:.2e} <= 1e-8; 1-pixel fixture = 0.25; identity "
          f"blend err {identity_err:.2e} <= 1e-6; {elapsed:.1f}s <= 30s")


def test_criterion_2_harmonic_properties():
    r = rng(2001)
    worst_mv = 0.0
    for _ in range(100):
        size = 64
        target = smooth_image(r, size, size)
        region = blob_mask(r, size, size, max_radius=size // 4)
        req = BlendRequest(target=target,
                           source=np.full((size, size, 3), 0.5), region=region)
        system = assemble(req)
        values, report = solve_cg(system, tol=SOLVER_TOL)
        assert report.converged
        eff = effective_region(req)
        ys, xs = np.nonzero(eff)
        for ch in range(3):
            plane = target[:, :, ch].copy()
            plane[eff] = values[ch]
            bnd = np.zeros_like(eff)
            bnd[ys - 1, xs] = True
            bnd[ys + 1, xs] = True
            bnd[ys, xs - 1] = True
            bnd[ys, xs + 1] = True
            bnd &= ~eff
            bvals = target[:, :, ch][bnd]
            assert values[ch].min() >= bvals.min() - 1e-6
            assert values[ch].max() <= bvals.max() + 1e-6
            means = (plane[ys - 1, xs] + plane[ys + 1, xs]
                     + plane[ys, xs - 1] + plane[ys, xs + 1]) / 4.0
            dev = float(np.abs(values[ch] - means).max())
            worst_mv = max(worst_mv, dev)
            assert dev <= 10 * SOLVER_TOL
    print(f"\n[PASS] criterion 2: max principle and mean-value hold on 100 "
          f"domains; worst mean-value deviation {worst_mv:.2e} <= "
          f"{10 * SOLVER_TOL:.0e}")


def test_criterion_3_flow_ground_truth_fidelity(tiny_catalog):
    cfg = SynthConfig(lesions_per_image=(1, 2), min_sep=36.0,
                      augment_scale=(0.8, 1.1), max_footprint=80)
    deform = DeformParams(translation=4.0, rotation=0.01, scale_jitter=0.005,
                          elastic_magnitude=8.0, smoothness_sigma=12.0)
    worst_median = 0.0
    for i in range(50):
        body = tiny_catalog.bodies[i % len(tiny_catalog.bodies)]
        sample = synth_detection_sample(body, tiny_catalog.lesions, cfg,
                                        seed=3000 + i)
        pair = synth_tracking_pair(sample, deform, PerturbParams(0.0),
                                   seed=4000 + i)
        h, w = pair.labels_a.shape
        xs = (np.arange(w, dtype=np.float64)[None, :]
              + pair.flow_ab.vectors[:, :, 0]).ravel()
        ys = (np.arange(h, dtype=np.float64)[:, None]
              + pair.flow_ab.vectors[:, :, 1]).ravel()
        resampled = kernels.bilinear_gather(pair.image_a, xs, ys).reshape(h, w, 3)
        err = np.abs(resampled - pair.image_b)[pair.flow_ab.valid]
        med = float(np.median(err))
        worst_median = max(worst_median, med)
        assert med <= 2.0 / 255.0
    print(f"\n[PASS] criterion 3: 50 jitter-free pairs, worst median "
          f"photometric error {worst_median:.2e} <= {2 / 255:.2e}")


def test_criterion_4_metric_oracles():
    r = rng(4001)
    pred = r.random((1000, 2)) * 256
    truth = r.random((1000, 2)) * 256
    alphas = np.round(np.linspace(0.01, 0.2, 20), 4)
    diag = math.hypot(256, 256)
    curve = pck(pred, truth, alphas, diag)
    expected = brute_force_pck(pred.tolist(), truth.tolist(), alphas, diag)
    for (_, frac), want in zip(curve.points, expected):
        assert abs(frac - want) <= 1e-12

    truths = [[disc_truth(10, 10, 4), disc_truth(40, 40, 4)]]
    props = [[proposal(10, 10, 0.9), proposal(25, 25, 0.6),
              proposal(40, 40, 0.4)]]
    roc = roc_curve(props, truths, [0.95, 0.8, 0.5, 0.3])
    assert [(t, f, tpr) for t, f, tpr in roc.points] == [
        (0.95, 0.0, 0.0), (0.8, 0.0, 0.5), (0.5, 1.0, 0.5), (0.3, 1.0, 1.0)]
    print("\n[PASS] criterion 4: pck matches the brute-force oracle at 1e-12 "
          "on 1000 keypoints x 20 alphas; ROC reproduces the 3-proposal "
          "enumeration verbatim")


# ---------------------------------------------------------------------------
# End-to-end benchmarks (criteria 5-7 share these runs)

TRACK_CONFIG = {
    "tracking": {
        "deform": {"translation": 3.0, "rotation": 0.002,
                   "scale_jitter": 0.002, "elastic_magnitude": 0.5,
                   "smoothness_sigma": 16.0},
        "jitter": {"brightness": [-0.03, 0.03], "contrast": [0.97, 1.03]},
        "perturb": {"scale_jitter": 0.0},
    },
}


def run_detection_benchmark(root: Path, assets: Path) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    out = {}
    dataset = root / "detect"
    code = main(["synth-detect", "--assets", str(assets), "--out", str(dataset),
                 "--count", "250", "--seed", "42", "--jobs", "2"])
    assert code == 0
    preds = root / "detect_preds.json"
    code = main(["baseline-run", "--manifest", str(dataset / "manifest.json"),
                 "--mode", "detect", "--out", str(preds), "--split", "200"])
    assert code == 0
    metrics = root / "detect_metrics.json"
    code = main(["eval", "--manifest", str(dataset / "manifest.json"),
                 "--predictions", str(preds), "--task", "detect", "--out",
                 str(metrics)])
    assert code == 0
    out["dataset"] = dataset
    out["preds"] = preds
    out["metrics"] = metrics
    return out


def run_tracking_benchmark(root: Path, assets: Path) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "track_config.json"
    cfg.write_text(json.dumps(TRACK_CONFIG, sort_keys=True))
    det = root / "detect50"
    code = main(["synth-detect", "--assets", str(assets), "--out", str(det),
                 "--count", "50", "--seed", "42", "--jobs", "2"])
    assert code == 0
    track = root / "track50"
    code = main(["synth-track", "--manifest", str(det / "manifest.json"),
                 "--config", str(cfg), "--out", str(track)])
    assert code == 0
    preds = root / "track_preds.json"
    code = main(["baseline-run", "--manifest", str(track / "manifest.json"),
                 "--mode", "track", "--out", str(preds), "--window", "11",
                 "--search", "8"])
    assert code == 0
    metrics = root / "track_metrics.json"
    code = main(["eval", "--manifest", str(track / "manifest.json"),
                 "--predictions", str(preds), "--task", "track", "--out",
                 str(metrics)])
    assert code == 0
    return {"detect": det, "dataset": track, "preds": preds, "metrics": metrics}


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    assets = root / "assets"
    assert main(["gen-assets", "--out", str(assets), "--seed", "42"]) == 0
    t0 = time.time()
    detection = run_detection_benchmark(root / "d1", assets)
    detect_elapsed = time.time() - t0
    tracking = run_tracking_benchmark(root / "t1", assets)
    return {"root": root, "assets": assets, "detection": detection,
            "tracking": tracking, "detect_elapsed": detect_elapsed}


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(
                p.read_bytes()).hexdigest()
    return out


def test_criterion_5_detection_benchmark(bench):
    metrics = json.loads(bench["detection"]["metrics"].read_text())
    auc = metrics["auc"]
    elapsed = bench["detect_elapsed"]
    assert metrics["num_images"] == 50
    assert auc >= 0.90
    assert elapsed <= 600.0
    print(f"\n[PASS] criterion 5: detection AUC {auc:.4f} >= 0.90 on the "
          f"200/50 split (seed 42) in {elapsed:.0f}s <= 600s")


def test_criterion_6_tracking_benchmark(bench):
    metrics = json.loads(bench["tracking"]["metrics"].read_text())
    fractions = {p["alpha"]: p["fraction"] for p in metrics["points"]}
    got = fractions[0.05]
    assert metrics["num_pairs"] == 50
    assert got >= 0.95
    print(f"\n[PASS] criterion 6: tracking PCK@0.05 = {got:.4f} >= 0.95 over "
          f"{metrics['keypoints']} keypoints on 50 pairs (threshold "
          f"{0.05 * math.hypot(256, 256):.1f} px)")


def test_criterion_7_byte_level_determinism(bench):
    root = bench["root"]
    detection2 = run_detection_benchmark(root / "d2", bench["assets"])
    tracking2 = run_tracking_benchmark(root / "t2", bench["assets"])
    d1 = bench["detection"]
    t1 = bench["tracking"]
    assert tree_digest(d1["dataset"]) == tree_digest(detection2["dataset"])
    assert d1["preds"].read_bytes() == detection2["preds"].read_bytes()
    assert d1["metrics"].read_bytes() == detection2["metrics"].read_bytes()
    assert tree_digest(t1["dataset"]) == tree_digest(tracking2["dataset"])
    assert t1["preds"].read_bytes() == tracking2["preds"].read_bytes()
    assert t1["metrics"].read_bytes() == tracking2["metrics"].read_bytes()
    print("\n[PASS] criterion 7: repeated runs with identical seeds produce "
          "byte-identical datasets, predictions, and metrics")


def test_criterion_8_format_round_trips(bench):
    r = rng(8001)
    for _ in range(100):
        w = int(r.integers(1, 40))
        h = int(r.integers(1, 40))
        field = FlowField.from_vectors(r.uniform(-30, 30, size=(h, w, 2)))
        data = flow_to_bytes(field)
        assert flow_to_bytes(flow_from_bytes(data)) == data

    for key in ("detection", "tracking"):
        manifest_path = bench[key]["dataset"] / "manifest.json"
        man = read_manifest(manifest_path)      # reparses + hash check
        validate_manifest_files(manifest_path, man)
    man50 = bench["tracking"]["detect"] / "manifest.json"
    validate_manifest_files(man50, read_manifest(man50))
    print("\n[PASS] criterion 8: 100 random flow fields round-trip "
          "byte-identically; every benchmark manifest reparses and revalidates")
