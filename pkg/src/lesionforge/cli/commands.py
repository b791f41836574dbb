"""Command implementations behind the ``lesionforge`` CLI.

Every command is deterministic for fixed inputs, flags, and seeds.  Dataset
writers stage into a hidden sibling directory and rename into place on
success, so a failed run leaves no partial dataset behind.  Work parallelizes
across samples with a bounded process pool (``--jobs`` or LESIONFORGE_JOBS);
per-sample seeds come from named streams, so the schedule never affects the
output.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .. import baseline, evalkit
from ..imagecore import (
    CLASS_NAMES,
    gradient_magnitude,
    luminance,
    read_binary_mask,
    read_image,
    read_label_mask,
    write_image,
    write_label_mask,
)
from ..poissonblend import (
    BlendMode,
    BlendRequest,
    SolveError,
    effective_region,
    seamless_clone_with_report,
)
from ..seeds import derive_seed
from ..synth import (
    Placement,
    SyntheticSample,
    synth_detection_sample,
    synth_tracking_pair,
)
from . import assets as assets_mod
from . import flowio, overlay
from .config import ForgeConfig, load_config
from .errors import (
    EXIT_OK,
    EXIT_SOLVER,
    AssetError,
    ConfigError,
    FlowWriteError,
    GenerationError,
)
from .manifest import (
    DatasetManifest,
    PairRecord,
    PlacementRecord,
    SampleRecord,
    read_manifest,
    validate_manifest_files,
    write_manifest,
)

PREDICTIONS_SCHEMA_VERSION = 1


def resolve_jobs(flag: int | None) -> int:
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("LESIONFORGE_JOBS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"LESIONFORGE_JOBS must be an integer, got {env!r}")
    return 1


@contextmanager
def staged_output(out_dir):
    """Create a staging directory next to ``out_dir`` and atomically rename it
    into place on success; on failure the staging tree is removed."""
    out = Path(out_dir)
    if out.exists():
        raise ConfigError(f"output directory already exists: {out}")
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = out.parent / f".{out.name}.staging"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    os.rename(staging, out)


def _map_jobs(fn, work: list, jobs: int) -> list:
    if jobs <= 1 or len(work) <= 1:
        return [fn(w) for w in work]
    with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
        return list(pool.map(fn, work))


# ---------------------------------------------------------------------------
# gen-assets

def cmd_gen_assets(out_dir, seed: int, bodies: int, lesions: int,
                   body_size: int, lesion_size: int) -> int:
    with staged_output(out_dir) as staging:
        assets_mod.generate_assets(staging, seed, n_bodies=bodies,
                                   n_lesions=lesions, body_size=body_size,
                                   lesion_size=lesion_size)
    print(f"wrote {bodies} bodies and {lesions} lesions to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth-detect

def _detect_worker(work) -> dict:
    index, sample_seed, catalog, config, staging = work
    try:
        rng_body = np.random.Generator(np.random.PCG64(
            derive_seed(sample_seed, "body-pick")))
        body = catalog.bodies[int(rng_body.integers(len(catalog.bodies)))]
        sample = synth_detection_sample(body, catalog.lesions, config.synth,
                                        sample_seed)
        image_rel = f"samples/sample_{index:05d}.png"
        labels_rel = f"samples/sample_{index:05d}_labels.png"
        write_image(Path(staging) / image_rel, sample.image)
        write_label_mask(Path(staging) / labels_rel, sample.labels)
        h, w = sample.labels.shape
        return SampleRecord(
            index=index, seed=sample_seed, image=image_rel, labels=labels_rel,
            body_id=sample.body_id, width=w, height=h,
            placements=tuple(PlacementRecord(
                lesion_id=p.lesion_id, center=p.center, scale=p.scale,
                rotation=p.rotation, label=p.label, score=p.score)
                for p in sample.placements)).to_dict()
    except Exception as e:
        raise GenerationError(
            f"sample {index} (seed {sample_seed}) failed: {e}") from e


def cmd_synth_detect(config_path, assets_dir, out_dir, count: int, seed: int,
                     jobs: int | None = None) -> int:
    config = load_config(config_path) if config_path else ForgeConfig()
    catalog = assets_mod.load_catalog(assets_dir)
    n_jobs = resolve_jobs(jobs)
    with staged_output(out_dir) as staging:
        (staging / "samples").mkdir()
        work = [(i, derive_seed(seed, "sample", i), catalog, config, str(staging))
                for i in range(count)]
        records = _map_jobs(_detect_worker, work, n_jobs)
        manifest = DatasetManifest(
            kind="detection", seed=seed, config=config,
            assets_dir=str(assets_dir),
            body_ids=tuple(b.id for b in catalog.bodies),
            lesion_ids=tuple(l.id for l in catalog.lesions),
            samples=tuple(SampleRecord.from_dict(r) for r in records))
        write_manifest(staging / "manifest.json", manifest)
    print(f"wrote {count} detection samples to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth-track

def _load_sample(manifest_dir: Path, record: SampleRecord) -> SyntheticSample:
    image = read_image(manifest_dir / record.image)
    labels = read_label_mask(manifest_dir / record.labels)
    placements = tuple(Placement(
        lesion_id=p.lesion_id, center=p.center, scale=p.scale,
        rotation=p.rotation, label=p.label, score=p.score)
        for p in record.placements)
    return SyntheticSample(image=image, labels=labels, placements=placements,
                           seed=record.seed, body_id=record.body_id,
                           lesion_ids=tuple(p.lesion_id for p in placements))


def _track_worker(work) -> dict:
    (record_dict, pair_seed, manifest_dir, catalog, config, staging) = work
    record = SampleRecord.from_dict(record_dict)
    try:
        sample = _load_sample(Path(manifest_dir), record)
        tracking = config.tracking
        pair = synth_tracking_pair(
            sample, tracking.deform, tracking.perturb, pair_seed,
            catalog=catalog, brightness=tracking.jitter_brightness,
            contrast=tracking.jitter_contrast)
        i = record.index
        rels = {
            "image_a": f"pairs/pair_{i:05d}_a.png",
            "image_b": f"pairs/pair_{i:05d}_b.png",
            "labels_a": f"pairs/pair_{i:05d}_labels_a.png",
            "labels_b": f"pairs/pair_{i:05d}_labels_b.png",
            "flow": f"pairs/pair_{i:05d}.lflo",
        }
        base = Path(staging)
        write_image(base / rels["image_a"], pair.image_a)
        write_image(base / rels["image_b"], pair.image_b)
        write_label_mask(base / rels["labels_a"], pair.labels_a)
        write_label_mask(base / rels["labels_b"], pair.labels_b)
        try:
            flowio.write_flow(base / rels["flow"], pair.flow_ab)
        except OSError as e:
            raise FlowWriteError(f"cannot write flow file {rels['flow']}: {e}") from e
        h, w = pair.labels_a.shape
        return PairRecord(index=i, seed=pair_seed, width=w, height=h,
                          source_index=i, dropped=pair.dropped, **rels).to_dict()
    except FlowWriteError:
        raise
    except Exception as e:
        raise GenerationError(
            f"pair {record.index} (seed {pair_seed}) failed: {e}") from e


def cmd_synth_track(manifest_path, config_path, out_dir,
                    jobs: int | None = None) -> int:
    det = read_manifest(manifest_path)
    if det.kind != "detection":
        raise ConfigError("synth-track needs a detection manifest")
    validate_manifest_files(manifest_path, det)
    config = load_config(config_path) if config_path else det.config
    manifest_dir = Path(manifest_path).parent
    catalog = (assets_mod.load_catalog(_resolve_assets_dir(manifest_path, det))
               if config.tracking.perturb.scale_jitter > 0 else None)
    n_jobs = resolve_jobs(jobs)
    with staged_output(out_dir) as staging:
        (staging / "pairs").mkdir()
        work = [(rec.to_dict(), derive_seed(det.seed, "pair", rec.index),
                 str(manifest_dir), catalog, config, str(staging))
                for rec in det.samples]
        records = _map_jobs(_track_worker, work, n_jobs)
        # Relative so reruns into sibling directories stay byte-identical.
        source_rel = os.path.relpath(Path(manifest_path).resolve(),
                                     Path(out_dir).resolve())
        manifest = DatasetManifest(
            kind="tracking", seed=det.seed, config=config,
            assets_dir=det.assets_dir, body_ids=det.body_ids,
            lesion_ids=det.lesion_ids,
            pairs=tuple(PairRecord.from_dict(r) for r in records),
            source_manifest=source_rel)
        write_manifest(staging / "manifest.json", manifest)
    print(f"wrote {len(det.samples)} tracking pairs to {out_dir}")
    return EXIT_OK


def _resolve_assets_dir(manifest_path, manifest: DatasetManifest) -> Path:
    p = Path(manifest.assets_dir)
    if not p.is_absolute():
        candidate = Path(manifest_path).parent / p
        if candidate.is_dir():
            return candidate
    if not p.is_dir():
        raise AssetError(f"assets directory from manifest not found: {p}")
    return p


# ---------------------------------------------------------------------------
# baseline-run

def _patch_centers_for_sample(record: SampleRecord, labels, img, radius: int,
                              seed: int) -> tuple[list, list]:
    """Training patches for one sample: lesion-centered positives (center plus
    two jittered copies each) and twice as many lesion-free negatives, half
    drawn uniformly and half at the strongest-gradient positions (hard
    negatives: texture that most resembles a lesion edge)."""
    h, w = labels.shape
    rng = np.random.Generator(np.random.PCG64(
        derive_seed(seed, "patches", record.index)))
    centers: list[tuple[int, int]] = []
    classes: list[int] = []
    for p in record.placements:
        cx, cy = p.center
        class_id = 1 if p.label == "benign" else 2
        centers.append((cx, cy))
        classes.append(class_id)
        for _ in range(2):
            jx = int(np.clip(cx + rng.integers(-4, 5), radius, w - 1 - radius))
            jy = int(np.clip(cy + rng.integers(-4, 5), radius, h - 1 - radius))
            centers.append((jx, jy))
            classes.append(class_id)
    n_pos = len(centers)

    def window_clear(cx, cy):
        win = labels[cy - radius:cy + radius + 1, cx - radius:cx + radius + 1]
        return win.max(initial=0) == 0

    n_neg = n_pos
    tries = 0
    while n_neg > 0 and tries < 200 * (n_neg + 1):
        tries += 1
        cx = int(rng.integers(radius, w - radius))
        cy = int(rng.integers(radius, h - radius))
        if window_clear(cx, cy):
            centers.append((cx, cy))
            classes.append(0)
            n_neg -= 1
    gmag = gradient_magnitude(luminance(img))
    gys, gxs = np.mgrid[radius:h - radius:4, radius:w - radius:4]
    gys = gys.ravel()
    gxs = gxs.ravel()
    order = np.lexsort((gxs, gys, -gmag[gys, gxs]))
    got = 0
    for j in order:
        if got >= n_pos:
            break
        cx, cy = int(gxs[j]), int(gys[j])
        if window_clear(cx, cy):
            centers.append((cx, cy))
            classes.append(0)
            got += 1
    return centers, classes


def _heatmap_proposals_classed(heat: baseline.Heatmap, prob_threshold: float,
                               min_area: int) -> list[evalkit.RegionProposal]:
    """Proposals from the pooled lesionness plane (benign + malignant), each
    re-labelled with whichever lesion class dominates its support."""
    pooled_probs = np.stack(
        [heat.probs[:, :, 0], heat.probs[:, :, 1] + heat.probs[:, :, 2]], axis=2)
    pooled = baseline.Heatmap(
        probs=pooled_probs, xs=heat.xs, ys=heat.ys, stride=heat.stride,
        offset=heat.offset, image_size=heat.image_size,
        classes=("background", "lesion"))
    props = evalkit.heatmap_to_proposals(pooled, 1, prob_threshold, min_area)
    out = []
    for prop in props:
        x0, y0, x1, y1 = prop.box
        ix = np.flatnonzero((heat.xs >= x0) & (heat.xs <= x1))
        iy = np.flatnonzero((heat.ys >= y0) & (heat.ys <= y1))
        cells = heat.probs[np.ix_(iy, ix)]
        hot = pooled_probs[np.ix_(iy, ix)][:, :, 1] >= prob_threshold
        if hot.any():
            benign = float(cells[:, :, 1][hot].mean())
            malignant = float(cells[:, :, 2][hot].mean())
        else:
            benign, malignant = 0.0, 1.0
        class_id = 2 if malignant >= benign else 1
        out.append(evalkit.RegionProposal(box=prop.box, class_id=class_id,
                                          score=prop.score,
                                          centroid=prop.centroid))
    return out


def cmd_baseline_detect(manifest_path, out_path, split: int, radius: int,
                        stride: int, lr: float, epochs: int, l2: float,
                        seed: int, prob_threshold: float, min_area: int) -> int:
    manifest = read_manifest(manifest_path)
    if manifest.kind != "detection":
        raise ConfigError("baseline detect needs a detection manifest")
    validate_manifest_files(manifest_path, manifest)
    if not 0 < split < len(manifest.samples):
        raise ConfigError(
            f"--split must be in 1..{len(manifest.samples) - 1} "
            f"(got {split} for {len(manifest.samples)} samples)")
    base = Path(manifest_path).parent
    train = manifest.samples[:split]
    test = manifest.samples[split:]

    feats = []
    classes = []
    for rec in train:
        img = read_image(base / rec.image)
        labels = read_label_mask(base / rec.labels)
        centers, cls = _patch_centers_for_sample(rec, labels, img, radius, seed)
        for (cx, cy), c in zip(centers, cls):
            feats.append(baseline.extract_patch_features(img, (cx, cy), radius))
            classes.append(c)
    x = np.asarray(feats)
    y = np.asarray(classes, dtype=np.int64)
    present = set(np.unique(y).tolist())
    if not {0, 1, 2}.issubset(present):
        raise GenerationError(
            f"train split (first {split} samples) lacks class(es) "
            f"{sorted({0, 1, 2} - present)}; enlarge the split")
    model = baseline.train_softmax(
        x, y, baseline.TrainConfig(lr=lr, epochs=epochs, l2=l2, seed=seed))

    images_out = []
    for rec in test:
        img = read_image(base / rec.image)
        heat = baseline.sliding_window_heatmap(img, model, radius, stride)
        props = _heatmap_proposals_classed(heat, prob_threshold, min_area)
        images_out.append({
            "index": rec.index,
            "proposals": [{
                "box": list(p.box),
                "class": CLASS_NAMES[p.class_id],
                "score": p.score,
                "centroid": list(p.centroid),
            } for p in props],
        })
    out = {
        "schema_version": PREDICTIONS_SCHEMA_VERSION,
        "task": "detect",
        "split": split,
        "images": images_out,
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    model.save(out_path.with_name(out_path.stem + "_model.json"))
    print(f"wrote detection predictions for {len(test)} images to {out_path}")
    return EXIT_OK


def _sample_keypoints(image_b, valid, k: int, margin: int,
                      min_dist: float) -> np.ndarray:
    """Deterministic keypoints: strongest-gradient grid positions that are
    valid, in-frame with margin, and pairwise at least ``min_dist`` apart."""
    lum = luminance(image_b)
    gmag = gradient_magnitude(lum)
    h, w = lum.shape
    gys, gxs = np.mgrid[margin:h - margin:4, margin:w - margin:4]
    gys = gys.ravel()
    gxs = gxs.ravel()
    ok = valid[gys, gxs]
    gys, gxs = gys[ok], gxs[ok]
    strength = gmag[gys, gxs]
    order = np.lexsort((gxs, gys, -strength))
    chosen: list[tuple[int, int]] = []
    for j in order:
        if len(chosen) >= k:
            break
        x, y = int(gxs[j]), int(gys[j])
        if all((x - ox) ** 2 + (y - oy) ** 2 >= min_dist ** 2 for ox, oy in chosen):
            chosen.append((x, y))
    return np.asarray(chosen, dtype=np.int64).reshape(-1, 2)


def cmd_baseline_track(manifest_path, out_path, window: int, search: int,
                       points_per_pair: int) -> int:
    manifest = read_manifest(manifest_path)
    if manifest.kind != "tracking":
        raise ConfigError("baseline track needs a tracking manifest")
    validate_manifest_files(manifest_path, manifest)
    base = Path(manifest_path).parent
    pairs_out = []
    margin = window // 2 + search + 1
    for rec in manifest.pairs:
        img_a = read_image(base / rec.image_a)
        img_b = read_image(base / rec.image_b)
        flow = flowio.read_flow(base / rec.flow)
        pts = _sample_keypoints(img_b, flow.valid, points_per_pair, margin,
                                min_dist=12.0)
        if pts.shape[0] == 0:
            pairs_out.append({"index": rec.index, "points": []})
            continue
        matches, scores, ok = baseline.ncc_track(img_a, img_b, pts,
                                                 window=window, search=search)
        pairs_out.append({
            "index": rec.index,
            "points": [{
                "query": [int(q[0]), int(q[1])],
                "match": [int(m[0]), int(m[1])],
                "score": float(s),
                "valid": bool(v),
            } for q, m, s, v in zip(pts, matches, scores, ok)],
        })
    out = {
        "schema_version": PREDICTIONS_SCHEMA_VERSION,
        "task": "track",
        "window": window,
        "search": search,
        "pairs": pairs_out,
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    print(f"wrote tracking predictions for {len(manifest.pairs)} pairs to {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval

def _require(cond: bool, path: str, what: str) -> None:
    if not cond:
        raise ConfigError(f"predictions.{path}: {what}")


def _load_predictions(path, task: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"predictions file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"predictions file is not valid JSON: {e}") from e
    _require(isinstance(obj, dict), "", "expected a JSON object")
    _require(obj.get("schema_version") == PREDICTIONS_SCHEMA_VERSION,
             "schema_version", f"expected {PREDICTIONS_SCHEMA_VERSION}")
    _require(obj.get("task") == task, "task", f"expected {task!r}")
    return obj


def _parse_detect_predictions(obj: dict) -> dict[int, list[evalkit.RegionProposal]]:
    _require(isinstance(obj.get("images"), list), "images", "expected a list")
    name_to_id = {"benign": 1, "malignant": 2}
    out: dict[int, list[evalkit.RegionProposal]] = {}
    for i, entry in enumerate(obj["images"]):
        path = f"images[{i}]"
        _require(isinstance(entry, dict), path, "expected an object")
        _require(isinstance(entry.get("index"), int), f"{path}.index",
                 "expected an integer")
        _require(isinstance(entry.get("proposals"), list), f"{path}.proposals",
                 "expected a list")
        props = []
        for j, pr in enumerate(entry["proposals"]):
            ppath = f"{path}.proposals[{j}]"
            _require(isinstance(pr, dict), ppath, "expected an object")
            box = pr.get("box")
            _require(isinstance(box, list) and len(box) == 4
                     and all(isinstance(v, int) for v in box),
                     f"{ppath}.box", "expected 4 integers")
            _require(pr.get("class") in name_to_id, f"{ppath}.class",
                     "expected 'benign' or 'malignant'")
            score = pr.get("score")
            _require(isinstance(score, (int, float)) and 0.0 <= float(score) <= 1.0,
                     f"{ppath}.score", "expected a number in [0, 1]")
            cen = pr.get("centroid")
            _require(isinstance(cen, list) and len(cen) == 2
                     and all(isinstance(v, (int, float)) for v in cen),
                     f"{ppath}.centroid", "expected [x, y]")
            props.append(evalkit.RegionProposal(
                box=tuple(box), class_id=name_to_id[pr["class"]],
                score=float(score), centroid=(float(cen[0]), float(cen[1]))))
        out[entry["index"]] = props
    return out


def cmd_eval_detect(manifest_path, predictions_path, out_path, thresholds,
                    criterion: str, make_overlay: bool, write_csv: bool) -> int:
    manifest = read_manifest(manifest_path)
    if manifest.kind != "detection":
        raise ConfigError("eval detect needs a detection manifest")
    preds = _parse_detect_predictions(_load_predictions(predictions_path, "detect"))
    base = Path(manifest_path).parent
    by_index = {s.index: s for s in manifest.samples}
    unknown = sorted(set(preds) - set(by_index))
    if unknown:
        raise ConfigError(f"predictions.images: unknown sample indices {unknown[:5]}")
    indices = sorted(preds)
    per_image_props = []
    per_image_truth = []
    for idx in indices:
        rec = by_index[idx]
        labels = read_label_mask(base / rec.labels)
        per_image_truth.append(evalkit.truth_regions_from_labels(labels))
        per_image_props.append(preds[idx])
    curve = evalkit.roc_curve(per_image_props, per_image_truth, thresholds,
                              criterion=criterion)
    metrics = {
        "task": "detect",
        "criterion": criterion,
        "num_images": len(indices),
        "num_truth": sum(len(t) for t in per_image_truth),
        **curve.to_dict(),
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    if write_csv:
        with open(out_path.with_suffix(".csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["threshold", "fp_per_image", "tpr"])
            wr.writerows(curve.points)
    if make_overlay:
        odir = out_path.parent / "overlays"
        odir.mkdir(exist_ok=True)
        for idx in indices:
            rec = by_index[idx]
            img = read_image(base / rec.image)
            canvas = overlay.render_detection_overlay(img, preds[idx])
            write_image(odir / f"detect_{idx:05d}.png", canvas)
    print(f"AUC {curve.auc:.4f} over {len(indices)} images -> {out_path}")
    return EXIT_OK


def _parse_track_predictions(obj: dict) -> dict[int, list[dict]]:
    _require(isinstance(obj.get("pairs"), list), "pairs", "expected a list")
    out: dict[int, list[dict]] = {}
    for i, entry in enumerate(obj["pairs"]):
        path = f"pairs[{i}]"
        _require(isinstance(entry, dict), path, "expected an object")
        _require(isinstance(entry.get("index"), int), f"{path}.index",
                 "expected an integer")
        _require(isinstance(entry.get("points"), list), f"{path}.points",
                 "expected a list")
        pts = []
        for j, pt in enumerate(entry["points"]):
            ppath = f"{path}.points[{j}]"
            _require(isinstance(pt, dict), ppath, "expected an object")
            for key in ("query", "match"):
                v = pt.get(key)
                _require(isinstance(v, list) and len(v) == 2
                         and all(isinstance(c, (int, float)) for c in v),
                         f"{ppath}.{key}", "expected [x, y]")
            _require(isinstance(pt.get("valid", True), bool), f"{ppath}.valid",
                     "expected a boolean")
            pts.append({"query": (float(pt["query"][0]), float(pt["query"][1])),
                        "match": (float(pt["match"][0]), float(pt["match"][1])),
                        "valid": bool(pt.get("valid", True))})
        out[entry["index"]] = pts
    return out


def cmd_eval_track(manifest_path, predictions_path, out_path, alphas,
                   make_overlay: bool, write_csv: bool) -> int:
    manifest = read_manifest(manifest_path)
    if manifest.kind != "tracking":
        raise ConfigError("eval track needs a tracking manifest")
    preds = _parse_track_predictions(_load_predictions(predictions_path, "track"))
    base = Path(manifest_path).parent
    by_index = {p.index: p for p in manifest.pairs}
    unknown = sorted(set(preds) - set(by_index))
    if unknown:
        raise ConfigError(f"predictions.pairs: unknown pair indices {unknown[:5]}")
    indices = sorted(preds)
    sizes = {(by_index[idx].width, by_index[idx].height) for idx in indices}
    if len(sizes) > 1:
        raise ConfigError(
            f"pairs under evaluation differ in image size ({sorted(sizes)}); "
            "pooled PCK needs one diagonal")
    predicted = []
    truth = []
    valid = []
    diag = None
    overlay_jobs = []
    for idx in indices:
        rec = by_index[idx]
        flow = flowio.read_flow(base / rec.flow)
        diag = float(np.hypot(rec.width, rec.height))
        qs, ms, cs = [], [], []
        for pt in preds[idx]:
            qx, qy = pt["query"]
            xi, yi = int(round(qx)), int(round(qy))
            if not (0 <= xi < rec.width and 0 <= yi < rec.height):
                raise ConfigError(
                    f"predictions pair {idx}: query ({qx}, {qy}) outside frame")
            if not flow.valid[yi, xi]:
                continue  # no ground truth exists for this query
            t = (qx + float(flow.vectors[yi, xi, 0]),
                 qy + float(flow.vectors[yi, xi, 1]))
            predicted.append(pt["match"])
            truth.append(t)
            valid.append(pt["valid"])
            qs.append(pt["query"])
            ms.append(pt["match"])
            err = np.hypot(pt["match"][0] - t[0], pt["match"][1] - t[1])
            cs.append(bool(pt["valid"] and err <= 0.05 * diag))
        if make_overlay and qs:
            overlay_jobs.append((idx, rec, qs, ms, cs))
    if not predicted:
        raise ConfigError("predictions contain no evaluable keypoints")
    curve = evalkit.pck(np.asarray(predicted), np.asarray(truth), alphas,
                        diag=diag, valid=np.asarray(valid, dtype=bool))
    metrics = {"task": "track", "num_pairs": len(indices), **curve.to_dict()}
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    if write_csv:
        with open(out_path.with_suffix(".csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["alpha", "fraction"])
            wr.writerows(curve.points)
    if make_overlay:
        odir = out_path.parent / "overlays"
        odir.mkdir(exist_ok=True)
        for idx, rec, qs, ms, cs in overlay_jobs:
            img_a = read_image(base / rec.image_a)
            img_b = read_image(base / rec.image_b)
            canvas = overlay.render_tracking_overlay(img_a, img_b, qs, ms, cs)
            write_image(odir / f"track_{idx:05d}.png", canvas)
    at05 = dict(curve.points).get(0.05)
    tail = f", PCK@0.05 {at05:.4f}" if at05 is not None else ""
    print(f"PCK over {curve.keypoint_count} keypoints{tail} -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# poisson-clone

def cmd_poisson_clone(target_path, source_path, mask_path, offset, mode,
                      tol: float, out_path) -> int:
    for p in (target_path, source_path, mask_path):
        if not Path(p).is_file():
            raise AssetError(f"input file not found: {p}")
    target = read_image(target_path)
    source = read_image(source_path)
    mask = read_binary_mask(mask_path)
    request = BlendRequest(target=target, source=source, region=mask,
                           offset=offset, mode=BlendMode(mode))
    region = effective_region(request)
    lost = int(mask.sum() - region.sum())
    if lost > 0:
        print(f"warning: {lost} mask pixels on a border were eroded before "
              f"blending", file=sys.stderr)
    try:
        out, report = seamless_clone_with_report(request, tol=tol)
    except SolveError as e:
        print(json.dumps({"converged": False, "iterations": e.report.iterations,
                          "relative_residual": e.report.relative_residual},
                         sort_keys=True))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    print(json.dumps({"converged": True, "iterations": report.iterations,
                      "relative_residual": report.relative_residual},
                     sort_keys=True))
    write_image(out_path, out)
    return EXIT_OK
