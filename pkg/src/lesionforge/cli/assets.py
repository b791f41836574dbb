"""Procedural asset generation and catalog I/O.

Bodies are textured skin fields (smooth mottle + fine grain + gentle shading)
with a superelliptical skin mask over a dark backdrop.  Lesions are radial
blobs on a skin-toned patch: benign ones are round and evenly brown,
malignant ones are darker, irregular, and variegated.  Everything is
deterministic in the seed, so the whole benchmark runs with zero external
data.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..imagecore import (
    read_binary_mask,
    read_image,
    write_binary_mask,
    write_image,
)
from ..seeds import stream_rng
from ..synth import AssetCatalog, BodyAsset, LesionAsset
from .errors import AssetError

CATALOG_NAME = "catalog.json"


def _smooth_noise(rng, shape, sigma, amplitude):
    noise = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    peak = np.abs(noise).max()
    return noise * (amplitude / peak) if peak > 0 else noise


def make_body(seed: int, asset_id: str, size: int = 256) -> BodyAsset:
    """Full-frame textured skin rectangle (smooth mottle, fine grain, gentle
    shading); the segmentation mask is the frame inset by a few pixels."""
    rng = stream_rng(seed, "body", asset_id)
    base_r = rng.uniform(0.68, 0.82)
    base = np.array([base_r, base_r * rng.uniform(0.78, 0.86),
                     base_r * rng.uniform(0.60, 0.72)])
    img = np.empty((size, size, 3))
    img[:] = base
    mottle = _smooth_noise(rng, (size, size), sigma=size / 14, amplitude=0.055)
    grain = _smooth_noise(rng, (size, size), sigma=1.2, amplitude=0.02)
    shade = np.linspace(-0.03, 0.03, size)[:, None] * rng.choice([-1.0, 1.0])
    lum_field = mottle + grain + shade
    img += lum_field[:, :, None] * np.array([1.0, 0.95, 0.9])

    inset = max(2, size // 48)
    skin = np.zeros((size, size), dtype=bool)
    skin[inset:size - inset, inset:size - inset] = True
    return BodyAsset(image=np.clip(img, 0.0, 1.0), skin=skin, id=asset_id)


def make_lesion(seed: int, asset_id: str, label: str, size: int = 48) -> LesionAsset:
    rng = stream_rng(seed, "lesion", asset_id)
    c = (size - 1) / 2
    yy, xx = np.mgrid[0:size, 0:size]
    theta = np.arctan2(yy - c, xx - c)
    r = np.hypot(xx - c, yy - c)

    base_radius = rng.uniform(size * 0.22, size * 0.32)
    if label == "malignant":
        wobble = sum(rng.uniform(0.05, 0.12) * np.sin(k * theta + rng.uniform(0, 2 * np.pi))
                     for k in range(2, 7))
        tone = np.array([rng.uniform(0.22, 0.30), rng.uniform(0.13, 0.19),
                         rng.uniform(0.10, 0.16)])
    else:
        wobble = (rng.uniform(0.02, 0.06) * np.sin(2 * theta + rng.uniform(0, 2 * np.pi))
                  + rng.uniform(0.01, 0.04) * np.sin(3 * theta + rng.uniform(0, 2 * np.pi)))
        tone = np.array([rng.uniform(0.42, 0.52), rng.uniform(0.28, 0.36),
                         rng.uniform(0.20, 0.28)])
    radius = base_radius * (1.0 + wobble)
    alpha = r <= radius

    # Skin-toned patch background so import-gradient blending sees gentle
    # edges around the support.
    skin_r = rng.uniform(0.70, 0.80)
    patch = np.empty((size, size, 3))
    patch[:] = np.array([skin_r, skin_r * 0.82, skin_r * 0.66])
    patch += _smooth_noise(rng, (size, size), sigma=3.0, amplitude=0.03)[:, :, None]

    # Soft-edged blob: feather over ~1.5 px, darker toward the center.
    soft = np.clip((radius - r) / 1.5, 0.0, 1.0)
    depth = np.clip((radius - r) / np.maximum(radius, 1e-6), 0.0, 1.0)
    color = tone[None, None, :] * (1.0 - 0.25 * depth[:, :, None])
    if label == "malignant":
        blotch = _smooth_noise(rng, (size, size), sigma=2.5, amplitude=1.0)
        color = color * (1.0 + 0.35 * blotch[:, :, None])
    patch = patch * (1.0 - soft[:, :, None]) + color * soft[:, :, None]
    patch += _smooth_noise(rng, (size, size), sigma=1.0, amplitude=0.012)[:, :, None]
    return LesionAsset(image=np.clip(patch, 0.0, 1.0), alpha=alpha,
                       label=label, id=asset_id)


def generate_assets(out_dir, seed: int, n_bodies: int = 10, n_lesions: int = 16,
                    body_size: int = 256, lesion_size: int = 48) -> Path:
    """Write a full asset catalog; returns the catalog path."""
    out = Path(out_dir)
    (out / "bodies").mkdir(parents=True, exist_ok=True)
    (out / "lesions").mkdir(parents=True, exist_ok=True)
    bodies = []
    for i in range(n_bodies):
        asset_id = f"body_{i:03d}"
        body = make_body(seed, asset_id, body_size)
        write_image(out / "bodies" / f"{asset_id}.png", body.image)
        write_binary_mask(out / "bodies" / f"{asset_id}_skin.png", body.skin)
        bodies.append({"id": asset_id, "image": f"bodies/{asset_id}.png",
                       "skin": f"bodies/{asset_id}_skin.png"})
    lesions = []
    for i in range(n_lesions):
        label = "benign" if i < (n_lesions + 1) // 2 else "malignant"
        asset_id = f"lesion_{i:03d}"
        lesion = make_lesion(seed, asset_id, label, lesion_size)
        write_image(out / "lesions" / f"{asset_id}.png", lesion.image)
        write_binary_mask(out / "lesions" / f"{asset_id}_alpha.png", lesion.alpha)
        lesions.append({"id": asset_id, "label": label,
                        "image": f"lesions/{asset_id}.png",
                        "alpha": f"lesions/{asset_id}_alpha.png"})
    catalog_path = out / CATALOG_NAME
    catalog_path.write_text(json.dumps(
        {"schema_version": 1, "seed": seed, "bodies": bodies, "lesions": lesions},
        sort_keys=True, indent=2) + "\n")
    return catalog_path


def load_catalog(assets_dir) -> AssetCatalog:
    base = Path(assets_dir)
    catalog_path = base / CATALOG_NAME
    if not catalog_path.is_file():
        raise AssetError(f"asset catalog not found: {catalog_path}")
    try:
        obj = json.loads(catalog_path.read_text())
        bodies = tuple(
            BodyAsset(image=read_image(base / b["image"]),
                      skin=read_binary_mask(base / b["skin"]), id=b["id"])
            for b in obj["bodies"])
        lesions = tuple(
            LesionAsset(image=read_image(base / l["image"]),
                        alpha=read_binary_mask(base / l["alpha"]),
                        label=l["label"], id=l["id"])
            for l in obj["lesions"])
    except (KeyError, ValueError, OSError) as e:
        raise AssetError(f"cannot load asset catalog from {base}: {e}") from e
    if not bodies or not lesions:
        raise AssetError(f"asset catalog at {base} has no bodies or no lesions")
    return AssetCatalog(bodies=bodies, lesions=lesions)
