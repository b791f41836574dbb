import numpy as np
import pytest

from lesionforge.synth import BodyAsset, LesionAsset


def rng(seed=0):
    return np.random.default_rng(seed)


def random_image(r, h, w):
    return r.random((h, w, 3))


def smooth_image(r, h, w, base=0.6, amp=0.2):
    """Low-frequency random image, values well inside [0, 1]."""
    from scipy import ndimage

    img = np.empty((h, w, 3))
    for c in range(3):
        plane = ndimage.gaussian_filter(r.standard_normal((h, w)), 4.0)
        peak = np.abs(plane).max()
        img[:, :, c] = base + (amp / peak) * plane if peak > 0 else base
    return np.clip(img, 0.0, 1.0)


def blob_mask(r, h, w, max_radius=None):
    """Random blob-ish region mask strictly inside the frame."""
    max_radius = max_radius or min(h, w) // 3
    cy = int(r.integers(max_radius + 1, h - max_radius - 1))
    cx = int(r.integers(max_radius + 1, w - max_radius - 1))
    radius = float(r.uniform(max_radius * 0.4, max_radius))
    yy, xx = np.mgrid[0:h, 0:w]
    theta = np.arctan2(yy - cy, xx - cx)
    wobble = 1.0 + 0.2 * np.sin(3 * theta + float(r.uniform(0, 2 * np.pi)))
    return np.hypot(xx - cx, yy - cy) <= radius * wobble


def flat_body(tone=0.7, size=96, asset_id="body-flat"):
    img = np.full((size, size, 3), tone)
    skin = np.zeros((size, size), dtype=bool)
    skin[2:size - 2, 2:size - 2] = True
    return BodyAsset(image=img, skin=skin, id=asset_id)


def disc_lesion(tone=0.3, size=21, radius=7, label="malignant",
                asset_id="lesion-disc", background=0.7):
    img = np.full((size, size, 3), background)
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2
    alpha = np.hypot(xx - c, yy - c) <= radius
    img[alpha] = tone
    return LesionAsset(image=img, alpha=alpha, label=label, id=asset_id)


@pytest.fixture
def tiny_catalog():
    from lesionforge.cli.assets import make_body, make_lesion
    from lesionforge.synth import AssetCatalog

    bodies = tuple(make_body(5, f"body_{i}", 128) for i in range(2))
    lesions = tuple(
        make_lesion(5, f"lesion_{i}", "benign" if i % 2 == 0 else "malignant", 40)
        for i in range(4))
    return AssetCatalog(bodies=bodies, lesions=lesions)
