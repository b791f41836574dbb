"""Synthetic dataset engine.

Detection samples: a lesion crop is placed on a segmented body image at a
position chosen by local feature matching (the lesion's border ring should
look like the skin it lands on), augmented, and seamlessly cloned in; the
label mask records each blended support at its class id.

Tracking pairs: a detection sample is re-rendered through a random smooth
deformation (small affine pose change plus a Gaussian-smoothed elastic
field); the exact generating field is kept as dense ground truth.  All
randomness flows through named streams of one 64-bit seed, so identical
inputs give bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import kernels
from .imagecore import (
    CLASS_BENIGN,
    CLASS_MALIGNANT,
    AffineTransform,
    BinaryMask,
    GrayImage,
    ImageRGB,
    LabelMask,
    adjust_brightness_contrast,
    ensure_labels,
    ensure_mask,
    ensure_rgb,
    gradient_magnitude,
    luminance,
    warp_image,
)
from .poissonblend import BlendMode, BlendRequest, effective_region, seamless_clone
from .seeds import derive_seed, stream_rng

LABEL_CLASS_IDS = {"benign": CLASS_BENIGN, "malignant": CLASS_MALIGNANT}


class PlacementError(RuntimeError):
    """No valid placement candidate exists (skin mask too small)."""


class AugmentError(RuntimeError):
    """Augmentation produced a lesion outside the configured footprint."""


@dataclass(frozen=True)
class LesionAsset:
    image: ImageRGB
    alpha: BinaryMask
    label: str                    # "benign" | "malignant"
    id: str

    def __post_init__(self):
        object.__setattr__(self, "image", ensure_rgb(self.image))
        object.__setattr__(self, "alpha", ensure_mask(self.alpha, like=self.image))
        if self.label not in LABEL_CLASS_IDS:
            raise ValueError(f"unknown lesion label {self.label!r}")
        if not self.alpha.any():
            raise ValueError(f"lesion {self.id!r} has an empty alpha mask")

    @property
    def class_id(self) -> int:
        return LABEL_CLASS_IDS[self.label]


@dataclass(frozen=True)
class BodyAsset:
    image: ImageRGB
    skin: BinaryMask
    id: str

    def __post_init__(self):
        object.__setattr__(self, "image", ensure_rgb(self.image))
        object.__setattr__(self, "skin", ensure_mask(self.skin, like=self.image))
        if not self.skin.any():
            raise ValueError(f"body {self.id!r} has an empty skin mask")


@dataclass(frozen=True)
class AssetCatalog:
    bodies: tuple[BodyAsset, ...]
    lesions: tuple[LesionAsset, ...]

    def body(self, asset_id: str) -> BodyAsset:
        for b in self.bodies:
            if b.id == asset_id:
                return b
        raise KeyError(asset_id)

    def lesion(self, asset_id: str) -> LesionAsset:
        for l in self.lesions:
            if l.id == asset_id:
                return l
        raise KeyError(asset_id)


@dataclass(frozen=True)
class Placement:
    lesion_id: str
    center: tuple[int, int]       # (x, y) pixel
    scale: float
    rotation: float               # radians
    label: str
    score: float


@dataclass(frozen=True)
class SyntheticSample:
    image: ImageRGB
    labels: LabelMask
    placements: tuple[Placement, ...]
    seed: int
    body_id: str
    lesion_ids: tuple[str, ...]


@dataclass(frozen=True)
class FlowField:
    """Dense backward shift field: pixel x in the warped image corresponds to
    x + vectors[x] in the original.  ``valid`` is false exactly where that
    position leaves [0, w-1] x [0, h-1]."""

    vectors: np.ndarray           # (H, W, 2) float64, (dx, dy)
    valid: BinaryMask

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 3 or vec.shape[2] != 2:
            raise ValueError(f"flow vectors must be (H, W, 2), got {vec.shape}")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "valid", ensure_mask(self.valid, like=vec))

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @staticmethod
    def from_vectors(vectors: np.ndarray) -> "FlowField":
        vec = np.asarray(vectors, dtype=np.float64)
        h, w = vec.shape[:2]
        xs = np.arange(w, dtype=np.float64)[None, :] + vec[:, :, 0]
        ys = np.arange(h, dtype=np.float64)[:, None] + vec[:, :, 1]
        valid = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)
        return FlowField(vectors=vec, valid=valid)

    @staticmethod
    def zero(width: int, height: int) -> "FlowField":
        return FlowField(vectors=np.zeros((height, width, 2)),
                         valid=np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class TrackingPair:
    image_a: ImageRGB
    image_b: ImageRGB
    labels_a: LabelMask
    labels_b: LabelMask
    flow_ab: FlowField            # x in image_b maps to x + flow(x) in image_a
    seed: int
    perturbed_zone: BinaryMask    # texture intentionally changed; excluded from
                                  # photometric-consistency checks
    dropped: tuple[str, ...] = ()  # lesion ids whose perturbation left the skin


@dataclass(frozen=True)
class AugmentParams:
    """Draw ranges for one lesion augmentation.  Defaults are the identity;
    ``augment_lesion`` returns its input bit-exactly when every range is
    degenerate at the identity and flipping is disabled."""

    rotation: tuple[float, float] = (0.0, 0.0)
    scale: tuple[float, float] = (1.0, 1.0)
    brightness: tuple[float, float] = (0.0, 0.0)
    contrast: tuple[float, float] = (1.0, 1.0)
    flip: bool = False
    max_footprint: int | None = None

    def is_identity(self) -> bool:
        return (self.rotation == (0.0, 0.0) and self.scale == (1.0, 1.0)
                and self.brightness == (0.0, 0.0) and self.contrast == (1.0, 1.0)
                and not self.flip)


@dataclass(frozen=True)
class DeformParams:
    """Pose + elastic deformation ranges; all-zero params mean a zero field."""

    translation: float = 0.0      # max |tx|, |ty| in pixels
    rotation: float = 0.0         # max |theta| in radians
    scale_jitter: float = 0.0     # scale drawn in [1 - j, 1 + j]
    elastic_magnitude: float = 0.0  # max elastic vector norm in pixels
    smoothness_sigma: float = 8.0   # Gaussian sigma of the elastic field

    def __post_init__(self):
        if self.elastic_magnitude < 0:
            raise ValueError("elastic_magnitude must be >= 0")
        if self.smoothness_sigma <= 0:
            raise ValueError("smoothness_sigma must be > 0")


@dataclass(frozen=True)
class PerturbParams:
    """Per-lesion size perturbation for tracking pairs: each lesion is
    re-blended at its warped location with scale multiplied by a draw from
    [1 - scale_jitter, 1 + scale_jitter].  Zero disables perturbation."""

    scale_jitter: float = 0.25


@dataclass(frozen=True)
class SynthConfig:
    lesions_per_image: tuple[int, int] = (1, 3)
    stride: int = 8
    min_sep: float = 56.0
    ring_width: int = 2
    augment_rotation: tuple[float, float] = (-math.pi, math.pi)
    augment_scale: tuple[float, float] = (0.7, 1.4)
    augment_brightness: tuple[float, float] = (-0.1, 0.1)
    augment_contrast: tuple[float, float] = (0.8, 1.25)
    augment_flip: bool = True
    max_footprint: int = 160
    body_brightness: tuple[float, float] = (-0.05, 0.05)
    body_contrast: tuple[float, float] = (0.9, 1.1)
    blend_mode: BlendMode = BlendMode.IMPORT_GRADIENTS
    blend_tol: float = 1e-8


def lesion_circumradius(lesion: LesionAsset) -> float:
    """Largest distance from the patch center to any alpha pixel; the patch
    rotates about its center, so this bounds the support at any rotation."""
    h, w = lesion.alpha.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.nonzero(lesion.alpha)
    return float(np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2).max())


def _border_ring(alpha: BinaryMask, width: int) -> BinaryMask:
    """Alpha pixels within ``width`` steps of the support boundary."""
    if width < 1:
        raise ValueError("ring width must be >= 1")
    eroded = ndimage.binary_erosion(alpha, iterations=width, border_value=0)
    ring = alpha & ~eroded
    return ring if ring.any() else alpha


def score_placements(body: BodyAsset, lesion: LesionAsset, stride: int,
                     margin_scale: float = 1.0,
                     ring_width: int = 2) -> tuple[GrayImage, BinaryMask]:
    """Score every stride-spaced candidate center by local feature matching.

    The lesion descriptor is (luminance mean, luminance std, mean gradient
    magnitude) over its alpha border ring; each candidate's descriptor is the
    same triple over the body patch under the lesion footprint.  Score is the
    negative Euclidean distance after normalizing each component by its
    spread across the valid candidates.  Candidates whose (margin_scale x
    circumradius) disc leaves the skin mask or the frame are invalid.

    Returns a full-resolution score plane and a validity mask; only
    stride-grid positions are ever valid.  Raises PlacementError when no
    candidate is valid.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    h, w = body.skin.shape
    radius = lesion_circumradius(lesion) * float(margin_scale)
    margin = int(math.ceil(radius)) + 1

    skin_dist = ndimage.distance_transform_edt(body.skin)
    gys, gxs = np.mgrid[0:h:stride, 0:w:stride]
    gys = gys.ravel()
    gxs = gxs.ravel()
    ok = (skin_dist[gys, gxs] > radius)
    ok &= (gxs >= margin) & (gxs < w - margin) & (gys >= margin) & (gys < h - margin)
    if not ok.any():
        raise PlacementError(
            f"no valid placement for lesion {lesion.id!r} on body {body.id!r}")
    cys = gys[ok].astype(np.int64)
    cxs = gxs[ok].astype(np.int64)

    # Lesion-side descriptor over the border ring.
    lum_l = luminance(lesion.image)
    gmag_l = gradient_magnitude(lum_l)
    ring = _border_ring(lesion.alpha, ring_width)
    ring_vals = lum_l[ring]
    lesion_desc = np.array([ring_vals.mean(), ring_vals.std(), gmag_l[ring].mean()])

    # Body-side descriptors under the footprint, one per candidate.
    lum_b = luminance(body.image)
    gmag_b = gradient_magnitude(lum_b)
    ph, pw = lesion.alpha.shape
    ays, axs = np.nonzero(lesion.alpha)
    dys = (ays - (ph - 1) // 2).astype(np.int64)
    dxs = (axs - (pw - 1) // 2).astype(np.int64)
    stats = kernels.footprint_stats(lum_b, gmag_b, dys, dxs, cys, cxs)

    diff = stats - lesion_desc[None, :]
    spread = stats.std(axis=0)
    spread = np.where(spread > 1e-12, spread, 1.0)
    dist = np.sqrt(((diff / spread[None, :]) ** 2).sum(axis=1))

    scores = np.full((h, w), -np.inf)
    validity = np.zeros((h, w), dtype=bool)
    scores[cys, cxs] = -dist
    validity[cys, cxs] = True
    return scores, validity


def select_placements(scores: GrayImage, validity: BinaryMask,
                      lesion: LesionAsset, k: int, min_sep: float,
                      rng_seed: int,
                      scale_range: tuple[float, float] = (1.0, 1.0),
                      rotation_range: tuple[float, float] = (0.0, 0.0),
                      occupied: list[tuple[int, int]] | None = None
                      ) -> list[Placement]:
    """Greedy score-ordered selection of up to ``k`` centers at least
    ``min_sep`` apart (also from any ``occupied`` centers); ties break by
    row-major position.  Scale and rotation are drawn per placement from the
    seeded stream.  Returns fewer than k when candidates run out."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ys, xs = np.nonzero(validity)
    if ys.size == 0:
        return []
    vals = scores[ys, xs]
    order = np.lexsort((xs, ys, -vals))   # score desc, then row-major
    chosen: list[tuple[int, int]] = list(occupied or [])
    out: list[Placement] = []
    rng = stream_rng(rng_seed, "placement-draws")
    for j in order:
        if len(out) >= k:
            break
        cx, cy = int(xs[j]), int(ys[j])
        if any((cx - ox) ** 2 + (cy - oy) ** 2 < min_sep ** 2 for ox, oy in chosen):
            continue
        scale = float(rng.uniform(scale_range[0], scale_range[1]))
        rotation = float(rng.uniform(rotation_range[0], rotation_range[1]))
        out.append(Placement(lesion_id=lesion.id, center=(cx, cy), scale=scale,
                             rotation=rotation, label=lesion.label,
                             score=float(vals[j])))
        chosen.append((cx, cy))
    return out


def augment_lesion(lesion: LesionAsset, p: AugmentParams, rng_seed: int) -> LesionAsset:
    """Rotate / flip / scale / photometrically jitter a lesion, resampling the
    alpha mask through the same geometric warp.  Identity params return the
    input bit-exactly.  Draw order: rotation, scale, flip, brightness,
    contrast."""
    if p.scale[0] <= 0:
        raise ValueError("scale range must be positive")
    if p.is_identity():
        return replace(lesion, image=lesion.image.copy(), alpha=lesion.alpha.copy())
    rng = stream_rng(rng_seed, "augment-draws")
    theta = float(rng.uniform(p.rotation[0], p.rotation[1]))
    scale = float(rng.uniform(p.scale[0], p.scale[1]))
    do_flip = bool(p.flip and rng.random() < 0.5)
    brightness = float(rng.uniform(p.brightness[0], p.brightness[1]))
    contrast = float(rng.uniform(p.contrast[0], p.contrast[1]))

    h, w = lesion.alpha.shape
    cos_t, sin_t = abs(math.cos(theta)), abs(math.sin(theta))
    # Tolerance keeps a 2*pi rotation from spuriously growing the canvas.
    out_w = max(1, int(math.ceil(scale * (w * cos_t + h * sin_t) - 1e-9)))
    out_h = max(1, int(math.ceil(scale * (w * sin_t + h * cos_t) - 1e-9)))
    if p.max_footprint is not None and max(out_w, out_h) > p.max_footprint:
        raise AugmentError(
            f"augmented lesion {lesion.id!r} is {out_w}x{out_h}, over the "
            f"max footprint {p.max_footprint}")

    # Backward map: output -> source, inverse rotation/scale about centers.
    c_out = ((out_w - 1) / 2.0, (out_h - 1) / 2.0)
    c_src = ((w - 1) / 2.0, (h - 1) / 2.0)
    inv = 1.0 / scale
    ct, st = math.cos(-theta), math.sin(-theta)
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    ux = (xs - c_out[0]) * inv
    uy = (ys - c_out[1]) * inv
    sx = ct * ux - st * uy + c_src[0]
    sy = st * ux + ct * uy + c_src[1]
    if do_flip:
        sx = (w - 1) - sx

    img = kernels.bilinear_gather(lesion.image, sx.ravel(), sy.ravel())
    img = img.reshape(out_h, out_w, 3)
    alpha_f = kernels.bilinear_gather(
        lesion.alpha.astype(np.float64)[:, :, None], sx.ravel(), sy.ravel())
    alpha = alpha_f.reshape(out_h, out_w) > 0.5
    # Sampling clamps at the frame; anything mapping outside the source patch
    # is not lesion support.
    inside = (sx >= -0.5) & (sx <= w - 0.5) & (sy >= -0.5) & (sy <= h - 0.5)
    alpha &= inside
    img = adjust_brightness_contrast(img, brightness, contrast)
    if not alpha.any():
        raise AugmentError(f"augmentation erased the alpha support of {lesion.id!r}")
    return replace(lesion, image=img, alpha=alpha)


def _paste_offset(center: tuple[int, int], size: tuple[int, int]) -> tuple[int, int]:
    """Integer offset placing a patch of (w, h) with its center pixel at
    ``center``."""
    cx, cy = center
    w, h = size
    return cx - (w - 1) // 2, cy - (h - 1) // 2


def synth_detection_sample(body: BodyAsset, lesions: list[LesionAsset] | tuple,
                           config: SynthConfig, seed: int) -> SyntheticSample:
    """Generate one detection sample: jitter the body, pick lesions, place
    them by feature matching, augment and blend each, and paint the label
    mask with the blended supports.  Fully determined by (assets, config,
    seed)."""
    if config.lesions_per_image[0] > 0 and not lesions:
        raise ValueError("at least one lesion asset is required")
    rng_count = stream_rng(seed, "count")
    rng_body = stream_rng(seed, "body-jitter")
    lo, hi = config.lesions_per_image
    n = int(rng_count.integers(lo, hi + 1))
    brightness = float(rng_body.uniform(*config.body_brightness))
    contrast = float(rng_body.uniform(*config.body_contrast))
    canvas = adjust_brightness_contrast(body.image, brightness, contrast)
    jittered = replace(body, image=canvas)

    labels = np.zeros(body.skin.shape, dtype=np.uint8)
    occupied: list[tuple[int, int]] = []
    placements: list[Placement] = []
    used_ids: list[str] = []
    for i in range(n):
        rng_pick = stream_rng(seed, "lesion-pick", i)
        lesion = lesions[int(rng_pick.integers(len(lesions)))]
        scores, validity = score_placements(
            jittered, lesion, config.stride,
            margin_scale=config.augment_scale[1], ring_width=config.ring_width)
        picked = select_placements(
            scores, validity, lesion, k=1, min_sep=config.min_sep,
            rng_seed=derive_seed(seed, "select", i),
            scale_range=config.augment_scale,
            rotation_range=config.augment_rotation,
            occupied=occupied)
        if not picked:
            continue   # candidates exhausted for this slot, not an error
        pl = picked[0]
        aug = augment_lesion(
            lesion,
            AugmentParams(rotation=(pl.rotation, pl.rotation),
                          scale=(pl.scale, pl.scale),
                          brightness=config.augment_brightness,
                          contrast=config.augment_contrast,
                          flip=config.augment_flip,
                          max_footprint=config.max_footprint),
            rng_seed=derive_seed(seed, "augment", i))
        ah, aw = aug.alpha.shape
        offset = _paste_offset(pl.center, (aw, ah))
        request = BlendRequest(target=canvas, source=aug.image,
                               region=aug.alpha, offset=offset,
                               mode=config.blend_mode)
        support = effective_region(request)
        canvas = seamless_clone(request, tol=config.blend_tol)
        sy, sx = np.nonzero(support)
        labels[sy + offset[1], sx + offset[0]] = aug.class_id
        occupied.append(pl.center)
        placements.append(pl)
        used_ids.append(lesion.id)
    return SyntheticSample(image=canvas, labels=labels,
                           placements=tuple(placements), seed=seed,
                           body_id=body.id, lesion_ids=tuple(used_ids))


def affine_to_flow(transform: AffineTransform, width: int, height: int) -> np.ndarray:
    """Backward flow vectors realizing an affine map: flow(x) = A(x) - x."""
    transform.require_invertible()
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    sx, sy = transform.apply(xs, ys)
    return np.stack([sx - xs, sy - ys], axis=2)


def _elastic_component(width: int, height: int, sigma: float, magnitude: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Gaussian-smoothed white-noise vectors rescaled so the largest norm is
    exactly ``magnitude`` (or zero when magnitude is zero)."""
    if magnitude <= 0.0:
        return np.zeros((height, width, 2))
    noise = rng.standard_normal((height, width, 2))
    smooth = np.empty_like(noise)
    smooth[:, :, 0] = ndimage.gaussian_filter(noise[:, :, 0], sigma)
    smooth[:, :, 1] = ndimage.gaussian_filter(noise[:, :, 1], sigma)
    norms = np.sqrt(smooth[:, :, 0] ** 2 + smooth[:, :, 1] ** 2)
    peak = norms.max()
    if peak > 0:
        smooth *= magnitude / peak
    return smooth


def make_deformation(width: int, height: int, p: DeformParams,
                     rng_seed: int) -> FlowField:
    """Random smooth deformation: affine pose component plus elastic
    component, with validity computed from the summed field.  Draw order:
    tx, ty, rotation, scale, then elastic noise."""
    rng = stream_rng(rng_seed, "deform-draws")
    tx = float(rng.uniform(-p.translation, p.translation)) if p.translation else 0.0
    ty = float(rng.uniform(-p.translation, p.translation)) if p.translation else 0.0
    theta = float(rng.uniform(-p.rotation, p.rotation)) if p.rotation else 0.0
    scale = (float(rng.uniform(1.0 - p.scale_jitter, 1.0 + p.scale_jitter))
             if p.scale_jitter else 1.0)
    center = ((width - 1) / 2.0, (height - 1) / 2.0)
    pose = AffineTransform.rotation_scale_about(theta, scale, center)
    pose = AffineTransform(pose.matrix + np.array([[0.0, 0.0, tx], [0.0, 0.0, ty]]))
    vectors = affine_to_flow(pose, width, height)
    vectors += _elastic_component(width, height, p.smoothness_sigma,
                                  p.elastic_magnitude, rng)
    return FlowField.from_vectors(vectors)


def _warped_center(center: tuple[int, int], flow: FlowField) -> tuple[int, int]:
    """Approximate location in the warped image of a point ``center`` in the
    original, by fixed-point iteration of c_b = c_a - flow(c_b)."""
    cx, cy = float(center[0]), float(center[1])
    bx, by = cx, cy
    h, w = flow.valid.shape
    for _ in range(3):
        out = kernels.bilinear_gather(flow.vectors, np.array([bx]), np.array([by]))
        bx = cx - float(out[0, 0])
        by = cy - float(out[0, 1])
    bx = min(max(bx, 0.0), w - 1.0)
    by = min(max(by, 0.0), h - 1.0)
    return int(math.floor(bx + 0.5)), int(math.floor(by + 0.5))


def synth_tracking_pair(sample: SyntheticSample, p: DeformParams,
                        per_lesion: PerturbParams, seed: int, *,
                        catalog: AssetCatalog | None = None,
                        brightness: tuple[float, float] = (0.0, 0.0),
                        contrast: tuple[float, float] = (1.0, 1.0),
                        flow: FlowField | None = None) -> TrackingPair:
    """Derive a tracking pair from a detection sample.

    image_a is the sample itself; image_b is its backward warp under a random
    deformation, optionally with per-lesion size perturbation (each lesion
    re-blended at its warped center with a jittered scale) and photometric
    jitter.  ``flow_ab`` stores the exact generating field; labels_b is the
    nearest-neighbor warp of labels_a.  A perturbed lesion whose new support
    leaves the warped skin region is dropped from perturbation (recorded in
    ``dropped``), never an error.  Pass ``flow`` to substitute a known field
    for the drawn one.
    """
    image_a = sample.image
    labels_a = ensure_labels(sample.labels)
    h, w = labels_a.shape
    if flow is None:
        flow = make_deformation(w, h, p, derive_seed(seed, "flow"))
    elif flow.valid.shape != (h, w):
        raise ValueError("substitute flow does not match the sample size")
    image_b = warp_image(image_a, flow)
    labels_b = kernels.nearest_warp_labels(labels_a, flow.vectors, flow.valid)

    perturbed_zone = np.zeros((h, w), dtype=bool)
    dropped: list[str] = []
    if per_lesion.scale_jitter > 0.0 and sample.placements:
        if catalog is None:
            raise ValueError("per-lesion perturbation needs the asset catalog")
        body = catalog.body(sample.body_id)
        skin_b = kernels.nearest_warp_labels(
            body.skin.astype(np.uint8), flow.vectors, flow.valid) > 0
        skin_dist = ndimage.distance_transform_edt(skin_b)
        for i, pl in enumerate(sample.placements):
            rng = stream_rng(seed, "perturb", i)
            factor = float(rng.uniform(1.0 - per_lesion.scale_jitter,
                                       1.0 + per_lesion.scale_jitter))
            lesion = catalog.lesion(pl.lesion_id)
            new_scale = pl.scale * factor
            center_b = _warped_center(pl.center, flow)
            radius = lesion_circumradius(lesion) * new_scale
            margin = int(math.ceil(radius)) + 1
            cx, cy = center_b
            in_frame = (margin <= cx < w - margin and margin <= cy < h - margin)
            if not in_frame or skin_dist[cy, cx] <= radius:
                dropped.append(pl.lesion_id)
                continue
            aug = augment_lesion(
                lesion,
                AugmentParams(rotation=(pl.rotation, pl.rotation),
                              scale=(new_scale, new_scale)),
                rng_seed=derive_seed(seed, "perturb-augment", i))
            ah, aw = aug.alpha.shape
            offset = _paste_offset(center_b, (aw, ah))
            request = BlendRequest(target=image_b, source=aug.image,
                                   region=aug.alpha, offset=offset)
            support = effective_region(request)
            image_b = seamless_clone(request)
            sy, sx = np.nonzero(support)
            perturbed_zone[sy + offset[1], sx + offset[0]] = True
            # The old appearance of this lesion also changed: mask its warped
            # support (conservatively, the scaled circumradius disc).
            old_r = int(math.ceil(lesion_circumradius(lesion) * pl.scale)) + 2
            yy, xx = np.ogrid[0:h, 0:w]
            perturbed_zone |= ((xx - cx) ** 2 + (yy - cy) ** 2) <= old_r ** 2

    rng_jit = stream_rng(seed, "pair-jitter")
    b_draw = float(rng_jit.uniform(*brightness))
    c_draw = float(rng_jit.uniform(*contrast))
    if not (b_draw == 0.0 and c_draw == 1.0):
        image_b = adjust_brightness_contrast(image_b, b_draw, c_draw)
    if perturbed_zone.any():
        perturbed_zone = ndimage.binary_dilation(perturbed_zone, iterations=2)

    return TrackingPair(image_a=image_a, image_b=image_b, labels_a=labels_a,
                        labels_b=labels_b, flow_ab=flow, seed=seed,
                        perturbed_zone=perturbed_zone, dropped=tuple(dropped))
