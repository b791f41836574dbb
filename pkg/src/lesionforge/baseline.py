"""Classical detector and tracker baselines.

Detection: hand-crafted 15-dim patch features fed to a multinomial logistic
regression, evaluated densely on a strided grid to produce a class-probability
heatmap.  Tracking: integer-displacement zero-normalized cross-correlation
patch matching.  Both are deterministic for fixed seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .imagecore import CLASS_NAMES, ImageRGB, ensure_rgb, luminance
from .seeds import stream_rng

FEATURE_DIM = 15
FEATURE_SPEC = "rgb-meanstd6.orient8.contrast1/v1"

_N_CLASSES = 3


def extract_patch_features(img: ImageRGB, center: tuple[int, int],
                           radius: int) -> np.ndarray:
    """15-vector describing the window of +-radius around ``center`` (clamped
    to the frame): per-channel mean and std (6), an 8-bin magnitude-weighted
    gradient-orientation histogram normalized to sum 1 when any gradient is
    present (8), and center-minus-ring luminance contrast (1)."""
    img = ensure_rgb(img)
    h, w = img.shape[:2]
    cx, cy = int(center[0]), int(center[1])
    x0, x1 = max(0, cx - radius), min(w - 1, cx + radius)
    y0, y1 = max(0, cy - radius), min(h - 1, cy + radius)
    patch = img[y0:y1 + 1, x0:x1 + 1, :]

    feats = np.zeros(FEATURE_DIM)
    feats[0:3] = patch.mean(axis=(0, 1))
    feats[3:6] = patch.std(axis=(0, 1))

    lum = luminance(patch)
    if lum.shape[0] >= 2 and lum.shape[1] >= 2:
        gx = np.zeros_like(lum)
        gy = np.zeros_like(lum)
        gx[:, :-1] = lum[:, 1:] - lum[:, :-1]
        gy[:-1, :] = lum[1:, :] - lum[:-1, :]
        mag = np.hypot(gx, gy)
        total = mag.sum()
        if total > 0:
            theta = np.arctan2(gy, gx)            # [-pi, pi]
            bins = np.floor((theta + np.pi) / (np.pi / 4.0)).astype(np.int64)
            bins = np.clip(bins, 0, 7)            # theta == +pi folds into bin 7
            hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=8)
            feats[6:14] = hist / total

    # Contrast between the inner box (half radius) and the surrounding ring.
    ph, pw = lum.shape
    ccy, ccx = cy - y0, cx - x0
    half = max(radius // 2, 0)
    ix0, ix1 = max(0, ccx - half), min(pw - 1, ccx + half)
    iy0, iy1 = max(0, ccy - half), min(ph - 1, ccy + half)
    inner = np.zeros((ph, pw), dtype=bool)
    inner[iy0:iy1 + 1, ix0:ix1 + 1] = True
    if inner.all():
        feats[14] = 0.0
    else:
        feats[14] = lum[inner].mean() - lum[~inner].mean()
    return feats


@dataclass
class SoftmaxModel:
    """Multinomial logistic regression over patch features."""

    weights: np.ndarray               # (3, FEATURE_DIM)
    bias: np.ndarray                  # (3,)
    classes: tuple[str, ...] = CLASS_NAMES
    feature_spec: str = FEATURE_SPEC
    loss_trace: np.ndarray | None = field(default=None, repr=False)

    def logits(self, feats: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(feats, dtype=np.float64))
        return x @ self.weights.T + self.bias

    def predict_proba(self, feats: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(feats))

    def to_json(self) -> str:
        return json.dumps({
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "classes": list(self.classes),
            "feature_spec": self.feature_spec,
        }, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SoftmaxModel":
        obj = json.loads(text)
        if obj.get("feature_spec") != FEATURE_SPEC:
            raise ValueError(
                f"model feature spec {obj.get('feature_spec')!r} does not match "
                f"this build ({FEATURE_SPEC})")
        return SoftmaxModel(weights=np.asarray(obj["weights"], dtype=np.float64),
                            bias=np.asarray(obj["bias"], dtype=np.float64),
                            classes=tuple(obj["classes"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path) -> "SoftmaxModel":
        return SoftmaxModel.from_json(Path(path).read_text())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.5
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 0


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_grad(weights: np.ndarray, bias: np.ndarray, x: np.ndarray,
                   y_onehot: np.ndarray, l2: float
                   ) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy with L2 on the weights (bias unregularized), and its
    analytic gradient."""
    n = x.shape[0]
    probs = _softmax(x @ weights.T + bias)
    eps = 1e-12
    loss = float(-(y_onehot * np.log(probs + eps)).sum() / n
                 + 0.5 * l2 * (weights ** 2).sum())
    diff = probs - y_onehot
    gw = diff.T @ x / n + l2 * weights
    gb = diff.sum(axis=0) / n
    return loss, gw, gb


def train_softmax(features: np.ndarray, labels: np.ndarray,
                  config: TrainConfig = TrainConfig()) -> SoftmaxModel:
    """Full-batch gradient descent.  Every class must be present.  A model
    trained with epochs=0 is exactly the seeded initialization.  The loss is
    recorded per epoch in ``loss_trace`` (non-increasing for lr at or below
    the default on [0, 1]-scaled features)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != FEATURE_DIM:
        raise ValueError(f"features must be (N, {FEATURE_DIM})")
    present = set(np.unique(y).tolist())
    if not {0, 1, 2}.issubset(present):
        missing = sorted({0, 1, 2} - present)
        raise ValueError(f"training set is missing class(es) {missing}")
    rng = stream_rng(config.seed, "softmax-init")
    weights = rng.standard_normal((_N_CLASSES, FEATURE_DIM)) * 0.01
    bias = np.zeros(_N_CLASSES)
    y_onehot = np.zeros((x.shape[0], _N_CLASSES))
    y_onehot[np.arange(x.shape[0]), y] = 1.0
    trace = np.empty(config.epochs + 1)
    loss, gw, gb = _loss_and_grad(weights, bias, x, y_onehot, config.l2)
    trace[0] = loss
    for epoch in range(config.epochs):
        weights -= config.lr * gw
        bias -= config.lr * gb
        loss, gw, gb = _loss_and_grad(weights, bias, x, y_onehot, config.l2)
        trace[epoch + 1] = loss
    return SoftmaxModel(weights=weights, bias=bias, loss_trace=trace)


@dataclass(frozen=True)
class Heatmap:
    """Class probabilities on a strided cell grid.

    Cell (iy, ix) sits at image pixel (xs[ix], ys[iy]); the grid geometry
    (stride and offset) is recorded so evaluation can map cells back to
    pixels."""

    probs: np.ndarray                 # (Hc, Wc, C)
    xs: np.ndarray                    # (Wc,) int64 cell-center x pixels
    ys: np.ndarray                    # (Hc,) int64
    stride: int
    offset: tuple[int, int]
    image_size: tuple[int, int]       # (w, h)
    classes: tuple[str, ...] = CLASS_NAMES


def _grid_centers(extent: int, stride: int) -> np.ndarray:
    n = max(1, -(-extent // stride))          # ceil division
    centers = stride // 2 + stride * np.arange(n, dtype=np.int64)
    return np.minimum(centers, extent - 1)


def sliding_window_heatmap(img: ImageRGB, model: SoftmaxModel, radius: int,
                           stride: int) -> Heatmap:
    """Evaluate the model on every grid cell; one probability vector each."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    img = ensure_rgb(img)
    h, w = img.shape[:2]
    xs = _grid_centers(w, stride)
    ys = _grid_centers(h, stride)
    feats = np.empty((len(ys) * len(xs), FEATURE_DIM))
    k = 0
    for cy in ys:
        for cx in xs:
            feats[k] = extract_patch_features(img, (int(cx), int(cy)), radius)
            k += 1
    probs = model.predict_proba(feats).reshape(len(ys), len(xs), _N_CLASSES)
    return Heatmap(probs=probs, xs=xs, ys=ys, stride=stride,
                   offset=(stride // 2, stride // 2), image_size=(w, h))


def ncc_track(img_a: ImageRGB, img_b: ImageRGB, points: np.ndarray,
              window: int = 11, search: int = 8
              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Track query points from img_b into img_a.

    For each (x, y) in ``points`` the luminance window of ``window`` pixels
    around it is matched against every integer displacement within +-search
    in img_a by zero-normalized cross correlation; ties break by smaller
    displacement norm, then scan order.  Returns (matched points in img_a
    (M, 2) int64, ZNCC scores (M,), valid (M,) bool); a point is invalid when
    its window has zero variance or no candidate window does.
    """
    if window < 1 or window % 2 != 1:
        raise ValueError("window must be odd and positive")
    if search < 0:
        raise ValueError("search must be >= 0")
    img_a = ensure_rgb(img_a)
    img_b = ensure_rgb(img_b)
    lum_a = np.ascontiguousarray(luminance(img_a))
    lum_b = np.ascontiguousarray(luminance(img_b))
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    disp, score, ok = kernels.ncc_search(lum_a, lum_b, pts, window // 2, search)
    matches = pts + disp
    return matches, score, ok
