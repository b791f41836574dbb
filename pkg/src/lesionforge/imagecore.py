"""Raster primitives shared by every pipeline stage.

Images are plain numpy arrays with fixed conventions:

* ``ImageRGB``   -- float64, shape (H, W, 3), channel values in [0, 1]
* ``GrayImage``  -- float64, shape (H, W)
* ``BinaryMask`` -- bool, shape (H, W)
* ``LabelMask``  -- uint8, shape (H, W), class ids 0=background, 1=benign,
  2=malignant

Arrays are treated as immutable values once constructed; every operation here
is a pure function and safe to call concurrently.  Warping is backward (the
output pixel at x pulls from the source at x + flow(x)) and out-of-frame
coordinates clamp to the nearest edge pixel.  Channel values stay real-valued
through the pipeline; 8-bit quantization happens only at the PNG boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from . import kernels

ImageRGB = NDArray[np.float64]
GrayImage = NDArray[np.float64]
BinaryMask = NDArray[np.bool_]
LabelMask = NDArray[np.uint8]

CLASS_BACKGROUND = 0
CLASS_BENIGN = 1
CLASS_MALIGNANT = 2
CLASS_NAMES = ("background", "benign", "malignant")

# Rec. 601 luma weights, used for every luminance plane in the repo.
_LUMA = (0.299, 0.587, 0.114)


def ensure_rgb(img: np.ndarray) -> ImageRGB:
    """Validate an (H, W, 3) float image and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty (H, W, 3) image, got shape {arr.shape}")
    return arr


def ensure_mask(mask: np.ndarray, like: np.ndarray | None = None) -> BinaryMask:
    """Validate a 2-D boolean mask, optionally against a reference raster."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {arr.shape}")
    if like is not None and arr.shape != like.shape[:2]:
        raise ValueError(f"mask shape {arr.shape} does not match image {like.shape[:2]}")
    return arr.astype(bool)


def ensure_labels(labels: np.ndarray) -> LabelMask:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D label mask, got shape {arr.shape}")
    arr = arr.astype(np.uint8)
    if arr.max(initial=0) > CLASS_MALIGNANT:
        raise ValueError("label mask contains class ids outside {0, 1, 2}")
    return arr


def luminance(img: ImageRGB) -> GrayImage:
    """Rec. 601 luma of an RGB image."""
    return img[:, :, 0] * _LUMA[0] + img[:, :, 1] * _LUMA[1] + img[:, :, 2] * _LUMA[2]


def bilinear_sample(img: ImageRGB, x: float, y: float, border: str = "clamp") -> np.ndarray:
    """Bilinearly interpolate the 4 pixels surrounding (x, y).

    Coordinates outside [0, w-1] x [0, h-1] clamp to the border; that is the
    only supported policy.  Returns a length-3 color vector.
    """
    if border != "clamp":
        raise ValueError(f"unsupported border policy {border!r}")
    img = ensure_rgb(img)
    out = kernels.bilinear_gather(img, np.array([float(x)]), np.array([float(y)]))
    return out[0]


def warp_image(img: ImageRGB, flow) -> ImageRGB:
    """Backward-warp an image: output(x) = bilinear_sample(img, x + flow(x)).

    ``flow`` is either a FlowField or a raw (H, W, 2) vector array in pixels.
    A zero field reproduces the input bit-exactly.
    """
    img = ensure_rgb(img)
    vec = np.asarray(getattr(flow, "vectors", flow), dtype=np.float64)
    if vec.shape != (img.shape[0], img.shape[1], 2):
        raise ValueError(
            f"flow shape {vec.shape} does not match image {img.shape[:2]} + (2,)")
    return kernels.warp_backward(img, vec)


def warp_labels(labels: LabelMask, flow) -> LabelMask:
    """Nearest-neighbor backward warp of a label mask; invalid pixels map to
    background (0)."""
    labels = ensure_labels(labels)
    vec = np.asarray(getattr(flow, "vectors", flow), dtype=np.float64)
    valid = getattr(flow, "valid", None)
    if valid is None:
        valid = np.ones(labels.shape, dtype=bool)
    if vec.shape != labels.shape + (2,):
        raise ValueError("flow dimensions do not match label mask")
    return kernels.nearest_warp_labels(labels, vec, np.asarray(valid, dtype=bool))


def gradient(img: GrayImage) -> tuple[GrayImage, GrayImage]:
    """Forward differences (d/dx, d/dy); the last column / row of the
    respective plane is zero."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"gradient needs at least 2x2 pixels, got shape {arr.shape}")
    dx = np.zeros_like(arr)
    dy = np.zeros_like(arr)
    dx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    dy[:-1, :] = arr[1:, :] - arr[:-1, :]
    return dx, dy


def gradient_magnitude(img: GrayImage) -> GrayImage:
    dx, dy = gradient(img)
    return np.hypot(dx, dy)


def adjust_brightness_contrast(img: ImageRGB, brightness: float,
                               contrast: float) -> ImageRGB:
    """Photometric jitter: contrast scales about 0.5, then brightness shifts,
    then the result clamps to [0, 1].  (0.0, 1.0) is the identity."""
    img = ensure_rgb(img)
    if brightness == 0.0 and contrast == 1.0:
        return img.copy()
    out = (img - 0.5) * contrast + 0.5 + brightness
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping output pixel coordinates to source coordinates
    (backward convention, like all warping here)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def require_invertible(self, eps: float = 1e-9) -> "AffineTransform":
        if abs(self.det) <= eps:
            raise ValueError("affine transform is numerically singular")
        return self

    def apply(self, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.matrix
        sx = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
        sy = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]
        return sx, sy

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @staticmethod
    def translation(tx: float, ty: float) -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    @staticmethod
    def rotation_scale_about(theta: float, scale: float,
                             center: tuple[float, float]) -> "AffineTransform":
        """Rotate by theta and scale about ``center``."""
        c = math.cos(theta) * scale
        s = math.sin(theta) * scale
        cx, cy = center
        return AffineTransform(np.array([
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
        ]))


def warp_affine(img: ImageRGB, transform: AffineTransform,
                out_size: tuple[int, int]) -> ImageRGB:
    """Resample ``img`` through a backward affine map onto a (w, h) canvas."""
    img = ensure_rgb(img)
    w, h = out_size
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    sx, sy = transform.apply(xs, ys)
    out = kernels.bilinear_gather(img, sx.ravel(), sy.ravel())
    return out.reshape(h, w, 3)


# ---------------------------------------------------------------------------
# PNG I/O (8-bit per channel, sRGB assumed, no color management)

def read_image(path) -> ImageRGB:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_image(path, img: ImageRGB) -> None:
    img = ensure_rgb(img)
    arr = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(Path(path), format="PNG")


def read_label_mask(path) -> LabelMask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return ensure_labels(arr)


def write_label_mask(path, labels: LabelMask) -> None:
    labels = ensure_labels(labels)
    Image.fromarray(labels, "L").save(Path(path), format="PNG")


def read_binary_mask(path) -> BinaryMask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def write_binary_mask(path, mask: BinaryMask) -> None:
    mask = ensure_mask(mask)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), "L").save(
        Path(path), format="PNG")
