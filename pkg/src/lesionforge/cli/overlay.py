"""Overlay rendering: detection boxes and correspondence lines.

Fixed cosmetic constants (2 px box outlines, 1 px lines, 2 px endpoint dots)
so rendered overlays are byte-stable across runs.
"""

from __future__ import annotations

import numpy as np

from ..imagecore import CLASS_BENIGN, CLASS_MALIGNANT, ImageRGB

COLOR_BENIGN = (1.0, 1.0, 0.0)      # yellow
COLOR_MALIGNANT = (1.0, 0.0, 0.0)   # red
COLOR_CORRECT = (0.0, 0.9, 0.0)     # green
COLOR_WRONG = (1.0, 0.0, 0.0)       # red

_CLASS_COLORS = {CLASS_BENIGN: COLOR_BENIGN, CLASS_MALIGNANT: COLOR_MALIGNANT}


def draw_box(img: np.ndarray, box, color, width: int = 2) -> None:
    """Outline an inclusive (x0, y0, x1, y1) box in place."""
    h, w = img.shape[:2]
    x0, y0, x1, y1 = (int(v) for v in box)
    x0, x1 = max(0, min(x0, x1)), min(w - 1, max(x0, x1))
    y0, y1 = max(0, min(y0, y1)), min(h - 1, max(y0, y1))
    c = np.asarray(color)
    for t in range(width):
        xa, xb = max(0, x0 - t), min(w - 1, x1 + t)
        ya, yb = max(0, y0 - t), min(h - 1, y1 + t)
        img[ya, xa:xb + 1] = c
        img[yb, xa:xb + 1] = c
        img[ya:yb + 1, xa] = c
        img[ya:yb + 1, xb] = c


def draw_line(img: np.ndarray, p0, p1, color) -> None:
    """Bresenham line, endpoints clamped to the frame."""
    h, w = img.shape[:2]
    x0, y0 = int(round(p0[0])), int(round(p0[1]))
    x1, y1 = int(round(p1[0])), int(round(p1[1]))
    c = np.asarray(color)
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            img[y0, x0] = c
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def draw_dot(img: np.ndarray, p, color, radius: int = 2) -> None:
    h, w = img.shape[:2]
    x, y = int(round(p[0])), int(round(p[1]))
    ys = slice(max(0, y - radius), min(h, y + radius + 1))
    xs = slice(max(0, x - radius), min(w, x + radius + 1))
    img[ys, xs] = np.asarray(color)


def render_detection_overlay(image: ImageRGB, proposals) -> ImageRGB:
    """Proposal boxes on a copy of the image (benign yellow, malignant red)."""
    out = image.copy()
    for prop in proposals:
        draw_box(out, prop.box, _CLASS_COLORS.get(prop.class_id, COLOR_MALIGNANT))
    return out


def render_tracking_overlay(image_a: ImageRGB, image_b: ImageRGB,
                            queries, matches, correct) -> ImageRGB:
    """Side-by-side [A | B] canvas; one line per keypoint from impact point in
    A to its query in B, green when correct, red otherwise."""
    ha, wa = image_a.shape[:2]
    hb, wb = image_b.shape[:2]
    canvas = np.zeros((max(ha, hb), wa + wb, 3))
    canvas[:ha, :wa] = image_a
    canvas[:hb, wa:wa + wb] = image_b
    for (qx, qy), (mx, my), good in zip(queries, matches, correct):
        color = COLOR_CORRECT if good else COLOR_WRONG
        draw_line(canvas, (mx, my), (qx + wa, qy), color)
        draw_dot(canvas, (mx, my), color)
        draw_dot(canvas, (qx + wa, qy), color)
    return canvas
