"""Vectorized numpy implementations of the hot kernels.

Expression structure deliberately mirrors ``kernels/numba_impl.py`` so the
two backends agree bit-for-bit on the gather-style kernels (warping,
sampling) and to reduction-order ulps on the summing kernels (stats, NCC).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_FLAT_EPS = 1e-24  # squared-norm threshold below which a window counts as flat


def bilinear_gather(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` (H, W, C) at real coordinates ``(xs, ys)`` (1-D, same
    length), clamping out-of-frame coordinates to the nearest edge pixel.
    Returns an (M, C) array."""
    h, w = img.shape[:2]
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, float(w - 1))
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, float(h - 1))
    x0 = x.astype(np.int64)
    y0 = y.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx1 = x - x0
    wx0 = 1.0 - wx1
    wy1 = y - y0
    wy0 = 1.0 - wy1
    p00 = img[y0, x0]
    p10 = img[y0, x1]
    p01 = img[y1, x0]
    p11 = img[y1, x1]
    return (p00 * (wx0 * wy0)[:, None] + p10 * (wx1 * wy0)[:, None]
            + p01 * (wx0 * wy1)[:, None] + p11 * (wx1 * wy1)[:, None])


def warp_backward(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp ``img`` (H, W, C) by ``flow`` (H, W, 2): the output at x
    pulls from the source at x + flow(x), clamped to the frame."""
    h, w = img.shape[:2]
    xs = np.arange(w, dtype=np.float64)[None, :] + flow[:, :, 0]
    ys = np.arange(h, dtype=np.float64)[:, None] + flow[:, :, 1]
    out = bilinear_gather(img, xs.ravel(), ys.ravel())
    return out.reshape(h, w, img.shape[2])


def nearest_warp_labels(labels: np.ndarray, flow: np.ndarray,
                        valid: np.ndarray) -> np.ndarray:
    """Nearest-neighbor backward warp of a uint8 label plane; pixels outside
    ``valid`` become 0.  Rounding is floor(v + 0.5)."""
    h, w = labels.shape
    xs = np.arange(w, dtype=np.float64)[None, :] + flow[:, :, 0]
    ys = np.arange(h, dtype=np.float64)[:, None] + flow[:, :, 1]
    xi = np.clip(np.floor(xs + 0.5), 0, w - 1).astype(np.int64)
    yi = np.clip(np.floor(ys + 0.5), 0, h - 1).astype(np.int64)
    out = labels[yi, xi]
    return np.where(valid, out, np.uint8(0)).astype(np.uint8)


def laplacian_apply(values: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Apply the 5-point Laplacian restricted to the interior unknowns:
    out_i = 4 v_i - sum of v at in-region neighbors (index -1 marks a
    Dirichlet neighbor and contributes nothing)."""
    out = 4.0 * values
    for d in range(4):
        idx = neighbors[:, d]
        inside = idx >= 0
        out[inside] -= values[idx[inside]]
    return out


def footprint_stats(lum: np.ndarray, gmag: np.ndarray, dys: np.ndarray,
                    dxs: np.ndarray, cys: np.ndarray, cxs: np.ndarray) -> np.ndarray:
    """Per-candidate (mean, std, mean gradient magnitude) of the luminance
    under a footprint.  ``dys/dxs`` are the footprint pixel offsets, ``cys/cxs``
    the candidate centers; every center must keep the footprint in-frame.
    Returns (M, 3)."""
    ys = cys[:, None] + dys[None, :]
    xs = cxs[:, None] + dxs[None, :]
    v = lum[ys, xs]
    g = gmag[ys, xs]
    k = float(dys.shape[0])
    mean = v.sum(axis=1) / k
    var = (v * v).sum(axis=1) / k - mean * mean
    std = np.sqrt(np.maximum(var, 0.0))
    gmean = g.sum(axis=1) / k
    return np.stack([mean, std, gmean], axis=1)


def _pick_best(scores: np.ndarray, search: int) -> tuple[float, int, int]:
    """Argmax over a (2s+1, 2s+1) score grid with ties broken by smaller
    displacement norm, then scan (row-major) order."""
    flat = scores.ravel()
    dyg, dxg = np.mgrid[-search:search + 1, -search:search + 1]
    n2 = (dyg * dyg + dxg * dxg).ravel()
    order = np.lexsort((np.arange(flat.size), n2, -flat))
    j = order[0]
    return float(flat[j]), int(dxg.ravel()[j]), int(dyg.ravel()[j])


def ncc_search(lum_a: np.ndarray, lum_b: np.ndarray, pts: np.ndarray,
               half_win: int, search: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For each query point (x, y) in ``lum_b``, find the integer displacement
    within +-search whose window in ``lum_a`` maximizes zero-normalized cross
    correlation against the window around the query.

    Returns (disp (M, 2) int64 as (dx, dy), score (M,), ok (M,) bool).  A
    point is flagged invalid when its template window is flat, does not fit
    the frame, or no candidate window has signal.
    """
    h, w = lum_a.shape
    m = pts.shape[0]
    disp = np.zeros((m, 2), dtype=np.int64)
    score = np.full(m, -2.0)
    ok = np.zeros(m, dtype=bool)
    win = 2 * half_win + 1
    for i in range(m):
        x = int(pts[i, 0])
        y = int(pts[i, 1])
        if (x - half_win < 0 or x + half_win >= w
                or y - half_win < 0 or y + half_win >= h):
            continue
        t = lum_b[y - half_win:y + half_win + 1, x - half_win:x + half_win + 1]
        tz = t - t.mean()
        tn2 = (tz * tz).sum()
        if tn2 <= _FLAT_EPS:
            continue
        tn = np.sqrt(tn2)
        if (x - half_win - search >= 0 and x + half_win + search < w
                and y - half_win - search >= 0 and y + half_win + search < h):
            region = lum_a[y - half_win - search:y + half_win + search + 1,
                           x - half_win - search:x + half_win + search + 1]
            wins = sliding_window_view(region, (win, win))
            mz = wins - wins.mean(axis=(-2, -1), keepdims=True)
            nn2 = (mz * mz).sum(axis=(-2, -1))
            num = (mz * tz).sum(axis=(-2, -1))
            with np.errstate(invalid="ignore", divide="ignore"):
                sc = np.where(nn2 > _FLAT_EPS, num / (np.sqrt(nn2) * tn), -2.0)
            best_sc, best_dx, best_dy = _pick_best(sc, search)
            if best_sc > -2.0:
                disp[i, 0] = best_dx
                disp[i, 1] = best_dy
                score[i] = best_sc
                ok[i] = True
        else:
            found = False
            best_sc = -2.0
            best_n2 = 0
            for dy in range(-search, search + 1):
                yy = y + dy
                if yy - half_win < 0 or yy + half_win >= h:
                    continue
                for dx in range(-search, search + 1):
                    xx = x + dx
                    if xx - half_win < 0 or xx + half_win >= w:
                        continue
                    c = lum_a[yy - half_win:yy + half_win + 1,
                              xx - half_win:xx + half_win + 1]
                    cz = c - c.mean()
                    cn2 = (cz * cz).sum()
                    if cn2 <= _FLAT_EPS:
                        continue
                    sc = (tz * cz).sum() / (np.sqrt(cn2) * tn)
                    n2 = dx * dx + dy * dy
                    if (not found) or sc > best_sc or (sc == best_sc and n2 < best_n2):
                        found = True
                        best_sc = sc
                        best_n2 = n2
                        disp[i, 0] = dx
                        disp[i, 1] = dy
            if found:
                score[i] = best_sc
                ok[i] = True
    return disp, score, ok
