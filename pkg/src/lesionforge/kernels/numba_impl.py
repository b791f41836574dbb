"""Numba-compiled implementations of the hot kernels.

Same signatures and arithmetic ordering as ``kernels/numpy_impl.py``; no
fastmath so both backends stay deterministic and comparable.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_FLAT_EPS = 1e-24


@njit(cache=True)
def bilinear_gather(img, xs, ys):
    h, w, c = img.shape
    m = xs.shape[0]
    out = np.empty((m, c))
    for i in range(m):
        x = xs[i]
        y = ys[i]
        if x < 0.0:
            x = 0.0
        elif x > w - 1.0:
            x = w - 1.0
        if y < 0.0:
            y = 0.0
        elif y > h - 1.0:
            y = h - 1.0
        x0 = int(x)
        y0 = int(y)
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        wx1 = x - x0
        wx0 = 1.0 - wx1
        wy1 = y - y0
        wy0 = 1.0 - wy1
        for k in range(c):
            out[i, k] = (img[y0, x0, k] * (wx0 * wy0) + img[y0, x1, k] * (wx1 * wy0)
                         + img[y1, x0, k] * (wx0 * wy1) + img[y1, x1, k] * (wx1 * wy1))
    return out


@njit(cache=True)
def warp_backward(img, flow):
    h, w, c = img.shape
    out = np.empty((h, w, c))
    for yy in range(h):
        for xx in range(w):
            x = xx + flow[yy, xx, 0]
            y = yy + flow[yy, xx, 1]
            if x < 0.0:
                x = 0.0
            elif x > w - 1.0:
                x = w - 1.0
            if y < 0.0:
                y = 0.0
            elif y > h - 1.0:
                y = h - 1.0
            x0 = int(x)
            y0 = int(y)
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            wx1 = x - x0
            wx0 = 1.0 - wx1
            wy1 = y - y0
            wy0 = 1.0 - wy1
            for k in range(c):
                out[yy, xx, k] = (img[y0, x0, k] * (wx0 * wy0)
                                  + img[y0, x1, k] * (wx1 * wy0)
                                  + img[y1, x0, k] * (wx0 * wy1)
                                  + img[y1, x1, k] * (wx1 * wy1))
    return out


@njit(cache=True)
def nearest_warp_labels(labels, flow, valid):
    h, w = labels.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for yy in range(h):
        for xx in range(w):
            if not valid[yy, xx]:
                continue
            xi = int(np.floor(xx + flow[yy, xx, 0] + 0.5))
            yi = int(np.floor(yy + flow[yy, xx, 1] + 0.5))
            if xi < 0:
                xi = 0
            elif xi > w - 1:
                xi = w - 1
            if yi < 0:
                yi = 0
            elif yi > h - 1:
                yi = h - 1
            out[yy, xx] = labels[yi, xi]
    return out


@njit(cache=True)
def laplacian_apply(values, neighbors):
    n = values.shape[0]
    out = np.empty(n)
    for i in range(n):
        acc = 4.0 * values[i]
        for d in range(4):
            j = neighbors[i, d]
            if j >= 0:
                acc -= values[j]
        out[i] = acc
    return out


@njit(cache=True)
def footprint_stats(lum, gmag, dys, dxs, cys, cxs):
    m = cys.shape[0]
    k = dys.shape[0]
    out = np.empty((m, 3))
    for i in range(m):
        s = 0.0
        s2 = 0.0
        sg = 0.0
        for j in range(k):
            v = lum[cys[i] + dys[j], cxs[i] + dxs[j]]
            s += v
            s2 += v * v
            sg += gmag[cys[i] + dys[j], cxs[i] + dxs[j]]
        mean = s / k
        var = s2 / k - mean * mean
        if var < 0.0:
            var = 0.0
        out[i, 0] = mean
        out[i, 1] = np.sqrt(var)
        out[i, 2] = sg / k
    return out


@njit(cache=True)
def ncc_search(lum_a, lum_b, pts, half_win, search):
    h, w = lum_a.shape
    m = pts.shape[0]
    disp = np.zeros((m, 2), dtype=np.int64)
    score = np.full(m, -2.0)
    ok = np.zeros(m, dtype=np.bool_)
    win = 2 * half_win + 1
    npx = win * win
    for i in range(m):
        x = int(pts[i, 0])
        y = int(pts[i, 1])
        if (x - half_win < 0 or x + half_win >= w
                or y - half_win < 0 or y + half_win >= h):
            continue
        ts = 0.0
        for wy in range(-half_win, half_win + 1):
            for wx in range(-half_win, half_win + 1):
                ts += lum_b[y + wy, x + wx]
        tmean = ts / npx
        tn2 = 0.0
        for wy in range(-half_win, half_win + 1):
            for wx in range(-half_win, half_win + 1):
                d = lum_b[y + wy, x + wx] - tmean
                tn2 += d * d
        if tn2 <= _FLAT_EPS:
            continue
        tn = np.sqrt(tn2)
        found = False
        best_sc = -2.0
        best_n2 = 0
        best_dx = 0
        best_dy = 0
        for dy in range(-search, search + 1):
            yy = y + dy
            if yy - half_win < 0 or yy + half_win >= h:
                continue
            for dx in range(-search, search + 1):
                xx = x + dx
                if xx - half_win < 0 or xx + half_win >= w:
                    continue
                cs = 0.0
                for wy in range(-half_win, half_win + 1):
                    for wx in range(-half_win, half_win + 1):
                        cs += lum_a[yy + wy, xx + wx]
                cmean = cs / npx
                num = 0.0
                cn2 = 0.0
                for wy in range(-half_win, half_win + 1):
                    for wx in range(-half_win, half_win + 1):
                        cv = lum_a[yy + wy, xx + wx] - cmean
                        tv = lum_b[y + wy, x + wx] - tmean
                        num += cv * tv
                        cn2 += cv * cv
                if cn2 <= _FLAT_EPS:
                    continue
                sc = num / (np.sqrt(cn2) * tn)
                n2 = dx * dx + dy * dy
                if (not found) or sc > best_sc or (sc == best_sc and n2 < best_n2):
                    found = True
                    best_sc = sc
                    best_n2 = n2
                    best_dx = dx
                    best_dy = dy
        if found:
            disp[i, 0] = best_dx
            disp[i, 1] = best_dy
            score[i] = best_sc
            ok[i] = True
    return disp, score, ok
