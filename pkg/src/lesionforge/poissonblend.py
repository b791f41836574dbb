"""Gradient-domain compositing on irregular masked regions.

A lesion crop is inserted into a body image by solving the discrete Poisson
equation: inside the blend region the composite reproduces a guidance
gradient field, on the region border it matches the target image exactly
(Dirichlet boundary).  For every interior pixel p the unknown f_p satisfies
the 5-point equation

    4 f_p - sum_{q in N(p), q interior} f_q
        = sum_{q in N(p), q boundary} target_q + sum_{q in N(p)} v_pq

where v_pq is the guidance value along the oriented edge p -> q: the source
forward difference in import mode, or whichever of the source / target
differences has the larger magnitude in mixed mode (source wins exact ties).
The system matrix is the Laplacian restricted to the interior, symmetric
positive definite, and is applied matrix-free; a Jacobi-preconditioned
conjugate-gradient solve produces the membrane values, one independent solve
per color channel over shared structure.

Mask pixels touching the source frame, or whose offset position is not
strictly inside the target, are eroded out of the region up front so every
interior pixel is guaranteed 4 in-frame neighbors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .imagecore import BinaryMask, ImageRGB, ensure_mask, ensure_rgb


class BlendMode(enum.Enum):
    IMPORT_GRADIENTS = "import"
    MIXED_GRADIENTS = "mixed"


@dataclass(frozen=True)
class BlendRequest:
    """Everything needed to clone ``source[region]`` into ``target``.

    ``offset`` = (dx, dy) places source pixel (x, y) at target (x+dx, y+dy).
    """

    target: ImageRGB
    source: ImageRGB
    region: BinaryMask
    offset: tuple[int, int] = (0, 0)
    mode: BlendMode = BlendMode.IMPORT_GRADIENTS

    def __post_init__(self):
        object.__setattr__(self, "target", ensure_rgb(self.target))
        object.__setattr__(self, "source", ensure_rgb(self.source))
        object.__setattr__(self, "region", ensure_mask(self.region, like=self.source))
        dx, dy = self.offset
        object.__setattr__(self, "offset", (int(dx), int(dy)))
        if not isinstance(self.mode, BlendMode):
            object.__setattr__(self, "mode", BlendMode(self.mode))


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


class SolveError(RuntimeError):
    """Raised when the conjugate-gradient solve fails to converge."""

    def __init__(self, report: SolveReport, channel: int | None = None):
        self.report = report
        self.channel = channel
        where = f" (channel {channel})" if channel is not None else ""
        super().__init__(
            f"Poisson solve did not converge{where}: "
            f"{report.iterations} iterations, residual {report.relative_residual:.3e}")


@dataclass(frozen=True)
class PoissonSystem:
    """Matrix-free discrete Poisson system on the blend region interior.

    ``index_map`` sends a source pixel to its unknown index (-1 outside the
    region); ``neighbors`` holds, per unknown, the unknown indices of its
    west/east/north/south neighbors (-1 where the neighbor is Dirichlet);
    ``rhs`` is one right-hand side per color channel.
    """

    index_map: np.ndarray          # (Hs, Ws) int32
    neighbors: np.ndarray          # (N, 4) int64
    rhs: np.ndarray                # (3, N) float64
    pixel_xy: np.ndarray           # (N, 2) int64 source coords of each unknown
    offset: tuple[int, int]

    @property
    def num_unknowns(self) -> int:
        return self.neighbors.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Matrix-vector product with the interior Laplacian."""
        return kernels.laplacian_apply(np.asarray(values, dtype=np.float64),
                                       self.neighbors)


def effective_region(request: BlendRequest) -> BinaryMask:
    """The blend region actually solved: the request mask minus any pixel on
    the source frame border or whose offset position is not strictly inside
    the target (so every remaining pixel has 4 in-frame neighbors on both
    sides of the mapping)."""
    hs, ws = request.region.shape
    ht, wt = request.target.shape[:2]
    dx, dy = request.offset
    region = request.region.copy()
    region[0, :] = False
    region[-1, :] = False
    region[:, 0] = False
    region[:, -1] = False
    xs = np.arange(ws)
    ys = np.arange(hs)
    ok_x = (xs + dx >= 1) & (xs + dx <= wt - 2)
    ok_y = (ys + dy >= 1) & (ys + dy <= ht - 2)
    region &= ok_x[None, :]
    region &= ok_y[:, None]
    return region


def build_guidance(request: BlendRequest) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel guidance gradient field over the source frame.

    Returns forward-difference planes (gx, gy), each (Hs, Ws, 3), with the
    last column / row zero.  In mixed mode each pixel-pair difference is
    replaced by the target's difference when that has strictly larger
    magnitude; because each edge owns exactly one forward-difference entry,
    the selection is consistent for both incident pixels.
    """
    src = request.source
    gx = np.zeros_like(src)
    gy = np.zeros_like(src)
    gx[:, :-1, :] = src[:, 1:, :] - src[:, :-1, :]
    gy[:-1, :, :] = src[1:, :, :] - src[:-1, :, :]
    if request.mode is BlendMode.MIXED_GRADIENTS:
        tgt = request.target
        hs, ws = src.shape[:2]
        ht, wt = tgt.shape[:2]
        dx, dy = request.offset
        # Source coords whose target positions support a forward difference.
        x0 = max(0, -dx)
        x1 = min(ws, wt - dx)          # exclusive; needs x+dx in frame
        y0 = max(0, -dy)
        y1 = min(hs, ht - dy)
        if x1 - 1 > x0 and y1 > y0:
            tdx = (tgt[y0 + dy:y1 + dy, x0 + dx + 1:x1 + dx, :]
                   - tgt[y0 + dy:y1 + dy, x0 + dx:x1 + dx - 1, :])
            sl = gx[y0:y1, x0:x1 - 1, :]
            keep = np.abs(tdx) > np.abs(sl)
            gx[y0:y1, x0:x1 - 1, :] = np.where(keep, tdx, sl)
        if x1 > x0 and y1 - 1 > y0:
            tdy = (tgt[y0 + dy + 1:y1 + dy, x0 + dx:x1 + dx, :]
                   - tgt[y0 + dy:y1 + dy - 1, x0 + dx:x1 + dx, :])
            sl = gy[y0:y1 - 1, x0:x1, :]
            keep = np.abs(tdy) > np.abs(sl)
            gy[y0:y1 - 1, x0:x1, :] = np.where(keep, tdy, sl)
    return gx, gy


# Neighbor order everywhere: west, east, north, south.
_STEPS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def assemble(request: BlendRequest) -> PoissonSystem:
    """Build the interior system and per-channel right-hand sides."""
    region = effective_region(request)
    if not region.any():
        raise ValueError("blend region is empty after border erosion")
    dx, dy = request.offset
    tgt = request.target
    gx, gy = build_guidance(request)

    index_map = np.full(region.shape, -1, dtype=np.int32)
    ys, xs = np.nonzero(region)            # row-major unknown ordering
    n = xs.shape[0]
    index_map[ys, xs] = np.arange(n, dtype=np.int32)

    neighbors = np.empty((n, 4), dtype=np.int64)
    rhs = np.zeros((3, n), dtype=np.float64)
    for d, (sx, sy) in enumerate(_STEPS):
        qx = xs + sx
        qy = ys + sy
        nbr = index_map[qy, qx].astype(np.int64)
        neighbors[:, d] = nbr
        boundary = nbr < 0
        if boundary.any():
            tq = tgt[qy[boundary] + dy, qx[boundary] + dx, :]
            rhs[:, boundary] += tq.T
    # Guidance divergence: sum over the 4 oriented edge differences.
    for c in range(3):
        rhs[c] += (gx[ys, xs - 1, c] - gx[ys, xs, c]
                   + gy[ys - 1, xs, c] - gy[ys, xs, c])
    pixel_xy = np.stack([xs, ys], axis=1).astype(np.int64)
    return PoissonSystem(index_map=index_map, neighbors=neighbors, rhs=rhs,
                         pixel_xy=pixel_xy, offset=(dx, dy))


def _default_max_iter(n: int) -> int:
    return int(10.0 * np.sqrt(n)) + 1000


def _cg_single(system: PoissonSystem, b: np.ndarray, tol: float,
               max_iter: int) -> tuple[np.ndarray, SolveReport]:
    """Jacobi-preconditioned CG on one channel.  Deterministic: fixed
    iteration order, no threading.  On apparent convergence the true residual
    is recomputed, so a reported residual is always re-verifiable."""
    x = np.zeros_like(b)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return x, SolveReport(0, 0.0, True)
    r = b.copy()
    z = 0.25 * r                      # diagonal is always 4
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < max_iter:
        it += 1
        ap = system.apply(p)
        pap = float(p @ ap)
        if pap <= 0.0:                # SPD by construction; guard regardless
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) / norm_b <= tol:
            r = b - system.apply(x)   # refresh: recurrence drift safeguard
            relres = float(np.linalg.norm(r) / norm_b)
            if relres <= tol:
                return x, SolveReport(it, relres, True)
            z = 0.25 * r              # restart from the true residual
            p = z.copy()
            rz = float(r @ z)
            continue
        z = 0.25 * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    relres = float(np.linalg.norm(b - system.apply(x)) / norm_b)
    return x, SolveReport(it, relres, relres <= tol)


def solve_cg(system: PoissonSystem, tol: float = 1e-8,
             max_iter: int | None = None) -> tuple[np.ndarray, SolveReport]:
    """Solve all channels; returns ((3, N) interior values, aggregate report).

    The aggregate report carries the worst per-channel iteration count and
    residual; ``converged`` is true only when every channel converged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = _default_max_iter(system.num_unknowns)
    values = np.empty_like(system.rhs)
    iterations = 0
    residual = 0.0
    converged = True
    for c in range(system.rhs.shape[0]):
        x, rep = _cg_single(system, system.rhs[c], tol, max_iter)
        values[c] = x
        iterations = max(iterations, rep.iterations)
        residual = max(residual, rep.relative_residual)
        converged = converged and rep.converged
    return values, SolveReport(iterations, residual, converged)


def seamless_clone_with_report(request: BlendRequest, tol: float = 1e-8,
                               max_iter: int | None = None
                               ) -> tuple[ImageRGB, SolveReport]:
    """Clone the masked source region into the target.

    Pixels outside the (eroded) region are returned bit-exactly from the
    target; solved membrane values are clamped to [0, 1] once, at the end.
    Raises SolveError (carrying the report) on non-convergence.
    """
    system = assemble(request)
    if max_iter is None:
        max_iter = _default_max_iter(system.num_unknowns)
    out = request.target.copy()
    dx, dy = system.offset
    tx = system.pixel_xy[:, 0] + dx
    ty = system.pixel_xy[:, 1] + dy
    iterations = 0
    residual = 0.0
    for c in range(3):
        x, rep = _cg_single(system, system.rhs[c], tol, max_iter)
        if not rep.converged:
            raise SolveError(rep, channel=c)
        iterations = max(iterations, rep.iterations)
        residual = max(residual, rep.relative_residual)
        out[ty, tx, c] = np.clip(x, 0.0, 1.0)
    return out, SolveReport(iterations, residual, True)


def seamless_clone(request: BlendRequest, tol: float = 1e-8,
                   max_iter: int | None = None) -> ImageRGB:
    out, _ = seamless_clone_with_report(request, tol, max_iter)
    return out
