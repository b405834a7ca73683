"""Exact signed distance to a polyline contour and its grid derivatives.

Sign convention: negative inside the set, positive outside. Values are
sampled at the cell centers of the grid (the same points that carry the
indicator field), so ``d / h - lambda`` is directly the linear term of a step.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .contour import Contour, as_contours
from .exceptions import (AmbiguousProjectionError, BoundaryStencilError, OutsideTubeError,
                         TooFewVerticesError)
from .grid import GridMismatchError, GridSpec, IndicatorField
from .polyline import SegmentSet, crossing_parity, nearest_segment

MIN_VERTICES = 16
EIKONAL_TOL = 0.1
PREFILTER_CELLS = 4.0


def contour_id(contours) -> str:
    h = hashlib.sha1()
    for c in as_contours(contours):
        h.update(np.ascontiguousarray(c.vertices).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SignedDistanceField:
    grid: GridSpec
    d: np.ndarray
    source_contour_id: str
    segments: SegmentSet = field(repr=False)

    def exact(self, points):
        """Exact signed distance at arbitrary points.

        Returns ``(d, foot, seg_index, t)`` where ``foot`` is the nearest point
        on the polyline.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dist, seg, t = nearest_segment(points, self.segments)
        inside = crossing_parity(points, self.segments)
        a, b = self.segments.a[seg], self.segments.b[seg]
        foot = a + t[:, None] * (b - a)
        return np.where(inside, -dist, dist), foot, seg, t

    def gradient_field(self):
        """Central-difference gradient at interior nodes (NaN on the border)."""
        gx = np.full(self.d.shape, np.nan)
        gy = np.full(self.d.shape, np.nan)
        h2 = 2 * self.grid.dx
        gx[:, 1:-1] = (self.d[:, 2:] - self.d[:, :-2]) / h2
        gy[1:-1, :] = (self.d[2:, :] - self.d[:-2, :]) / h2
        return gx, gy

    def to_csv(self, path):
        X, Y = self.grid.cell_centers()
        data = np.column_stack([X.ravel(), Y.ravel(), self.d.ravel()])
        np.savetxt(path, data, delimiter=",", header="x,y,d", comments="", fmt="%.12g")


def signed_distance(contours, grid: GridSpec, inside_test: IndicatorField | None = None,
                    bucket_size: float | None = None) -> SignedDistanceField:
    """Signed distance from every cell center to the polyline ``contours``.

    Magnitudes are exact point-to-segment minima. The sign comes from
    even-odd ray crossing against the contour; ``inside_test`` (if given)
    settles the sign only at nodes farther than 4 dx from the contour where
    it is exactly 0 or 1.
    """
    cs = as_contours(contours)
    for c in cs:
        if len(c.vertices) < MIN_VERTICES:
            raise TooFewVerticesError(f"signed_distance needs >= {MIN_VERTICES} vertices per contour")
    segs = SegmentSet.from_loops([c.vertices for c in cs])
    X, Y = grid.cell_centers()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    dist, _, _ = nearest_segment(pts, segs, bucket_size)
    need_parity = np.ones(len(pts), dtype=bool)
    inside = np.zeros(len(pts), dtype=bool)
    if inside_test is not None:
        if inside_test.grid != grid:
            raise GridMismatchError("inside_test lives on a different grid")
        u = inside_test.values.ravel()
        far = dist > PREFILTER_CELLS * grid.dx
        decided = far & ((u == 0.0) | (u == 1.0))
        inside[decided] = u[decided] == 1.0
        need_parity = ~decided
    if need_parity.any():
        inside[need_parity] = crossing_parity(pts[need_parity], segs)
    d = np.where(inside, -dist, dist).reshape(grid.shape)
    d.setflags(write=False)
    return SignedDistanceField(grid, d, contour_id(cs), segs)


def _check_nodes(sdf: SignedDistanceField, rows, cols):
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    cols = np.atleast_1d(np.asarray(cols, dtype=int))
    ny, nx = sdf.grid.shape
    if np.any((rows < 2) | (cols < 2) | (rows > ny - 3) | (cols > nx - 3)):
        raise BoundaryStencilError("node within 2 cells of the grid boundary")
    return rows, cols


def _raw_grad(sdf, rows, cols):
    d, h2 = sdf.d, 2 * sdf.grid.dx
    gx = (d[rows, cols + 1] - d[rows, cols - 1]) / h2
    gy = (d[rows + 1, cols] - d[rows - 1, cols]) / h2
    return np.column_stack([gx, gy])


def grad(sdf: SignedDistanceField, rows, cols) -> np.ndarray:
    """Unit gradient of ``d`` at nodes ``(rows, cols)`` by central differences.

    Raises :class:`OutsideTubeError` where ``| |grad d| - 1 | > 0.1`` (the
    node sits near the medial axis, where ``d`` is not differentiable).
    """
    scalar = np.ndim(rows) == 0
    rows, cols = _check_nodes(sdf, rows, cols)
    g = _raw_grad(sdf, rows, cols)
    norm = np.hypot(*g.T)
    if np.any(np.abs(norm - 1) > EIKONAL_TOL):
        raise OutsideTubeError(f"eikonal residual {np.max(np.abs(norm - 1)):.3f} exceeds {EIKONAL_TOL}")
    g = g / norm[:, None]
    return g[0] if scalar else g


def hessian_trace(sdf: SignedDistanceField, rows, cols) -> np.ndarray:
    """Five-point Laplacian of ``d`` (equals the curvature on the contour)."""
    scalar = np.ndim(rows) == 0
    rows, cols = _check_nodes(sdf, rows, cols)
    norm = np.hypot(*_raw_grad(sdf, rows, cols).T)
    if np.any(np.abs(norm - 1) > EIKONAL_TOL):
        raise OutsideTubeError(f"eikonal residual {np.max(np.abs(norm - 1)):.3f} exceeds {EIKONAL_TOL}")
    d = sdf.d
    lap = (d[rows, cols + 1] + d[rows, cols - 1] + d[rows + 1, cols] + d[rows - 1, cols]
           - 4 * d[rows, cols]) / sdf.grid.dx**2
    return lap[0] if scalar else lap


@dataclass(frozen=True)
class ProjectionSample:
    x: np.ndarray
    pi_x: np.ndarray
    d_x: float
    grad_d_x: np.ndarray
    pi_stencil: np.ndarray


def _bilinear(field_, grid: GridSpec, x, y):
    r, c = grid.xy_to_index(x, y)
    r0 = int(np.floor(r))
    c0 = int(np.floor(c))
    fr, fc = r - r0, c - c0
    v = field_[r0:r0 + 2, c0:c0 + 2]
    return ((1 - fr) * (1 - fc) * v[0, 0] + (1 - fr) * fc * v[0, 1]
            + fr * (1 - fc) * v[1, 0] + fr * fc * v[1, 1])


def _local_minima_ambiguous(sdf, x, dx):
    """True if two distinct local minima of the per-segment distance tie.

    Minima are compared along each loop; they are "distinct" when more than
    10 dx of arc apart (or on different loops) and "tied" within dx.
    """
    segs = sdf.segments
    ab = segs.b - segs.a
    t = np.clip(np.sum((x - segs.a) * ab, axis=1) / np.sum(ab * ab, axis=1), 0, 1)
    dist = np.hypot(*(x - segs.a - t[:, None] * ab).T)
    nxt, prv = segs.next_index(np.arange(len(segs))), segs.prev_index(np.arange(len(segs)))
    minima = np.flatnonzero((dist <= dist[nxt]) & (dist <= dist[prv]))
    best = minima[np.argmin(dist[minima])]
    close = minima[dist[minima] < dist[best] + dx]
    for k in close:
        if k == best:
            continue
        if segs.loop[k] != segs.loop[best]:
            return True
        length = segs.loop_length[segs.loop[k]]
        sep = abs(segs.arclen[k] - segs.arclen[best])
        if min(sep, length - sep) > 10 * dx:
            return True
    return False


def project(sdf: SignedDistanceField, x, reach: float | None = None) -> ProjectionSample:
    """Nearest-point projection of ``x`` onto the contour, computed two ways.

    (a) ``x - d grad d`` from grid stencils, (b) exact nearest point on the
    polyline. The two must agree within 3 dx; (b) is returned.
    """
    x = np.asarray(x, dtype=float)
    dx = sdf.grid.dx
    d_exact, foot, _, _ = sdf.exact(x[None])
    d_x = float(d_exact[0])
    if reach is not None and abs(d_x) >= reach:
        raise OutsideTubeError(f"|d| = {abs(d_x):.4g} is not below the reach {reach:.4g}")
    if _local_minima_ambiguous(sdf, x, dx):
        raise AmbiguousProjectionError(f"point {x} is equidistant to distant contour pieces")
    r, c = sdf.grid.xy_to_index(x[0], x[1])
    ny, nx = sdf.grid.shape
    if r < 1 or c < 1 or r > ny - 3 or c > nx - 3:
        raise BoundaryStencilError("projection stencil leaves the grid")
    gx, gy = sdf.gradient_field()
    g = np.array([_bilinear(gx, sdf.grid, *x), _bilinear(gy, sdf.grid, *x)])
    norm = np.hypot(*g)
    if abs(norm - 1) > EIKONAL_TOL:
        raise OutsideTubeError(f"eikonal residual {abs(norm - 1):.3f} at {x}")
    g /= norm
    d_interp = _bilinear(sdf.d, sdf.grid, *x)
    pi_a = x - d_interp * g
    pi_b = foot[0]
    if np.hypot(*(pi_a - pi_b)) > 3 * dx:
        raise OutsideTubeError("stencil and polyline projections disagree by more than 3 dx")
    return ProjectionSample(x, pi_b, d_x, g, pi_a)


def lipschitz_of_gradient(sdf: SignedDistanceField, rho: float) -> float:
    """Max |grad d(p) - grad d(q)| / |p - q| over adjacent nodes in the rho-tube."""
    gx, gy = sdf.gradient_field()
    inside = np.abs(sdf.d) < rho
    best = 0.0
    for axis in (0, 1):
        sl_a = [slice(None), slice(None)]
        sl_b = [slice(None), slice(None)]
        sl_a[axis] = slice(None, -1)
        sl_b[axis] = slice(1, None)
        sa, sb = tuple(sl_a), tuple(sl_b)
        diff = np.hypot(gx[sb] - gx[sa], gy[sb] - gy[sa]) / sdf.grid.dx
        ok = inside[sa] & inside[sb] & np.isfinite(diff)
        if ok.any():
            best = max(best, float(np.max(diff[ok])))
    return best
