"""The two-point function of a contour and the uniform ball radius it implies.

For a C^{1,1} curve, ``2 sup |S| = 1 / r`` where r is the largest radius of
interior and exterior tangent balls; adjacent vertex pairs recover ``kappa/2``
and pairs across a narrow gap recover ``1 / gap``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .contour import as_contours, stack_vertices
from .exceptions import CoincidentPointsError, TooFewVerticesError

MIN_VERTICES = 32


def s_value(x, nu_x, y) -> float:
    """``(x - y) . nu(x) / |x - y|^2``."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = float(diff @ diff)
    if r2 == 0.0:
        raise CoincidentPointsError("S is undefined for x = y")
    return float(diff @ np.asarray(nu_x, dtype=float)) / r2


def s_eps_value(x, nu_x, y, eps: float) -> float:
    """Regularized ``(x - y) . nu(x) / (|x - y|^2 + eps)``; zero when x = y."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(diff @ np.asarray(nu_x, dtype=float)) / (float(diff @ diff) + eps)


@dataclass(frozen=True)
class TwoPointReport:
    s_norm: float
    argmax_pair: tuple[int, int]
    s_sign: int
    ubc_radius: float
    normal_lip: float

    def to_dict(self):
        return {"s_norm": self.s_norm, "argmax_pair": list(self.argmax_pair), "s_sign": self.s_sign,
                "ubc_radius": self.ubc_radius, "normal_lip": self.normal_lip}


def _points(contours):
    pts, nrm, _, _ = stack_vertices(contours)
    if len(pts) < MIN_VERTICES:
        raise TooFewVerticesError(f"two-point sweep needs >= {MIN_VERTICES} vertices, got {len(pts)}")
    return np.ascontiguousarray(pts), np.ascontiguousarray(nrm)


def two_point_report(contours, eps: float = 0.0) -> TwoPointReport:
    """Exhaustive max of ``|S|`` over all ordered vertex pairs of all components.

    Vertex indices in ``argmax_pair`` refer to the concatenation of the
    components in the order given.
    """
    pts, nrm = _points(contours)
    best, i, j, val, lip = _kernels.two_point_sweep(pts, nrm, float(eps))
    sign = 1 if val >= 0 else -1
    return TwoPointReport(float(best), (int(i), int(j)), sign, 0.5 / float(best), float(lip))


def s_eps_norm(contours, eps: float) -> float:
    """``max |S_eps|`` over vertex pairs."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    pts, nrm = _points(contours)
    return float(_kernels.two_point_sweep(pts, nrm, float(eps))[0])


@dataclass(frozen=True)
class CriticalPairResiduals:
    tangential: float       # |tau(x) . (x - y)| / |x - y|
    curvature: float        # |kappa(x) - 2 S sign| / max(|kappa(x)|, 2 S)
    second: float           # |tau(y) . nu(x) - 2 S_signed tau(y) . (x - y)|
    distance: float         # |x - y|
    degenerate: bool

    @property
    def first(self) -> float:
        """The first identity holds if either alternative is small."""
        return 0.0 if self.degenerate else min(self.tangential, self.curvature)

    def to_dict(self):
        return {"tangential": self.tangential, "curvature": self.curvature, "second": self.second,
                "distance": self.distance, "first": self.first, "degenerate": self.degenerate}


def critical_pair_check(contours, report: TwoPointReport, flat_tol: float = 1e-3) -> CriticalPairResiduals:
    """Residuals of the first-order conditions at the maximizing pair.

    In the plane the x-derivative condition reduces to: either ``(x - y)`` is
    normal at x (tangential residual ~ 0) or ``kappa(x) = 2 S``. The
    y-derivative condition reads ``tau(y) . nu(x) = 2 S tau(y) . (x - y)``.
    When ``S`` is constant over the contour (relative spread below
    ``flat_tol``, e.g. a circle) every pair is critical and the residuals are
    reported as zero.
    """
    cs = as_contours(contours)
    pts, nrm, kappa, _ = stack_vertices(cs)
    tangents = np.vstack([c.tangents for c in cs])
    i, j = report.argmax_pair
    x, y = pts[i], pts[j]
    diff = x - y
    dist = float(np.hypot(*diff))
    s_signed = report.s_sign * report.s_norm
    tangential = abs(float(tangents[i] @ diff)) / dist
    curvature = abs(kappa[i] - 2 * s_signed) / max(abs(kappa[i]), 2 * report.s_norm)
    second = abs(float(tangents[j] @ nrm[i]) - 2 * s_signed * float(tangents[j] @ diff))
    # S along the row of x: constant rows mean a degenerate (circle-like) maximum
    others = np.delete(np.arange(len(pts)), i)
    d_all = x - pts[others]
    s_row = (d_all @ nrm[i]) / np.sum(d_all * d_all, axis=1)
    degenerate = float(np.ptp(s_row)) <= flat_tol * report.s_norm
    if degenerate:
        tangential = curvature = second = 0.0
    return CriticalPairResiduals(float(tangential), float(curvature), float(second), dist, bool(degenerate))
