"""One minimizing-movements step.

The set problem ``min_F P(F) + int_F f`` is solved through its ROF dual:
if ``w`` minimizes ``TV(w) + 1/2 |w - g|^2`` with ``g = -f``, then ``{w > 0}``
minimizes the set energy (coarea). Because TV ignores constants, the
minimizer for ``f - c`` is ``w + c``; a single solve therefore gives the
whole family of sets ``{w > -lambda}`` needed by the volume bisection, and
the solver only has to be re-run when ``lambda`` moves the interface by a
noticeable fraction of a cell.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .contour import Contour, enclosed_area, extract_contours
from .distance import SignedDistanceField
from .exceptions import ConfigError, NonConvergenceError
from .grid import GridSpec, IndicatorField

log = logging.getLogger(__name__)

CHECK_EVERY = 8
BAND_CELLS = 2.0
MAX_ROUNDS = 5


@dataclass(frozen=True)
class StepConfig:
    """Parameters of a single step.

    ``pd_tol`` bounds the interface motion per solver iteration, in cells,
    measured inside a two-cell band around ``{w = 0}``. ``smoothing`` is the
    width (in cells) of the tanh profile used for the relaxed occupancy.
    """

    h: float
    m0: float
    pd_tol: float = 1e-5
    pd_max_iter: int = 10000
    vol_tol: float | None = None
    threshold: float = 0.5
    anisotropic: bool = False
    smoothing: float = 3.0

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError("h must be > 0", key="h")
        if not self.m0 > 0:
            raise ConfigError("m0 must be > 0", key="m0")
        if not 0 < self.pd_tol <= 1e-3:
            raise ConfigError("pd_tol must lie in (0, 1e-3]", key="step.pd_tol")
        if self.pd_max_iter < 1:
            raise ConfigError("pd_max_iter must be positive", key="step.pd_max_iter")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)", key="step.threshold")

    def resolved_vol_tol(self, grid: GridSpec) -> float:
        tol = 2 * grid.dx**2 if self.vol_tol is None else self.vol_tol
        if tol < grid.dx**2:
            raise ConfigError("vol_tol must be at least dx^2", key="step.vol_tol")
        return tol

    def validate(self, grid: GridSpec):
        self.resolved_vol_tol(grid)
        if self.h < grid.dx**2 / 4:
            raise ConfigError(f"h = {self.h} is below dx^2/4 = {grid.dx**2 / 4:.3g}", key="h")

    def to_dict(self):
        return {"pd_tol": self.pd_tol, "pd_max_iter": self.pd_max_iter, "vol_tol": self.vol_tol,
                "threshold": self.threshold, "anisotropic": self.anisotropic,
                "smoothing": self.smoothing}


# ---------------------------------------------------------------------------
# discrete operators and energies


def forward_grad(w, dx):
    gx = np.zeros_like(w)
    gy = np.zeros_like(w)
    gx[:, :-1] = (w[:, 1:] - w[:, :-1]) / dx
    gy[:-1, :] = (w[1:, :] - w[:-1, :]) / dx
    return gx, gy


def total_variation(u, dx, anisotropic=False) -> float:
    """``sum |grad+ u| dx^2`` with forward differences and Neumann boundary."""
    gx, gy = forward_grad(np.asarray(u, dtype=float), dx)
    if anisotropic:
        return float((np.abs(gx) + np.abs(gy)).sum() * dx * dx)
    return float(np.hypot(gx, gy).sum() * dx * dx)


def relaxed_energy(u, f, grid: GridSpec, anisotropic=False) -> float:
    u = np.asarray(u, dtype=float)
    return total_variation(u, grid.dx, anisotropic) + float((u * f).sum() * grid.dx**2)


def dual_energy(px, py, f, grid: GridSpec) -> float:
    """Lower bound ``sum min(0, f - div p) dx^2`` for any feasible dual field."""
    dv = _kernels.divergence(px, py, 1.0 / grid.dx)
    return float(np.minimum(0.0, f - dv).sum() * grid.dx**2)


def step_energy(U, d, h, m0, grid: GridSpec) -> float:
    """Discrete ``P(F) + (1/h) int_F d + (1/sqrt h) | |F| - m0 |`` of a binary set."""
    U = np.asarray(U, dtype=float)
    vol = float(U.sum() * grid.dx**2)
    return (total_variation(U, grid.dx) + float((U * d).sum() * grid.dx**2) / h
            + abs(vol - m0) / math.sqrt(h))


# ---------------------------------------------------------------------------
# relaxed solve


PROFILE_WIDTHS = 6.0


@dataclass(eq=False)
class RelaxedSolution:
    """ROF-dual solution; the set for multiplier shift ``c`` is ``{w + c > 0}``."""

    grid: GridSpec
    w: np.ndarray
    px: np.ndarray
    py: np.ndarray
    iters: int
    residual: float
    gap: float
    converged: bool
    smoothing: float = 3.0

    def profile(self):
        """``(slope, band)`` used by the smoothed occupancy.

        ``w / |grad w|`` is a signed distance only near the interface; kinks
        of ``w`` (medial axis, Neumann boundary layer) would fake interface
        cells elsewhere, so the tanh profile is confined to cells within six
        profile widths of the zero level (Euclidean transform of the binary
        set) and is binary outside.
        """
        dx = self.grid.dx
        wy, wx = np.gradient(self.w, dx)
        slope = np.maximum(np.hypot(wx, wy), 1e-12)
        inside = self.w > 0
        if inside.all() or not inside.any():
            return slope, np.zeros_like(inside)
        dist = np.where(inside, ndimage.distance_transform_edt(inside),
                        ndimage.distance_transform_edt(~inside))
        return slope, dist < PROFILE_WIDTHS * self.smoothing

    def occupancy(self, shift=0.0, profile=None):
        slope, band = self.profile() if profile is None else profile
        wl = self.w + shift
        u = (wl > 0).astype(float)
        s = wl[band] / slope[band]
        u[band] = 0.5 + 0.5 * np.tanh(s / (self.smoothing * self.grid.dx))
        return u

    def indicator(self, shift=0.0) -> IndicatorField:
        """Smoothed occupancy; its 1/2 level is exactly ``{w + shift = 0}``."""
        return IndicatorField(self.grid, self.occupancy(shift))


def _interface_band(w, dx):
    wy, wx = np.gradient(w, dx)
    slope = np.hypot(wx, wy)
    band = np.abs(w) < BAND_CELLS * dx * slope
    return band, slope


def geometric_dual(g, dx):
    """Dual field aligned with the level lines of ``g`` (unit where defined)."""
    gx, gy = forward_grad(g, dx)
    n = np.hypot(gx, gy)
    ok = n > 1e-12
    px = np.zeros_like(g)
    py = np.zeros_like(g)
    px[ok] = gx[ok] / n[ok]
    py[ok] = gy[ok] / n[ok]
    px[:, -1] = 0.0
    py[-1, :] = 0.0
    return px, py


def _rof_iterate(f, dx, pd_tol, pd_max_iter, anisotropic, warm, min_iter):
    """Primal-dual loop on plain arrays; returns ``(w, px, py, iters, residual)``."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    g = np.ascontiguousarray(-f)
    if warm is not None:
        w = np.array(warm[0], dtype=float)
        px, py = warm[1].copy(), warm[2].copy()
    else:
        px, py = geometric_dual(g, dx)
        if anisotropic:
            px, py = np.sign(px), np.sign(py)
        w = g + _kernels.divergence(px, py, 1.0 / dx)
    wb = w.copy()
    lip = math.sqrt(8.0) / dx
    tau = 1.0 / lip
    sigma = 1.0 / (tau * lip * lip)
    iters, residual = 0, np.inf
    while iters < pd_max_iter:
        n = min(CHECK_EVERY, pd_max_iter - iters)
        w_old = w.copy()
        tau, sigma = _kernels.pdhg_rof(g, w, wb, px, py, 1.0 / dx, tau, sigma, 1.0, n, anisotropic)
        iters += n
        band, slope = _interface_band(w, dx)
        if band.any():
            residual = float(np.max(np.abs(w - w_old)[band] / slope[band]) / (dx * n))
        else:
            residual = float(np.max(np.abs(w - w_old)) / n)
        if iters >= min_iter and residual <= pd_tol:
            break
    if residual > 10 * pd_tol:
        raise NonConvergenceError(f"primal-dual residual {residual:.3g} after {iters} iterations "
                                  f"(tolerance {pd_tol:.3g}); h may be too small for the grid")
    return w, px, py, iters, residual


def minimize_set_energy(f, dx: float, pd_tol: float = 1e-5, pd_max_iter: int = 20000,
                        anisotropic: bool = False):
    """Binary minimizer of ``TV(U) + sum U f dx^2`` on a bare array.

    Same solver as :func:`solve_relaxed` without the grid container, so it
    also runs on arrays too small for a :class:`GridSpec` (oracle checks).
    Returns ``(U, energy, iters)``.
    """
    w, _, _, iters, _ = _rof_iterate(f, dx, pd_tol, pd_max_iter, anisotropic, None, 16)
    U = (w > 0).astype(float)
    energy = total_variation(U, dx, anisotropic) + float((U * f).sum() * dx * dx)
    return U, energy, iters


def solve_relaxed(f, grid: GridSpec, pd_tol: float = 1e-5, pd_max_iter: int = 10000,
                  anisotropic: bool = False, warm=None, smoothing: float = 3.0,
                  min_iter: int = 16) -> RelaxedSolution:
    """Minimize ``TV(u) + sum u f dx^2`` over ``u in [0, 1]``.

    Runs accelerated primal-dual iterations on the ROF dual problem. The
    iteration stops when the largest displacement of the zero level of ``w``
    per iteration (in cells, inside a two-cell band) falls below ``pd_tol``;
    hitting ``pd_max_iter`` with a residual above ``10 pd_tol`` raises
    :class:`NonConvergenceError`. ``warm`` may be a previous
    :class:`RelaxedSolution`; otherwise the dual starts aligned with ``grad f``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError("f does not match the grid")
    warm_arrays = None if warm is None else (warm.w, warm.px, warm.py)
    w, px, py, iters, residual = _rof_iterate(f, grid.dx, pd_tol, pd_max_iter, anisotropic,
                                              warm_arrays, min_iter)
    U = (w > 0).astype(float)
    primal = relaxed_energy(U, f, grid, anisotropic)
    dual = dual_energy(px, py, f, grid)
    gap = (primal - dual) / max(abs(primal), abs(dual), grid.dx**2)
    return RelaxedSolution(grid, w, px, py, iters, residual, gap, residual <= pd_tol, smoothing)


def threshold(u: IndicatorField, s: float = 0.5) -> IndicatorField:
    """Binary field ``1`` where ``u > s``."""
    return IndicatorField(u.grid, (u.values > s).astype(float))


# ---------------------------------------------------------------------------
# volume constraint


@dataclass(eq=False)
class StepResult:
    u: IndicatorField
    lam: float
    lambda_clamped: bool
    energy: float
    energy_prev: float
    pd_iters: int
    pd_residual: float
    pd_gap: float
    volume: float
    contours: list = field(default_factory=list)
    sup_abs_d: float = float("nan")
    bisection_log: list = field(default_factory=list)
    rounds: int = 1
    solution: RelaxedSolution | None = field(default=None, repr=False)

    @property
    def binary(self) -> IndicatorField:
        return IndicatorField(self.u.grid, (self.solution.w > 0).astype(float))

    def to_dict(self):
        return {"lambda": self.lam, "lambda_clamped": self.lambda_clamped, "energy": self.energy,
                "energy_prev": self.energy_prev, "pd_iters": self.pd_iters,
                "pd_residual": self.pd_residual, "pd_gap": self.pd_gap, "volume": self.volume,
                "sup_abs_d": self.sup_abs_d, "rounds": self.rounds}


def profile_bias(smoothing: float, dx: float) -> float:
    """Area over-counted per convex component by the tanh occupancy profile.

    Across a curve of curvature kappa the outer half of the profile covers
    more area than the inner half misses: the excess per unit length is
    ``kappa * 2 int_0^inf s (1 - u) ds = kappa eps^2 pi^2 / 24``, and
    ``int kappa ds = 2 pi`` per component gives ``pi^3 eps^2 / 12``.
    """
    eps = smoothing * dx
    return math.pi**3 * eps**2 / 12.0


class VolumeFunction:
    """``V(lambda)``: area of ``{w0 + lambda > 0}`` read off the smoothed profile."""

    def __init__(self, sol: RelaxedSolution, shift0: float, euler_char: int):
        self.sol = sol
        self.shift0 = shift0
        self.bias = profile_bias(sol.smoothing, sol.grid.dx) * euler_char
        self._profile = sol.profile()
        self.log: list[tuple[float, float]] = []

    def __call__(self, lam: float) -> float:
        u = self.sol.occupancy(lam - self.shift0, self._profile)
        v = float(u.sum() * self.sol.grid.dx**2) - self.bias
        self.log.append((float(lam), v))
        return v


def _bisect(V: VolumeFunction, m0, lo, hi, vol_tol):
    v_lo, v_hi = V(lo), V(hi)
    if v_hi < m0:
        return hi, True
    if v_lo > m0:
        return lo, True
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        v = V(mid)
        if abs(v - m0) <= vol_tol:
            return mid, False
        if v < m0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def volume_bisection(sdf_prev: SignedDistanceField, cfg: StepConfig, lam_guess: float = 0.0,
                     euler_char: int = 1, extract: bool = True, U_prev=None) -> StepResult:
    """Solve one step with the volume enforced through the multiplier.

    With ``f = d/h - lambda`` the enclosed volume is nondecreasing in
    ``lambda``; bisection over ``[-1/sqrt h, 1/sqrt h]`` finds the multiplier
    hitting ``m0``. If even an endpoint cannot reach ``m0`` the endpoint is
    returned exactly and ``lambda_clamped`` is set.

    ``euler_char`` (components minus holes of the previous set) corrects the
    known area defect of the smoothed occupancy profile.
    """
    grid = sdf_prev.grid
    cfg.validate(grid)
    vol_tol = cfg.resolved_vol_tol(grid)
    h = cfg.h
    bound = 1.0 / math.sqrt(h)
    d = np.asarray(sdf_prev.d)
    lam = float(np.clip(lam_guess, -bound, bound))
    sol = None
    total_iters = 0
    log_all = []
    clamped = False
    rounds = 0
    for rounds in range(1, MAX_ROUNDS + 1):
        f = d / h - lam
        warm = None
        if sol is not None:
            warm = RelaxedSolution(grid, sol.w + (lam - prev_lam), sol.px, sol.py, 0, 0.0, 0.0, False)
        sol = solve_relaxed(f, grid, cfg.pd_tol, cfg.pd_max_iter, cfg.anisotropic, warm, cfg.smoothing)
        total_iters += sol.iters
        V = VolumeFunction(sol, lam, euler_char)
        new_lam, clamped = _bisect(V, cfg.m0, -bound, bound, vol_tol / 8)
        log_all.extend(V.log)
        prev_lam = lam
        # shifting lambda by dl moves the interface by about h * dl
        moved = h * abs(new_lam - lam)
        lam = new_lam
        if moved <= 0.25 * grid.dx:
            break
    # store the solution with w shifted to the accepted multiplier
    shift = lam - prev_lam
    final = RelaxedSolution(grid, sol.w + shift, sol.px, sol.py, sol.iters, sol.residual, sol.gap,
                            sol.converged, cfg.smoothing)
    if clamped:
        lam = bound if lam > 0 else -bound
    u = final.indicator()
    U = (final.w > 0).astype(float)
    energy = step_energy(U, d, h, cfg.m0, grid)
    if U_prev is None:
        U_prev = (d < 0).astype(float)
    energy_prev = step_energy(U_prev, d, h, cfg.m0, grid)
    volume = float(u.values.sum() * grid.dx**2) - profile_bias(cfg.smoothing, grid.dx) * euler_char
    res = StepResult(u, lam, clamped, energy, energy_prev, total_iters, sol.residual, sol.gap, volume,
                     bisection_log=log_all, rounds=rounds, solution=final)
    if extract and U.any():
        cs = extract_contours(u, cfg.threshold)
        chi = sum(1 if c.orientation else -1 for c in cs)
        if chi != euler_char:
            # topology changed: redo the volume match with the new profile bias
            V = VolumeFunction(final, 0.0, chi)
            lam_new, clamped = _bisect(V, cfg.m0, -bound - lam, bound - lam, vol_tol / 8)
            log_all.extend((l + lam, v) for l, v in V.log)
            final = RelaxedSolution(grid, final.w + lam_new, final.px, final.py, final.iters,
                                    final.residual, final.gap, final.converged, cfg.smoothing)
            lam = lam + lam_new
            if clamped:
                lam = bound if lam > 0 else -bound
            u = final.indicator()
            res.u, res.lam, res.lambda_clamped, res.solution = u, lam, clamped, final
            U = (final.w > 0).astype(float)
            res.energy = step_energy(U, d, h, cfg.m0, grid)
            cs = extract_contours(u, cfg.threshold)
        area = enclosed_area(cs)
        if not clamped and abs(area - cfg.m0) > vol_tol:
            final, cs, area, dl = _polish_area(final, cfg.m0, vol_tol, cfg.threshold,
                                               -bound - lam, bound - lam)
            lam = lam + dl
            res.u, res.lam, res.solution = final.indicator(), lam, final
            res.energy = step_energy((final.w > 0).astype(float), d, h, cfg.m0, grid)
        res.contours = cs
        res.volume = area
        dvals, _, _, _ = sdf_prev.exact(np.vstack([c.vertices for c in cs]))
        res.sup_abs_d = float(np.max(np.abs(dvals)))
    return res


def _polish_area(sol: RelaxedSolution, m0, tol, level, lo, hi, iters: int = 12):
    """Shift ``w`` until the extracted polygon area matches ``m0``.

    The smoothed-occupancy bias is only asymptotic; near a pinch or a newly
    born component it can miss by tens of cells. The area of the extracted
    contour is monotone in the shift, so a safeguarded secant on it closes
    the gap without a new solve. Returns ``(solution, contours, area, shift)``.
    """
    def area_at(c):
        cs = extract_contours(sol.indicator(c), level)
        return cs, enclosed_area(cs)

    def shifted(c):
        return RelaxedSolution(sol.grid, sol.w + c, sol.px, sol.py, sol.iters, sol.residual,
                               sol.gap, sol.converged, sol.smoothing)

    best_c = 0.0
    best_cs, best_a = area_at(0.0)
    a_lo, a_hi = lo, hi
    c0, A0 = 0.0, best_a
    # first guess: interface moves by shift / |grad w|
    slope, band = sol.profile()
    perim = sum(float(np.sum(c.ds)) for c in best_cs)
    g = float(np.median(slope[band])) if band.any() else 1.0
    c1 = (m0 - A0) * g / max(perim, sol.grid.dx)
    for _ in range(iters):
        if A0 < m0:
            a_lo = max(a_lo, c0)
        else:
            a_hi = min(a_hi, c0)
        if not (a_lo < c1 < a_hi):
            c1 = 0.5 * (a_lo + a_hi)
        try:
            cs1, A1 = area_at(c1)
        except Exception:
            a_hi = min(a_hi, c1) if c1 > c0 else a_hi
            a_lo = max(a_lo, c1) if c1 < c0 else a_lo
            c1 = 0.5 * (a_lo + a_hi)
            continue
        if abs(A1 - m0) < abs(best_a - m0):
            best_c, best_cs, best_a = c1, cs1, A1
        if abs(A1 - m0) <= tol:
            break
        c2 = c1 + (m0 - A1) * (c1 - c0) / (A1 - A0) if A1 != A0 else 0.5 * (a_lo + a_hi)
        c0, A0, c1 = c1, A1, c2
    return shifted(best_c), best_cs, best_a, best_c


def euler_lagrange_residual(result: StepResult, contour_new, sdf_prev: SignedDistanceField, h: float):
    """Per-vertex ``d_prev(x)/h + kappa(x) - lambda`` and its L2 / Linf norms."""
    from .contour import as_contours
    cs = as_contours(contour_new)
    pts = np.vstack([c.vertices for c in cs])
    kappa = np.concatenate([c.kappa for c in cs])
    ds = np.concatenate([c.ds for c in cs])
    dvals, _, _, _ = sdf_prev.exact(pts)
    r = dvals / h + kappa - result.lam
    return r, float(np.sqrt(np.sum(r * r * ds))), float(np.max(np.abs(r)))
