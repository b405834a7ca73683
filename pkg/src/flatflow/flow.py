"""Time stepping of the scheme and the quantitative checks run on its trace."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .contour import (Contour, as_contours, compute_normals_curvature, curvature_norms,
                      enclosed_area, mean_curvature_average, stack_vertices, total_length)
from .distance import signed_distance
from .exceptions import (ConfigError, FlatFlowError, NoContourError, NonConvergenceError,
                         NotStarShapedError, OutsideTubeError)
from .grid import GridSpec, Shape, check_margin, field_volume, rasterize
from .oracles import linearized_rate, rolling_ball
from .polyline import SegmentSet, crossing_parity, nearest_segment, signed_area
from .step import StepConfig, euler_lagrange_residual, volume_bisection
from .two_point import TwoPointReport, critical_pair_check, two_point_report

log = logging.getLogger(__name__)

ALL_CHECKS = ("distance_bound", "s_iteration", "smoothing", "perimeter", "consistency", "maaginen")
UBC_FLOOR_CELLS = 3.0


@dataclass(frozen=True)
class StepSettings:
    """Solver settings shared by every step of a run (``m0`` comes from E_0)."""

    pd_tol: float = 1e-5
    pd_max_iter: int = 10000
    vol_tol: float | None = None
    threshold: float = 0.5
    smoothing: float = 3.0

    def to_dict(self):
        return {"pd_tol": self.pd_tol, "pd_max_iter": self.pd_max_iter, "vol_tol": self.vol_tol,
                "threshold": self.threshold, "smoothing": self.smoothing}

    @classmethod
    def from_dict(cls, data):
        known = {"pd_tol", "pd_max_iter", "vol_tol", "threshold", "smoothing"}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown step setting {sorted(bad)[0]!r}", key=f"step.{sorted(bad)[0]}")
        return cls(**data)


@dataclass(frozen=True)
class FlowConfig:
    shape: Shape
    grid: GridSpec
    h: float
    T: float
    step: StepSettings = field(default_factory=StepSettings)
    checks: tuple = ALL_CHECKS
    target_volume: float | None = None
    name: str = "flow"

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError("h must be > 0", key="h")
        if not self.T >= self.h:
            raise ConfigError("T must be at least h", key="T")
        if self.h < self.grid.dx**2 / 4:
            raise ConfigError(f"h below dx^2/4 = {self.grid.dx**2 / 4:.3g}", key="h")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown check {sorted(unknown)[0]!r}", key="checks")
        if self.target_volume is not None and not self.target_volume > 0:
            raise ConfigError("target_volume must be > 0", key="target_volume")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h + 1e-9))

    def with_h(self, h) -> "FlowConfig":
        return replace(self, h=h)


@dataclass
class StepReport:
    t: float
    volume: float
    perimeter: float
    lam: float = 0.0
    lambda_clamped: bool = False
    sup_d: float = 0.0
    energy: float = float("nan")
    energy_prev: float = float("nan")
    pd_iters: int = 0
    pd_residual: float = 0.0
    pd_gap: float = 0.0
    n_components: int = 1
    l2_H2: float = 0.0
    l2_gradH2: float = 0.0
    linf_H: float = 0.0
    mean_H: float = 0.0
    rolling_ball: float = float("nan")
    el_l2: float = float("nan")
    el_linf: float = float("nan")
    critical_first: float = float("nan")
    critical_second: float = float("nan")
    bisection_monotone: bool = True
    wall_time: float = 0.0

    def to_dict(self):
        out = dict(self.__dict__)
        out["lambda"] = out.pop("lam")
        return out


@dataclass
class FlowState:
    t: float
    contours: list
    report: StepReport
    two_point: TwoPointReport

    def to_dict(self):
        return {"t": self.t, "report": self.report.to_dict(), "two_point": self.two_point.to_dict(),
                "contours": [c.vertices.tolist() for c in self.contours]}


@dataclass
class FlowTrace:
    config: FlowConfig
    m0: float
    states: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    singular_flag: bool = False
    singular_time: float | None = None
    singular_reason: str | None = None
    error: str | None = None

    def series(self, name):
        if name in ("s_norm", "ubc_radius", "normal_lip"):
            return np.array([getattr(s.two_point, name) for s in self.states])
        if name == "t":
            return np.array([s.t for s in self.states])
        return np.array([getattr(s.report, name) for s in self.states])

    @property
    def dx(self):
        return self.config.grid.dx


# ---------------------------------------------------------------------------
# driver


def initial_contours(shape: Shape, grid: GridSpec) -> list[Contour]:
    """Analytic boundary of ``shape`` sampled at spacing ~dx."""
    out = []
    for loop in shape.boundary(grid.dx):
        if signed_area(loop) < 0:
            loop = loop[::-1].copy()
        out.append(compute_normals_curvature(loop, scale=grid.dx))
    return out


def euler_characteristic(contours) -> int:
    return sum(1 if c.orientation else -1 for c in as_contours(contours))


def _diagnose(t, contours, report: StepReport):
    tp = two_point_report(contours)
    norms = curvature_norms(contours)
    report.l2_H2 = norms.l2_H**2
    report.l2_gradH2 = norms.l2_gradH**2
    report.linf_H = norms.linf_H
    report.mean_H = mean_curvature_average(contours)
    report.n_components = len(contours)
    report.rolling_ball = rolling_ball(contours)
    crit = critical_pair_check(contours, tp)
    report.critical_first = crit.first
    report.critical_second = crit.second
    return FlowState(t, contours, report, tp)


def run_flow(cfg: FlowConfig, progress=None) -> FlowTrace:
    """Iterate the scheme from the rasterized initial shape up to ``T``.

    Stops early (``singular_flag``) when the uniform ball radius falls below
    3 dx, the set vanishes, or the number of components changes. Solver
    failures abort with the partial trace attached to the exception.
    """
    grid = cfg.grid
    check_margin(cfg.shape, grid)
    u0 = rasterize(cfg.shape, grid)
    m0 = field_volume(u0) if cfg.target_volume is None else cfg.target_volume
    step_cfg = StepConfig(h=cfg.h, m0=m0, **cfg.step.to_dict())
    step_cfg.validate(grid)
    trace = FlowTrace(cfg, m0)
    contours = initial_contours(cfg.shape, grid)
    rep0 = StepReport(0.0, enclosed_area(contours), total_length(contours))
    trace.states.append(_diagnose(0.0, contours, rep0))
    U_prev = (u0.values > 0.5).astype(float)
    lam = trace.states[0].report.mean_H
    for k in range(1, cfg.n_steps + 1):
        t = k * cfg.h
        tic = time.perf_counter()
        sdf = signed_distance(contours, grid)
        try:
            res = volume_bisection(sdf, step_cfg, lam_guess=lam, euler_char=euler_characteristic(contours),
                                   U_prev=U_prev)
        except NoContourError:
            _mark_singular(trace, t, "set vanished")
            break
        except NonConvergenceError as exc:
            trace.error = str(exc)
            exc.trace = trace
            raise
        if not res.contours:
            _mark_singular(trace, t, "set vanished")
            break
        new = res.contours
        lam = res.lam
        report = StepReport(t, res.volume, total_length(new), res.lam, res.lambda_clamped, res.sup_abs_d,
                            res.energy, res.energy_prev, res.pd_iters, res.pd_residual, res.pd_gap)
        _, report.el_l2, report.el_linf = euler_lagrange_residual(res, new, sdf, cfg.h)
        report.bisection_monotone = _monotone(res.bisection_log)
        try:
            state = _diagnose(t, new, report)
        except FlatFlowError as exc:
            _mark_singular(trace, t, f"diagnostics failed: {exc}")
            break
        report.wall_time = time.perf_counter() - tic
        trace.states.append(state)
        if progress is not None:
            progress(state)
        if len(new) != len(contours):
            kind = "pinch-off" if len(new) > len(contours) else "merge or loss of a component"
            _mark_singular(trace, t, f"{kind}: {len(contours)} -> {len(new)} components")
            break
        if state.two_point.ubc_radius < UBC_FLOOR_CELLS * grid.dx:
            _mark_singular(trace, t, "uniform ball radius below 3 dx")
            break
        contours = new
        U_prev = res.binary.values
    return trace


def _mark_singular(trace, t, reason):
    trace.singular_flag = True
    trace.singular_time = t
    trace.singular_reason = reason
    log.info("singular at t=%.4g: %s", t, reason)


def _monotone(bisection_log) -> bool:
    if len(bisection_log) < 2:
        return True
    pts = sorted(bisection_log)
    vols = np.array([v for _, v in pts])
    return bool(np.all(np.diff(vols) >= -1e-12))


# ---------------------------------------------------------------------------
# checks


def _verdict(passed, **data):
    return {"pass": bool(passed), **data}


def _skipped(reason):
    """Verdict for a check with nothing to measure on this trace (not a failure)."""
    return {"pass": True, "applicable": False, "reason": reason}


def check_distance_bound(trace: FlowTrace) -> dict:
    """Per-step displacement against the linear law ``D_k <= C h / r``.

    ``D_k`` is the largest |d_prev| over the new contour; the fitted constant
    is ``C = max_k D_k r_{k-1} / h`` (radius of the set the step starts
    from). The coarse bound ``D_k <= 2 sqrt(h)`` must hold for every step.
    """
    h = trace.config.h
    if len(trace.states) < 2:
        return _verdict(False, reason="fewer than two states")
    D = trace.series("sup_d")[1:]
    r = trace.series("ubc_radius")[:-1]
    ratios = D * r / h
    C = float(np.max(ratios))
    coarse = bool(np.all(D <= 2 * math.sqrt(h)))
    C_global = float(np.max(D) * np.min(r) / h)
    return _verdict(coarse and np.isfinite(C), C=C, C_global=C_global, coarse_bound_ok=coarse,
                    max_sup_d=float(np.max(D)), series=D.tolist())


def check_s_iteration(trace: FlowTrace) -> dict:
    """Growth of ``||S||`` per step against the cubic law.

    ``C_hat = max_k (s_{k+1} - s_k)_+ / (h s_k^3)``; the window
    ``T0 = r_0^2 / (2 C_hat)`` is where the uniform ball radius must stay
    above ``r_0 / 2``.
    """
    h = trace.config.h
    s = trace.series("s_norm")
    t = trace.series("t")
    r = trace.series("ubc_radius")
    if len(s) < 2:
        return _verdict(False, reason="fewer than two states")
    growth = np.maximum(np.diff(s), 0.0) / (h * s[:-1] ** 3)
    C_hat = float(np.max(growth))
    r0 = float(r[0])
    T0 = math.inf if C_hat == 0 else r0**2 / (2 * C_hat)
    window = t <= T0
    held = bool(np.all(r[window] >= r0 / 2))
    t_end = float(min(T0, t[-1]))
    out = _verdict(held and np.isfinite(C_hat), C_hat=C_hat, T0=T0, r0=r0, window_end=t_end,
                   ubc_held=held, argmax_step=int(np.argmax(growth)) + 1)
    if trace.singular_flag:
        out["ends_before_singular"] = bool(T0 <= trace.singular_time)
    return out


def check_perimeter(trace: FlowTrace) -> dict:
    L = trace.series("perimeter")
    slack = 4 * trace.dx
    inc = np.diff(L)
    ok = bool(np.all(inc <= slack))
    return _verdict(ok, max_increase=float(np.max(inc)) if len(inc) else 0.0, slack=slack,
                    strictly_decreasing=bool(np.all(inc < 0)) if len(inc) else True)


def ubc_window(trace: FlowTrace) -> np.ndarray:
    """States inside the uniform-ball window (r >= r_0/2, t <= T0)."""
    s_check = check_s_iteration(trace)
    t = trace.series("t")
    r = trace.series("ubc_radius")
    return (t <= s_check.get("T0", math.inf)) & (r >= r[0] / 2)


def check_smoothing(trace: FlowTrace) -> dict:
    """``a(t) = t ||grad_tau H||^2`` bounded by 3x its median on the UBC window.

    Also records whether ``||H||^2`` stays below twice its initial value.
    """
    t = trace.series("t")
    a = t * trace.series("l2_gradH2")
    H2 = trace.series("l2_H2")
    win = ubc_window(trace) & (t > 0)
    if not win.any():
        return _skipped("no state with t > 0 inside the uniform-ball window")
    med = float(np.median(a[win]))
    sup = float(np.max(a[win]))
    bounded = bool(sup <= 3 * med)
    H2_ok = bool(np.max(H2[win]) <= 2 * H2[0])
    return _verdict(bounded and H2_ok, sup=sup, median=med, ratio=sup / med if med > 0 else math.inf,
                    l2_H2_max=float(np.max(H2[win])), l2_H2_initial=float(H2[0]), series=a.tolist())


def mode_amplitude(contours, k: int, n_angles: int = 256) -> float:
    """Amplitude of ``cos/sin(k theta)`` in the radial graph about the centroid."""
    cs = as_contours(contours)
    if len(cs) != 1:
        raise NotStarShapedError("mode extraction needs a single contour")
    pts = cs[0].vertices
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6 * area)
    cy = ((y + yn) * cross).sum() / (6 * area)
    theta = np.arctan2(y - cy, x - cx)
    dtheta = np.angle(np.exp(1j * (np.roll(theta, -1) - theta)))
    if np.any(dtheta <= 0):
        raise NotStarShapedError("polar angle is not monotone along the contour")
    radius = np.hypot(x - cx, y - cy)
    order = np.argsort(theta)
    grid = -np.pi + 2 * np.pi * np.arange(n_angles) / n_angles
    r_uniform = np.interp(grid, theta[order], radius[order], period=2 * np.pi)
    coef = np.fft.rfft(r_uniform)[k]
    return float(2 * abs(coef) / n_angles)


def fit_decay_rate(t, a, floor):
    """Least-squares rate of ``a ~ exp(-rate t)`` over samples with ``a > floor``."""
    t = np.asarray(t)
    a = np.asarray(a)
    use = a > floor
    if use.sum() < 3:
        return float("nan"), use
    slope = np.polyfit(t[use], np.log(a[use]), 1)[0]
    return float(-slope), use


def check_consistency(trace: FlowTrace, k: int | None = None, floor_cells: float = 0.5) -> dict:
    """Fitted decay rate of the star mode against the linearized rate ``k^2 - 1``."""
    shape = trace.config.shape
    if k is None:
        k = int(getattr(shape, "k", 2))
    if shape.kind == "circle" or getattr(shape, "amplitude", None) == 0:
        return _verdict(True, reason="no perturbation; stationary")
    if shape.kind != "fourier-star":
        return _skipped(f"no linearized reference for shape {shape.kind!r}")
    t = trace.series("t")
    amps = np.array([mode_amplitude(s.contours, k) for s in trace.states])
    rate, used = fit_decay_rate(t, amps, floor_cells * trace.dx)
    target = linearized_rate(k)
    rel = abs(rate - target) / target
    return _verdict(bool(rel <= 0.2), rate=rate, linearized=target, rel_error=float(rel),
                    samples=int(used.sum()), amplitudes=amps.tolist())


def maaginen_residual(prev_contours, new_contours, mode: str = "segment"):
    """Residual of the normal-transport identity for one step.

    At each vertex x of the new contour, the previous normal carried to x by
    the nearest-point projection is compared with ``d_s d_prev tau_new +
    sqrt(1 - (d_s d_prev)^2) nu_new``. ``mode`` chooses how the previous
    normal is read at the foot point: the normal of the polygon segment
    carrying the foot (``segment``; the stored vertex normal when the foot is
    exactly a vertex), or linear interpolation of the vertex normals
    (``interpolated``, second order, so it bottoms out at extraction noise).
    Returns ``(residuals, linf, l2)``.
    """
    prev = as_contours(prev_contours)
    new = as_contours(new_contours)
    segs = SegmentSet.from_loops([c.vertices for c in prev])
    p_nrm = np.vstack([c.normals for c in prev])
    pts, nrm, _, ds = stack_vertices(new)
    tan = np.vstack([c.tangents for c in new])
    dist, seg, tpar = nearest_segment(pts, segs)
    nxt = segs.next_index(seg)
    if mode == "segment":
        e = segs.b[seg] - segs.a[seg]
        e /= np.hypot(*e.T)[:, None]
        nu_prev = np.column_stack([e[:, 1], -e[:, 0]])
        at_a, at_b = tpar <= 1e-12, tpar >= 1 - 1e-12
        nu_prev[at_a] = p_nrm[seg[at_a]]
        nu_prev[at_b] = p_nrm[nxt[at_b]]
    elif mode == "interpolated":
        nu_prev = (1 - tpar)[:, None] * p_nrm[seg] + tpar[:, None] * p_nrm[nxt]
        nu_prev /= np.hypot(*nu_prev.T)[:, None]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    d_prev = np.where(crossing_parity(pts, segs), -dist, dist)
    out = []
    offset = 0
    for c in new:
        n = len(c)
        d = d_prev[offset:offset + n]
        v = c.vertices
        chord = np.hypot(*(np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)).T)
        out.append((np.roll(d, -1) - np.roll(d, 1)) / chord)
        offset += n
    ds_d = np.concatenate(out)
    if np.any(np.abs(ds_d) >= 1):
        raise OutsideTubeError("tangential derivative of the distance reached 1")
    model = ds_d[:, None] * tan + np.sqrt(1 - ds_d**2)[:, None] * nrm
    res = np.hypot(*(nu_prev - model).T)
    return res, float(np.max(res)), float(np.sqrt(np.sum(res**2 * ds)))


def check_maaginen(trace: FlowTrace, k: int | None = None, mode: str = "segment") -> dict:
    """Normal-transport residual for step ``k -> k+1`` (all steps if ``k`` is None).

    Passes when every step's Linf residual is at most ``2 dx`` (first-order
    bound with an explicit constant); the fitted ``C = max Linf / dx`` and the
    per-step series are reported for refinement comparisons.
    """
    pairs = range(len(trace.states) - 1) if k is None else [k]
    linf, l2 = [], []
    for j in pairs:
        prev, new = trace.states[j], trace.states[j + 1]
        if len(prev.contours) != len(new.contours):
            continue
        _, a, b = maaginen_residual(prev.contours, new.contours, mode)
        linf.append(a)
        l2.append(b)
    if not linf:
        return _skipped("no step without a change of topology")
    worst = float(np.max(linf))
    return _verdict(bool(worst <= 2 * trace.dx), linf=worst, l2=float(np.max(l2)),
                    C=worst / trace.dx, series=linf, mode=mode)


def refinement_ratios(coarse: FlowTrace, fine: FlowTrace, mode: str = "segment") -> dict:
    """Per-step ratio of normal-transport residuals between two resolutions.

    Both traces must share ``h``; step k of one is compared with step k of
    the other. The median ratio is the refinement verdict statistic because a
    single step can land on an unlucky sampling phase at a curvature maximum.
    """
    a = check_maaginen(coarse, mode=mode)["series"]
    b = check_maaginen(fine, mode=mode)["series"]
    n = min(len(a), len(b))
    ratios = np.array(b[:n]) / np.array(a[:n])
    return {"ratios": ratios.tolist(), "median": float(np.median(ratios)),
            "max_over_steps": float(np.max(b[:n]) / np.max(a[:n])),
            "expected": fine.dx / coarse.dx}


CHECKS = {
    "distance_bound": check_distance_bound,
    "s_iteration": check_s_iteration,
    "smoothing": check_smoothing,
    "perimeter": check_perimeter,
    "consistency": check_consistency,
    "maaginen": check_maaginen,
}


def run_checks(trace: FlowTrace) -> dict:
    out = {}
    for name in trace.config.checks:
        try:
            out[name] = CHECKS[name](trace)
        except FlatFlowError as exc:
            out[name] = _verdict(False, error=f"{type(exc).__name__}: {exc}")
    trace.verdicts = out
    return out


def state_invariants(trace: FlowTrace) -> dict:
    """Per-state invariants: volume, normal Lipschitz bound, ball cross-check."""
    vol_tol = StepConfig(h=trace.config.h, m0=trace.m0, **trace.config.step.to_dict()) \
        .resolved_vol_tol(trace.config.grid)
    vol_ok, lip_ok, ubc_ok = True, True, True
    worst_ubc = 0.0
    topo_defect = None
    for i, s in enumerate(trace.states[1:], start=1):
        if not s.report.lambda_clamped and abs(s.report.volume - trace.m0) > vol_tol:
            changed = s.report.n_components != trace.states[i - 1].report.n_components
            if changed and i == len(trace.states) - 1 and trace.singular_flag:
                # the enclosed area jumps across a pinch, so no multiplier hits m0
                topo_defect = s.report.volume - trace.m0
                continue
            vol_ok = False
    for s in trace.states:
        tp = s.two_point
        if tp.normal_lip > 1.05 / tp.ubc_radius:
            lip_ok = False
        dev = abs(2 * tp.s_norm * s.report.rolling_ball - 1)
        worst_ubc = max(worst_ubc, dev)
        if dev > 0.05:
            ubc_ok = False
    return {"volume": vol_ok, "normal_lip": lip_ok, "ubc_cross": ubc_ok, "worst_ubc_dev": worst_ubc,
            "vol_tol": vol_tol, "topology_step_volume_defect": topo_defect}
