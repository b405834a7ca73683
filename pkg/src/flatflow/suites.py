"""Verification suites: fixed scenario sets with their pass/fail rules.

Each suite returns a verdict mapping with a boolean ``"pass"`` plus the
measured quantities. Scenarios that need a companion run at ``h / 2`` or on
a refined grid run it here.
"""
from __future__ import annotations

import logging
import time

import numpy as np
from scipy import ndimage

from .flow import (FlowConfig, check_consistency, check_distance_bound, check_maaginen,
                   check_s_iteration, check_smoothing, initial_contours, refinement_ratios, run_flow)
from .grid import Circle, Dumbbell, Ellipse, FourierStar, GridSpec, Stadium, UnionOfCircles
from .oracles import exhaustive_minimum, mincut_minimum, mincut_solve, rolling_ball
from .step import minimize_set_energy
from .two_point import two_point_report

log = logging.getLogger(__name__)

ELLIPSE = Ellipse(a=1.5, b=0.75)
TWO_CIRCLES = UnionOfCircles(circles=((-1.2, 0.0, 1.0), (1.2, 0.0, 1.0)))
STAR = FourierStar(R0=1.0, k=2, amplitude=0.1)
STADIUM = Stadium(half_length=0.6, radius=0.6)
DUMBBELL = Dumbbell(neck_width=0.15, lobe_R=0.6, separation=2.0)


def grid_256():
    return GridSpec.square(256)


def scenario(name: str) -> FlowConfig:
    """Shipped scenarios (all on [-2, 2]^2 except the two circles)."""
    g = grid_256()
    table = {
        "circle": FlowConfig(Circle(R=1.0), g, 5e-3, 0.5, name="circle"),
        "ellipse": FlowConfig(ELLIPSE, g, 5e-3, 0.5, name="ellipse"),
        "stadium": FlowConfig(STADIUM, g, 5e-3, 0.5, name="stadium"),
        "star": FlowConfig(STAR, g, 5e-3, 0.6, name="star"),
        "dumbbell": FlowConfig(DUMBBELL, g, 5e-3, 0.1, name="dumbbell"),
        "two-circles": FlowConfig(TWO_CIRCLES, GridSpec.square(256, 3.0), 5e-3, 0.1, name="two-circles"),
    }
    if name not in table:
        raise KeyError(f"unknown scenario {name!r}; expected one of {sorted(table)}")
    return table[name]


def _timed_run(cfg):
    tic = time.perf_counter()
    tr = run_flow(cfg)
    log.info("%s h=%g: %d states in %.1fs", cfg.name, cfg.h, len(tr.states), time.perf_counter() - tic)
    return tr


# ---------------------------------------------------------------------------
# suites


def suite_distance_bound(hs=(4e-3, 2e-3, 1e-3), T=0.1, spread_tol=0.25) -> dict:
    """Fitted ``C = max_k sup|d| r / h`` on the ellipse is h-independent."""
    runs = {}
    for h in hs:
        tr = _timed_run(FlowConfig(ELLIPSE, grid_256(), h, T, name=f"ellipse-h{h:g}"))
        runs[h] = check_distance_bound(tr)
    Cs = np.array([runs[h]["C"] for h in hs])
    spread = float((Cs.max() - Cs.min()) / Cs.max())
    coarse = all(runs[h]["coarse_bound_ok"] for h in hs)
    return {"pass": bool(spread <= spread_tol and coarse), "C": Cs.tolist(), "h": list(hs),
            "spread": spread, "coarse_bound_ok": coarse}


def suite_s_iteration(h=4e-3, T=0.1, factor=2.0) -> dict:
    """``C_hat`` stable under h-halving; the ball radius holds r0/2 on the window."""
    out = {}
    for hh in (h, h / 2):
        tr = _timed_run(FlowConfig(ELLIPSE, grid_256(), hh, T, name=f"ellipse-h{hh:g}"))
        out[hh] = check_s_iteration(tr)
    c1, c2 = out[h]["C_hat"], out[h / 2]["C_hat"]
    if c1 == 0 and c2 == 0:
        stable = True
    elif c1 == 0 or c2 == 0:
        stable = False
    else:
        stable = 1 / factor <= c2 / c1 <= factor
    held = all(v["ubc_held"] for v in out.values())
    dumb = check_s_iteration(_timed_run(scenario("dumbbell")))
    ordered = bool(dumb["ends_before_singular"])
    return {"pass": bool(stable and held and ordered), "C_hat": [c1, c2], "stable": bool(stable),
            "ubc_held": held, "dumbbell": dumb, "dumbbell_window_before_singular": ordered}


def suite_maaginen(h=5e-3, T=0.05, sizes=(256, 512), band=0.3) -> dict:
    """Per-step normal-transport residual is O(dx) and halves under refinement."""
    traces = [_timed_run(FlowConfig(ELLIPSE, GridSpec.square(n), h, T, name=f"ellipse-{n}")) for n in sizes]
    checks = [check_maaginen(tr) for tr in traces]
    ref = refinement_ratios(traces[0], traces[1])
    target = ref["expected"]
    halves = abs(ref["median"] - target) <= band * target
    bounded = all(c["pass"] for c in checks)
    return {"pass": bool(halves and bounded), "C": [c["C"] for c in checks], "linf": [c["linf"] for c in checks],
            "median_ratio": ref["median"], "max_ratio": ref["max_over_steps"], "expected_ratio": target}


def suite_smoothing() -> dict:
    tr = _timed_run(scenario("stadium"))
    v = check_smoothing(tr)
    v.pop("series", None)
    return v


def suite_consistency(h=5e-3, T=0.6, drift_tol=0.05) -> dict:
    """Star mode decays at the linearized rate; the fit is stable under h-halving."""
    res = {}
    for hh in (h, h / 2):
        tr = _timed_run(FlowConfig(STAR, grid_256(), hh, T, name=f"star-h{hh:g}"))
        v = check_consistency(tr)
        v.pop("amplitudes", None)
        res[hh] = v
    r1, r2 = res[h]["rate"], res[h / 2]["rate"]
    drift = abs(r2 - r1) / abs(r1)
    ok = res[h]["pass"] and res[h / 2]["pass"] and drift <= drift_tol
    return {"pass": bool(ok), "rates": [r1, r2], "linearized": res[h]["linearized"], "h_drift": float(drift)}


def random_linear_term(rng, grid: GridSpec):
    """Smooth random field plus noise and an offset, scaled like ``d / h``."""
    smooth = ndimage.gaussian_filter(rng.standard_normal(grid.shape), 3, mode="wrap")
    smooth /= smooth.std()
    return (smooth + 0.5 * rng.uniform(-1, 1, grid.shape) + 0.2) * 4 / grid.dx


def suite_oracle_equivalence(n_fields=20, n_small=200, seed=1, gap_tol=1e-3) -> dict:
    """Thresholded primal-dual against min-cut (32^2) and enumeration (4x4)."""
    rng = np.random.default_rng(seed)
    g = GridSpec(32, 32, 0.0, 1.0, 0.0, 1.0)
    gaps = []
    for _ in range(n_fields):
        f = random_linear_term(rng, g)
        _, E_cut = mincut_solve(f, g)
        _, E_pd, _ = minimize_set_energy(f, g.dx, anisotropic=True)
        gaps.append((E_pd - E_cut) / max(abs(E_cut), g.dx))
    dx = 0.25
    pd_bad = cut_bad = 0
    for _ in range(n_small):
        f = rng.uniform(-1, 1, (4, 4)) * 4 / dx
        _, E_ex, _ = exhaustive_minimum(f, dx)
        _, E_pd, _ = minimize_set_energy(f, dx, pd_tol=1e-6, pd_max_iter=200000, anisotropic=True)
        pd_bad += abs(E_pd - E_ex) > 1e-12
        cut_bad += abs(mincut_minimum(f, dx)[1] - E_ex) > 1e-12
    worst = float(max(gaps))
    return {"pass": bool(worst <= gap_tol and pd_bad == 0 and cut_bad == 0), "worst_gap": worst,
            "gaps": [float(x) for x in gaps], "exhaustive_mismatch_pd": int(pd_bad),
            "exhaustive_mismatch_cut": int(cut_bad)}


def suite_ubc_cross(tol=0.05, ellipse_tol=0.03) -> dict:
    """``2 ||S|| r_ball = 1`` on circle, ellipse and two circles."""
    cases = {"circle": (Circle(R=1.0), grid_256()), "ellipse": (ELLIPSE, grid_256()),
             "two-circles": (TWO_CIRCLES, GridSpec.square(256, 3.0))}
    out, ok = {}, True
    for name, (shape, g) in cases.items():
        cs = initial_contours(shape, g)
        tp = two_point_report(cs)
        rb = rolling_ball(cs)
        dev = abs(2 * tp.s_norm * rb - 1)
        out[name] = {"s_norm": tp.s_norm, "ubc_radius": tp.ubc_radius, "rolling_ball": rb, "deviation": dev}
        ok &= dev <= tol
    reach = ELLIPSE.b**2 / ELLIPSE.a
    ell_rel = abs(out["ellipse"]["ubc_radius"] - reach) / reach
    out["ellipse_reach_rel_error"] = ell_rel
    return {"pass": bool(ok and ell_rel <= ellipse_tol), **out}


SUITES = {
    "distance-bound": suite_distance_bound,
    "s-iteration": suite_s_iteration,
    "maaginen": suite_maaginen,
    "smoothing": suite_smoothing,
    "consistency": suite_consistency,
    "oracle-equivalence": suite_oracle_equivalence,
    "ubc-cross": suite_ubc_cross,
}


def run_suite(name: str) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    return SUITES[name]()
