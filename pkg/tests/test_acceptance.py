"""Acceptance criteria 1-10, one test each.

Every test records a one-line verdict (printed in the terminal summary) and
then asserts it. Tolerances are fixed here and are not tuned to the results.
"""
import math
import time

import numpy as np
import pytest

from conftest import cached_run, record_criterion
from flatflow.contour import extract_contours, hausdorff_distance
from flatflow.flow import (FlowConfig, check_consistency, check_distance_bound, check_maaginen,
                           check_perimeter, check_s_iteration, check_smoothing, initial_contours,
                           refinement_ratios, state_invariants, ubc_window)
from flatflow.grid import Circle, GridSpec, rasterize
from flatflow.oracles import rolling_ball
from flatflow.step import StepConfig
from flatflow.suites import (DUMBBELL, ELLIPSE, STADIUM, STAR, TWO_CIRCLES, scenario,
                             suite_oracle_equivalence)
from flatflow.two_point import two_point_report

pytestmark = pytest.mark.acceptance

# criterion 1
CIRCLE_DRIFT_CELLS = 2.0
LAMBDA_RANGE = (0.9, 1.1)
CIRCLE_RUNTIME_S = 120.0
# criterion 2
UBC_CROSS_TOL = 0.05
ELLIPSE_REACH = 0.75**2 / 1.5
ELLIPSE_REACH_TOL = 0.03
# criterion 3
DIST_HS = (4e-3, 2e-3, 1e-3)
DIST_T = 0.1
DIST_SPREAD = 0.25
# criterion 4
S_ITER_FACTOR = 2.0
# criterion 5
MAAG_H, MAAG_T = 5e-3, 0.05
MAAG_C = 2.0          # Linf <= C dx on every step
MAAG_BAND = 0.30      # ratio 1/2 +- 30 %
# criterion 6
ORACLE_GAP = 1e-3
# criterion 7
PERIM_SLACK_CELLS = 4.0
# criterion 8
SMOOTH_FACTOR = 3.0
# criterion 9
RATE_TOL = 0.20
RATE_DRIFT = 0.05


def _vol_tol(trace):
    cfg = trace.config
    return StepConfig(h=cfg.h, m0=trace.m0, **cfg.step.to_dict()).resolved_vol_tol(cfg.grid)


def _ellipse(h, T, n=256):
    return cached_run(FlowConfig(ELLIPSE, GridSpec.square(n), h, T, name=f"ellipse-{n}-h{h:g}"))[0]


def test_criterion_01_stationary_circle():
    trace, secs = cached_run(scenario("circle"))
    dx = trace.dx
    drift = hausdorff_distance(trace.states[0].contours, trace.states[-1].contours)
    lam = trace.series("lam")[1:]
    vol_err = np.abs(trace.series("volume")[1:] - trace.m0)
    vol_tol = _vol_tol(trace)
    reached_T = math.isclose(trace.states[-1].t, trace.config.T) and not trace.singular_flag
    ok = (reached_T and drift <= CIRCLE_DRIFT_CELLS * dx and lam.min() >= LAMBDA_RANGE[0]
          and lam.max() <= LAMBDA_RANGE[1] and vol_err.max() <= vol_tol and secs <= CIRCLE_RUNTIME_S)
    record_criterion(1, ok, f"drift={drift / dx:.3f}dx lambda=[{lam.min():.4f},{lam.max():.4f}] "
                            f"max|vol-m0|={vol_err.max() / dx**2:.2f}dx^2 (tol {vol_tol / dx**2:.0f}dx^2) "
                            f"runtime={secs:.1f}s")
    assert ok


def test_criterion_02_ubc_cross_oracle():
    cases = {"circle": (Circle(R=1.0), GridSpec.square(256)), "ellipse": (ELLIPSE, GridSpec.square(256)),
             "two-circles": (TWO_CIRCLES, GridSpec.square(256, 3.0))}
    devs, ubc = {}, {}
    for name, (shape, g) in cases.items():
        # analytic boundary sampled at dx, and the contour extracted from the rasterized field
        for tag, cs in (("analytic", initial_contours(shape, g)),
                        ("extracted", extract_contours(rasterize(shape, g)))):
            tp = two_point_report(cs)
            devs[f"{name}/{tag}"] = abs(2 * tp.s_norm * rolling_ball(cs) - 1)
            ubc[f"{name}/{tag}"] = tp.ubc_radius
    worst = max(devs, key=devs.get)
    # the reach is a property of the shape: compare on the boundary sampled from it
    ell_err = abs(ubc["ellipse/analytic"] - ELLIPSE_REACH) / ELLIPSE_REACH
    ok = devs[worst] <= UBC_CROSS_TOL and ell_err <= ELLIPSE_REACH_TOL
    record_criterion(2, ok, f"worst |2 s r_ball - 1| = {devs[worst]:.4f} ({worst}); "
                            f"ellipse ubc={ubc['ellipse/analytic']:.4f} rel.err={ell_err:.4f} "
                            f"(raster-extracted: {ubc['ellipse/extracted']:.4f})")
    assert ok


def test_criterion_03_distance_law():
    verdicts = [check_distance_bound(_ellipse(h, DIST_T)) for h in DIST_HS]
    C = np.array([v["C"] for v in verdicts])
    spread = (C.max() - C.min()) / C.max()
    coarse = all(v["coarse_bound_ok"] for v in verdicts)
    ok = spread <= DIST_SPREAD and coarse
    record_criterion(3, ok, f"C(h={DIST_HS})={np.round(C, 4).tolist()} spread={spread:.3f} "
                            f"coarse sup|d|<=2sqrt(h): {coarse}")
    assert ok


def test_criterion_04_cubic_iteration_law():
    h1, h2 = DIST_HS[0], DIST_HS[1]
    v1 = check_s_iteration(_ellipse(h1, DIST_T))
    v2 = check_s_iteration(_ellipse(h2, DIST_T))
    c1, c2 = v1["C_hat"], v2["C_hat"]
    finite = math.isfinite(c1) and math.isfinite(c2)
    if c1 == 0 and c2 == 0:
        stable, note = True, "s_k nonincreasing at both h (C_hat=0 at both)"
    elif c1 > 0 and c2 > 0:
        stable, note = 1 / S_ITER_FACTOR <= c2 / c1 <= S_ITER_FACTOR, f"ratio={c2 / c1:.3f}"
    else:
        stable, note = False, "C_hat zero at one h only"
    held = v1["ubc_held"] and v2["ubc_held"]
    dumb = check_s_iteration(cached_run(scenario("dumbbell"))[0])
    ordered = dumb.get("ends_before_singular", False)
    ok = finite and stable and held and ordered
    record_criterion(4, ok, f"C_hat={c1:.4g},{c2:.4g} ({note}); r>=r0/2 in window: {held}; "
                            f"dumbbell C_hat={dumb['C_hat']:.3g} T0={dumb['T0']:.3g} before singular: {ordered}")
    assert ok


def test_criterion_05_normal_transport_refinement():
    coarse, fine = _ellipse(MAAG_H, MAAG_T, 256), _ellipse(MAAG_H, MAAG_T, 512)
    mc, mf = check_maaginen(coarse), check_maaginen(fine)
    bounded = mc["linf"] <= MAAG_C * coarse.dx and mf["linf"] <= MAAG_C * fine.dx
    ref = refinement_ratios(coarse, fine)
    halves = abs(ref["median"] - 0.5) <= MAAG_BAND * 0.5
    ok = bounded and halves
    record_criterion(5, ok, f"Linf/dx={mc['C']:.3f} (256), {mf['C']:.3f} (512); per-step ratio median="
                            f"{ref['median']:.3f} (target 0.5+-30%), max-over-steps ratio={ref['max_over_steps']:.3f}")
    assert ok


def test_criterion_06_solver_vs_exact_oracles():
    v = suite_oracle_equivalence()
    ok = v["worst_gap"] <= ORACLE_GAP and v["exhaustive_mismatch_pd"] == 0 and v["exhaustive_mismatch_cut"] == 0
    record_criterion(6, ok, f"32^2 worst relative gap={v['worst_gap']:.2e} over 20 fields; 4x4 mismatches "
                            f"pd={v['exhaustive_mismatch_pd']} cut={v['exhaustive_mismatch_cut']} of 200")
    assert ok


SHIPPED = ("circle", "ellipse", "stadium", "star", "two-circles", "dumbbell")


def test_criterion_07_perimeter_monotone():
    worst = {}
    ok = True
    for name in SHIPPED:
        tr = cached_run(scenario(name))[0]
        v = check_perimeter(tr)
        assert v["slack"] == PERIM_SLACK_CELLS * tr.dx
        worst[name] = v["max_increase"] / tr.dx
        ok &= v["pass"]
    dumb = cached_run(scenario("dumbbell"))[0]
    pinch = dumb.singular_flag and "pinch" in (dumb.singular_reason or "")
    ok &= pinch
    record_criterion(7, ok, "max step increase / dx: " + ", ".join(f"{k}={v:+.2f}" for k, v in worst.items())
                     + f"; dumbbell pinch-off at t={dumb.singular_time}")
    assert ok


def test_criterion_08_smoothing_stadium():
    tr = cached_run(scenario("stadium"))[0]
    v = check_smoothing(tr)
    win = ubc_window(tr) & (tr.series("t") > 0)
    ok = v["pass"] and v.get("applicable", True) and v["sup"] <= SMOOTH_FACTOR * v["median"]
    # the same statistic over every state with r >= r0/2 (no time cut), for context
    t, r = tr.series("t"), tr.series("ubc_radius")
    a = t * tr.series("l2_gradH2")
    held = (t > 0) & (r >= r[0] / 2)
    record_criterion(8, ok, f"window states={int(win.sum())} sup/median={v['ratio']:.3f} (<= {SMOOTH_FACTOR}); "
                            f"all states with r>=r0/2: sup/median={a[held].max() / np.median(a[held]):.3f}")
    assert ok


def test_criterion_09_linearized_decay_rate():
    v1 = check_consistency(cached_run(scenario("star"))[0])
    cfg2 = scenario("star").with_h(scenario("star").h / 2)
    v2 = check_consistency(cached_run(cfg2)[0])
    drift = abs(v2["rate"] - v1["rate"]) / v1["rate"]
    ok = v1["rel_error"] <= RATE_TOL and v2["rel_error"] <= RATE_TOL and drift <= RATE_DRIFT
    record_criterion(9, ok, f"rate={v1['rate']:.4f} (h), {v2['rate']:.4f} (h/2) vs linearized "
                            f"{v1['linearized']:.1f}; rel.err={v1['rel_error']:.4f}; h-drift={drift:.4f}")
    assert ok


def test_criterion_10_multiplier_dichotomy():
    h = 5e-3
    bound = 1 / math.sqrt(h)
    grow = cached_run(FlowConfig(Circle(R=0.5), GridSpec.square(128), h, 0.02,
                                 target_volume=math.pi, name="infeasible-grow"))[0]
    shrink = cached_run(FlowConfig(Circle(R=0.5), GridSpec.square(128), h, 0.01,
                                   target_volume=0.05, name="infeasible-shrink"))[0]
    clamped_ok = all(s.report.lambda_clamped and s.report.lam == bound for s in grow.states[1:])
    clamped_ok &= all(s.report.lambda_clamped and s.report.lam == -bound for s in shrink.states[1:])
    feasible_ok = True
    n_steps = 0
    notes = []
    for name in SHIPPED:
        tr = cached_run(scenario(name))[0]
        inv = state_invariants(tr)
        tol = _vol_tol(tr)
        for i, s in enumerate(tr.states[1:], start=1):
            topo = s.report.n_components != tr.states[i - 1].report.n_components
            if topo:
                # the extracted area is discontinuous across a pinch: reported, not counted
                notes.append(f"{name} t={s.t:g} topology step |vol-m0|={abs(s.report.volume - tr.m0) / tr.dx**2:.1f}dx^2")
                continue
            n_steps += 1
            feasible_ok &= (not s.report.lambda_clamped) and abs(s.report.volume - tr.m0) <= tol
        feasible_ok &= inv["volume"]
    ok = clamped_ok and feasible_ok
    record_criterion(10, ok, f"infeasible: clamped with |lambda|=1/sqrt(h) exactly: {clamped_ok}; "
                             f"feasible: {n_steps} regular steps unclamped within vol_tol: {feasible_ok}; "
                             + "; ".join(notes))
    assert ok
