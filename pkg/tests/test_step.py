import math

import numpy as np
import pytest

from flatflow.contour import contour_from_points, extract_contours
from flatflow.distance import signed_distance
from flatflow.exceptions import ConfigError
from flatflow.flow import initial_contours
from flatflow.grid import Circle, GridSpec, IndicatorField, Stadium, field_volume
from flatflow.step import (StepConfig, euler_lagrange_residual, solve_relaxed, step_energy, threshold,
                           total_variation, volume_bisection)


def circle_pts(n, R=1.0):
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([R * np.cos(t), R * np.sin(t)])


@pytest.fixture(scope="module")
def g():
    return GridSpec.square(256)


@pytest.fixture(scope="module")
def circle_sdf(g):
    return signed_distance([contour_from_points(circle_pts(2048))], g)


@pytest.fixture(scope="module")
def stationary(circle_sdf):
    cfg = StepConfig(h=5e-3, m0=math.pi)
    return volume_bisection(circle_sdf, cfg), cfg


def test_constant_fields():
    g = GridSpec.square(32)
    assert not (solve_relaxed(np.full(g.shape, 0.1), g).w > 0).any()
    assert (solve_relaxed(np.full(g.shape, -0.1), g).w > 0).all()


def test_pure_mcf_circle_step(g, circle_sdf):
    # radial stationarity 1/r = (R - r)/h
    h = 0.02
    r_exact = 0.5 + math.sqrt(0.25 - h)
    sol = solve_relaxed(circle_sdf.d / h, g)
    cs = extract_contours(sol.indicator())
    r = math.sqrt(cs[0].area / math.pi)
    assert r_exact == pytest.approx(0.9798, abs=5e-4)
    assert r == pytest.approx(r_exact, abs=g.dx)


def test_stationary_circle_multiplier(g, stationary):
    res, cfg = stationary
    assert not res.lambda_clamped
    assert res.lam == pytest.approx(1.0, rel=0.1)
    assert abs(res.volume - math.pi) <= cfg.resolved_vol_tol(g)
    assert res.sup_abs_d <= 2 * g.dx


def test_bisection_log_monotone(stationary):
    res, _ = stationary
    log = sorted(res.bisection_log)
    vols = [v for _, v in log]
    assert all(a <= b + 1e-12 for a, b in zip(vols, vols[1:]))


def test_euler_lagrange_residual(g, circle_sdf, stationary):
    res, cfg = stationary
    _, l2, linf = euler_lagrange_residual(res, res.contours, circle_sdf, cfg.h)
    assert linf <= max(0.1, 5 * g.dx / cfg.h)


def test_energy_decreases(stationary):
    res, cfg = stationary
    assert res.energy <= res.energy_prev + cfg.pd_tol * abs(res.energy_prev) + 1e-12


def test_clamped_multiplier():
    g = GridSpec.square(128)
    sdf = signed_distance([contour_from_points(circle_pts(1024, 0.5))], g)
    h = 0.01
    res = volume_bisection(sdf, StepConfig(h=h, m0=10 * math.pi * 0.25))
    assert res.lambda_clamped
    assert abs(res.lam) == 1 / math.sqrt(h)
    res = volume_bisection(sdf, StepConfig(h=h, m0=0.01))
    assert res.lambda_clamped and res.lam == -1 / math.sqrt(h)


def test_threshold_examples():
    g = GridSpec.square(16)
    assert not threshold(IndicatorField(g, np.full(g.shape, 0.4))).values.any()
    assert threshold(IndicatorField(g, np.full(g.shape, 0.6))).values.all()


def test_threshold_level_robustness(g, circle_sdf, stationary):
    res, cfg = stationary
    energies = [step_energy(threshold(res.u, s).values, circle_sdf.d, cfg.h, cfg.m0, g) for s in (0.3, 0.7)]
    assert abs(energies[0] - energies[1]) <= 0.01 * abs(energies[0])


def test_perimeter_not_increased(g):
    cs = initial_contours(Stadium(), g)
    sdf = signed_distance(cs, g)
    res = volume_bisection(sdf, StepConfig(h=5e-3, m0=sum(c.area for c in cs)))
    assert sum(c.length for c in res.contours) <= sum(c.length for c in cs) + 4 * g.dx


def test_config_validation(g):
    with pytest.raises(ConfigError):
        StepConfig(h=0.0, m0=1.0)
    with pytest.raises(ConfigError):
        StepConfig(h=1e-3, m0=-1.0)
    with pytest.raises(ConfigError) as e:
        StepConfig(h=1e-3, m0=1.0, pd_tol=1e-2)
    assert e.value.key == "step.pd_tol"
    with pytest.raises(ConfigError):
        StepConfig(h=g.dx**2 / 5, m0=1.0).validate(g)
    with pytest.raises(ConfigError):
        StepConfig(h=1e-3, m0=1.0, vol_tol=g.dx**2 / 2).validate(g)


def test_total_variation_of_square():
    g = GridSpec(64, 64, 0.0, 1.0, 0.0, 1.0)
    U = np.zeros(g.shape)
    U[16:48, 16:48] = 1
    assert total_variation(U, g.dx, anisotropic=True) == pytest.approx(2.0)
    assert field_volume(IndicatorField(g, U)) == pytest.approx(0.25)
