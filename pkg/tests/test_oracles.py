import numpy as np
import pytest

from flatflow.contour import contour_from_points
from flatflow.exceptions import GraphTooLargeError
from flatflow.grid import GridSpec
from flatflow.oracles import (anisotropic_energy, brute_pair_distance, exhaustive_minimum, front_tracking_rate,
                              linearized_rate, mincut_minimum, mincut_solve, rolling_ball)


def circle_pts(n, R=1.0, cx=0.0, cy=0.0):
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([cx + R * np.cos(t), cy + R * np.sin(t)])


def test_mincut_positive_field_is_empty():
    g = GridSpec.square(16)
    U, energy = mincut_solve(np.full(g.shape, 0.7), g)
    assert not U.any() and energy == 0.0


def test_mincut_single_cell_3x3():
    dx = 0.5
    f = np.full((3, 3), 1 / dx**2)
    f[1, 1] = -10 / dx**2
    U, energy = mincut_minimum(f, dx)
    Ue, ee, _ = exhaustive_minimum(f, dx)
    assert energy == pytest.approx(ee, abs=1e-12)
    # lone cell: -10 + 4 dx; whole box (no perimeter under Neumann): -10 + 8
    expected = np.zeros((3, 3))
    expected[1, 1] = 1
    assert np.array_equal(U, expected) and np.array_equal(Ue, expected)


def test_mincut_matches_exhaustive_4x4():
    rng = np.random.default_rng(7)
    for _ in range(25):
        f = rng.uniform(-1, 1, (4, 4)) * 8
        U, energy = mincut_minimum(f, 0.25)
        _, best, energies = exhaustive_minimum(f, 0.25)
        assert energy == pytest.approx(best, abs=1e-12)
        assert np.all(energy <= energies + 1e-12)
        assert anisotropic_energy(U, f, 0.25) == pytest.approx(energy)


def test_mincut_graph_too_large():
    with pytest.raises(GraphTooLargeError):
        mincut_minimum(np.zeros((129, 128)), 0.01)
    with pytest.raises(GraphTooLargeError):
        exhaustive_minimum(np.zeros((5, 5)), 0.1)


def test_rolling_ball_examples():
    assert rolling_ball([contour_from_points(circle_pts(1024))]) == pytest.approx(1.0, rel=0.01)
    t = 2 * np.pi * np.arange(1024) / 1024
    ell = contour_from_points(np.column_stack([1.5 * np.cos(t), 0.75 * np.sin(t)]))
    assert rolling_ball([ell]) == pytest.approx(0.375, rel=0.03)
    cs = [contour_from_points(circle_pts(512, 1.0, -1.2)), contour_from_points(circle_pts(512, 1.0, 1.2))]
    assert rolling_ball(cs) == pytest.approx(0.2, rel=0.05)


def test_rolling_ball_scale_and_rotation():
    t = 2 * np.pi * np.arange(600) / 600
    pts = np.column_stack([1.2 * np.cos(t), 0.7 * np.sin(t)])
    base = rolling_ball([contour_from_points(pts)])
    assert rolling_ball([contour_from_points(2.5 * pts)]) == pytest.approx(2.5 * base, rel=1e-6)
    th = 0.4
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert rolling_ball([contour_from_points(pts @ rot.T)]) == pytest.approx(base, rel=1e-6)


def test_brute_pair_distance():
    c = contour_from_points(circle_pts(256))
    assert brute_pair_distance(c.vertices[:5], [c]) == pytest.approx(np.zeros(5), abs=1e-15)
    d = brute_pair_distance(np.array([[2.0, 2.0]]), [c])
    assert d[0] == pytest.approx(np.hypot(2, 2) - 1, abs=1e-4)


def test_linearized_rate():
    with pytest.raises(ValueError):
        linearized_rate(1)
    r2, r3 = linearized_rate(2), linearized_rate(3)
    assert r3 > r2 > 0
    for k in (2, 3):
        assert front_tracking_rate(k, n_angles=256) == pytest.approx(linearized_rate(k), rel=0.01)
