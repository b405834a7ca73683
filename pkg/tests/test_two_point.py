import numpy as np
import pytest

from flatflow.contour import contour_from_points
from flatflow.exceptions import CoincidentPointsError, TooFewVerticesError
from flatflow.oracles import rolling_ball
from flatflow.two_point import critical_pair_check, s_eps_norm, s_eps_value, s_value, two_point_report


def circle_pts(n, R=1.0, cx=0.0, cy=0.0):
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([cx + R * np.cos(t), cy + R * np.sin(t)])


def ellipse(n=1024, a=1.5, b=0.75):
    t = 2 * np.pi * np.arange(n) / n
    return contour_from_points(np.column_stack([a * np.cos(t), b * np.sin(t)]))


def two_circles(n=512, gap=0.4):
    cx = 1.0 + gap / 2
    return [contour_from_points(circle_pts(n, 1.0, -cx)), contour_from_points(circle_pts(n, 1.0, cx))]


def test_s_value_examples():
    R = 1.7
    x = np.array([R, 0.0])
    for t in (0.3, 1.1, 2.5):
        y = R * np.array([np.cos(t), np.sin(t)])
        assert s_value(x, [1.0, 0.0], y) == pytest.approx(1 / (2 * R), rel=1e-14)
    assert s_value([0, 0], [0, 1], [1, 0]) == 0.0
    assert s_value([1, 0], [1, 0], [-1, 0]) == pytest.approx(0.5)
    with pytest.raises(CoincidentPointsError):
        s_value([1, 0], [1, 0], [1, 0])


def test_s_eps_value_examples():
    x, nu, y = np.array([1.0, 0]), np.array([1.0, 0]), np.array([-1.0, 0])
    assert s_eps_value(x, nu, y, 1e-14) == pytest.approx(0.5)
    assert s_eps_value(x, nu, x, 0.1) == 0.0
    assert s_eps_value(x, nu, y, 4.0) == pytest.approx(0.5 * s_value(x, nu, y))
    with pytest.raises(ValueError):
        s_eps_value(x, nu, y, 0.0)


def test_report_circle():
    rep = two_point_report([contour_from_points(circle_pts(1024))])
    assert rep.s_norm == pytest.approx(0.5, rel=0.005)
    assert rep.ubc_radius == pytest.approx(1.0, rel=0.01)


def test_report_ellipse():
    c = ellipse()
    rep = two_point_report([c])
    assert rep.ubc_radius == pytest.approx(0.75**2 / 1.5, rel=0.03)
    assert rep.ubc_radius == pytest.approx(rolling_ball([c]), rel=0.05)
    chk = critical_pair_check([c], rep)
    x = c.vertices[rep.argmax_pair[0]]
    assert abs(abs(x[0]) - 1.5) < 0.01 and abs(x[1]) < 0.05
    assert c.kappa[rep.argmax_pair[0]] == pytest.approx(2 * rep.s_norm, rel=0.05)
    assert chk.first <= 0.05


def test_report_two_circles():
    cs = two_circles()
    rep = two_point_report(cs)
    assert rep.ubc_radius == pytest.approx(0.2, rel=0.05)
    assert rep.ubc_radius == pytest.approx(rolling_ball(cs), rel=0.05)
    dx = 2 * np.pi / 512
    assert critical_pair_check(cs, rep).tangential * critical_pair_check(cs, rep).distance <= 3 * dx


def test_circle_critical_pair_degenerate():
    c = contour_from_points(circle_pts(256))
    chk = critical_pair_check([c], two_point_report([c]))
    assert chk.degenerate and chk.first == 0.0 and chk.second == 0.0


def test_too_few_vertices():
    with pytest.raises(TooFewVerticesError):
        two_point_report([contour_from_points(circle_pts(20))])


def test_regularization_monotone():
    c = ellipse(512)
    full = two_point_report([c]).s_norm
    vals = [s_eps_norm([c], e) for e in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= full + 1e-12
    assert vals[-1] == pytest.approx(full, rel=1e-2)


def test_scale_covariance():
    pts = ellipse(400).vertices
    a = two_point_report([contour_from_points(pts)])
    b = two_point_report([contour_from_points(3.0 * pts)])
    assert b.s_norm == pytest.approx(a.s_norm / 3, rel=1e-12)
    assert b.ubc_radius == pytest.approx(3 * a.ubc_radius, rel=1e-12)


@pytest.mark.parametrize("cs", [[ellipse()], two_circles(), [contour_from_points(circle_pts(512, 0.6))]])
def test_invariants(cs):
    rep = two_point_report(cs)
    kmax = max(np.max(np.abs(c.kappa)) for c in cs)
    area = sum(c.area for c in cs)
    assert rep.s_norm >= kmax / 2 * 0.98
    assert rep.normal_lip <= 2 * rep.s_norm * 1.05
    # sharp for the disk; an inscribed polygon loses O(1/n^2) of its area, hence the 1e-3 slack
    assert rep.s_norm >= 1 / (2 * np.sqrt(area / np.pi)) * (1 - 1e-3)
