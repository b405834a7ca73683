import math

import numpy as np
import pytest

from flatflow.exceptions import GridError, GridMismatchError, ShapeOutOfBoundsError
from flatflow.grid import (Circle, Dumbbell, Ellipse, FourierStar, GridSpec, IndicatorField, Stadium,
                           UnionOfCircles, field_linfun, field_volume, rasterize, shape_from_dict)


def test_gridspec_validation():
    with pytest.raises(GridError):
        GridSpec(4, 16, 0, 1, 0, 1)
    with pytest.raises(GridError):
        GridSpec(16, 16, 0, 1, 0, 2)      # dx != dy
    with pytest.raises(GridError):
        GridSpec(16, 16, 1, 0, 0, 1)
    g = GridSpec.square(256)
    assert g.dx == g.dy == 4 / 256
    assert GridSpec.from_dict(g.to_dict()) == g


def test_indicator_field_range_and_shape():
    g = GridSpec.square(16)
    with pytest.raises(ValueError):
        IndicatorField(g, np.full(g.shape, 1.5))
    with pytest.raises(GridMismatchError):
        IndicatorField(g, np.zeros((8, 8)))
    u = IndicatorField(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0


def test_field_volume_trivial():
    g = GridSpec(16, 16, 0.0, 1.0, 0.0, 1.0)
    assert field_volume(IndicatorField(g, np.zeros(g.shape))) == 0.0
    assert field_volume(IndicatorField(g, np.ones(g.shape))) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("shape, area", [(Circle(R=1.0), math.pi), (Ellipse(a=1.5, b=0.75), math.pi * 1.5 * 0.75)])
def test_rasterize_volume(shape, area):
    g = GridSpec.square(256)
    assert abs(field_volume(rasterize(shape, g)) - area) <= 2 * g.dx**2


def test_rasterize_out_of_bounds():
    with pytest.raises(ShapeOutOfBoundsError):
        rasterize(Circle(R=1.0, cx=2.0), GridSpec.square(64))


def test_rasterize_second_order_convergence():
    # property: volume error O(dx^2), log-log slope >= 1.8 over 3 refinements
    for shape in (Circle(R=1.0), Circle(R=0.77, cx=0.13, cy=-0.21), Ellipse(a=1.5, b=0.75)):
        ns = np.array([32, 64, 128, 256])
        errs = [abs(field_volume(rasterize(shape, GridSpec.square(n))) - shape.area()) for n in ns]
        slope = np.polyfit(np.log(4.0 / ns), np.log(errs), 1)[0]
        assert slope >= 1.8, (shape, errs)


def test_rasterize_translation_invariance():
    g = GridSpec.square(64)
    dx = g.dx
    shifted = GridSpec(64, 64, -2 + 3 * dx, 2 + 3 * dx, -2 - 5 * dx, 2 - 5 * dx)
    a = rasterize(Ellipse(a=1.2, b=0.7), g).values
    b = rasterize(Ellipse(a=1.2, b=0.7, cx=3 * dx, cy=-5 * dx), shifted).values
    assert np.allclose(a, b, atol=1e-12)


def test_field_linfun():
    g = GridSpec(16, 16, 0.0, 1.0, 0.0, 1.0)
    one = IndicatorField(g, np.ones(g.shape))
    assert field_linfun(one, np.full(g.shape, 3.0)) == pytest.approx(3.0)
    assert field_linfun(IndicatorField(g, np.zeros(g.shape)), np.ones(g.shape)) == 0.0
    with pytest.raises(GridMismatchError):
        field_linfun(one, np.ones((8, 8)))


def test_field_linfun_second_moment():
    # int_{B_1} |x|^2 = pi / 2
    g = GridSpec.square(256)
    u = rasterize(Circle(R=1.0), g)
    X, Y = g.cell_centers()
    assert field_linfun(u, X**2 + Y**2) == pytest.approx(math.pi / 2, abs=1e-3)


@pytest.mark.parametrize("shape", [Circle(R=1.0), Ellipse(), Stadium(), FourierStar(),
                                   Dumbbell(neck_width=0.15, lobe_R=0.6, separation=2.0),
                                   UnionOfCircles(circles=((-1.2, 0, 1), (1.2, 0, 1)))])
def test_boundary_matches_area(shape):
    loops = shape.boundary(0.005)
    area = sum(0.5 * np.sum(l[:, 0] * np.roll(l[:, 1], -1) - np.roll(l[:, 0], -1) * l[:, 1]) for l in loops)
    assert area == pytest.approx(shape.area(), rel=1e-3)
    assert shape_from_dict(shape.to_dict()) == shape


def test_shape_validation():
    with pytest.raises(ValueError):
        Circle(R=-1.0)
    with pytest.raises(ValueError):
        Dumbbell(neck_width=2.0, lobe_R=0.6)
    with pytest.raises(KeyError):
        shape_from_dict({"kind": "hexagon"})
