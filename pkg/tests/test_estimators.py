import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from flatflow.estimators import FlatFlowEstimator, TwoPointFeatures


def circle_pts(n, R=1.0):
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([R * np.cos(t), R * np.sin(t)])


def test_flow_estimator_params_and_clone():
    est = FlatFlowEstimator(h=0.01, T=0.04, n=64)
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict([0.0])


def test_flow_estimator_fit_predict():
    est = FlatFlowEstimator(h=0.01, T=0.04, n=64, checks=("perimeter",))
    assert est.fit({"kind": "circle", "R": 1.0}) is est
    assert np.allclose(est.times_, [0, 0.01, 0.02, 0.03, 0.04])
    out = est.predict([0.0, 0.015, 1.0])
    assert out[1] is est.trace_.states[1].contours
    assert out[2] is est.trace_.states[-1].contours
    assert est.score() == 1.0
    assert not est.singular_
    with pytest.raises(TypeError):
        est.fit([1, 2, 3])


def test_two_point_features():
    X = [circle_pts(512, 1.0), circle_pts(512, 2.0)]
    F = TwoPointFeatures().fit_transform(X)
    assert F.shape == (2, 6)
    names = list(TwoPointFeatures().get_feature_names_out())
    assert F[0, names.index("ubc_radius")] == pytest.approx(1.0, rel=0.01)
    assert F[1, names.index("s_norm")] == pytest.approx(0.25, rel=0.01)
    assert F[1, names.index("area")] == pytest.approx(4 * np.pi, rel=1e-3)
    assert np.isnan(TwoPointFeatures(with_rolling_ball=False).fit_transform(X)[:, 2]).all()
