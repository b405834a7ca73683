"""scikit-learn style wrappers around the simulator and the geometry diagnostics.

``FlatFlowEstimator`` follows the estimator conventions (constructor only
stores parameters, ``fit`` returns ``self``, fitted state ends in ``_``,
``get_params``/``set_params``/``clone`` work), but its input is an analytic
shape rather than a feature matrix, so it is not meant for pipelines or
cross-validation. ``TwoPointFeatures`` is an ordinary stateless transformer
mapping closed polylines to a feature row.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .contour import contour_from_points
from .flow import ALL_CHECKS, FlowConfig, StepSettings, run_checks, run_flow
from .grid import GridSpec, Shape, shape_from_dict
from .oracles import rolling_ball
from .two_point import two_point_report


class FlatFlowEstimator(BaseEstimator):
    """Run the scheme from an initial shape; ``predict`` returns the set at given times.

    Parameters mirror the run config: time step ``h``, horizon ``T``, a square
    grid of ``n`` cells per side on ``[-half_width, half_width]^2`` and the
    primal-dual tolerance ``pd_tol``.
    """

    def __init__(self, h=5e-3, T=0.5, n=256, half_width=2.0, pd_tol=1e-5, pd_max_iter=10000,
                 checks=ALL_CHECKS, target_volume=None):
        self.h = h
        self.T = T
        self.n = n
        self.half_width = half_width
        self.pd_tol = pd_tol
        self.pd_max_iter = pd_max_iter
        self.checks = checks
        self.target_volume = target_volume

    def _config(self, shape):
        step = StepSettings(pd_tol=self.pd_tol, pd_max_iter=self.pd_max_iter)
        return FlowConfig(shape, GridSpec.square(self.n, self.half_width), self.h, self.T, step,
                          tuple(self.checks), self.target_volume, name=shape.kind)

    def fit(self, X, y=None):
        """``X`` is a :class:`Shape` or its dict form (``{"kind": ..., ...}``)."""
        shape = shape_from_dict(X) if isinstance(X, dict) else X
        if not isinstance(shape, Shape):
            raise TypeError("X must be a Shape or a shape dict")
        self.trace_ = run_flow(self._config(shape))
        self.verdicts_ = run_checks(self.trace_)
        self.times_ = self.trace_.series("t")
        self.singular_ = self.trace_.singular_flag
        return self

    def predict(self, X):
        """Contours of the last computed state at or before each time in ``X``."""
        check_is_fitted(self, "trace_")
        times = np.atleast_1d(np.asarray(X, dtype=float))
        idx = np.searchsorted(self.times_, times + 1e-12, side="right") - 1
        idx = np.clip(idx, 0, len(self.times_) - 1)
        return [self.trace_.states[k].contours for k in idx]

    def score(self, X=None, y=None):
        """Fraction of applicable checks that passed."""
        check_is_fitted(self, "verdicts_")
        used = [v for v in self.verdicts_.values() if v.get("applicable", True)]
        return float(np.mean([v["pass"] for v in used])) if used else 1.0


class TwoPointFeatures(TransformerMixin, BaseEstimator):
    """Map each closed polyline (``(n, 2)`` vertex array) to geometry features.

    Columns: ``s_norm, ubc_radius, rolling_ball, normal_lip, perimeter, area``.
    """

    feature_names = ("s_norm", "ubc_radius", "rolling_ball", "normal_lip", "perimeter", "area")

    def __init__(self, with_rolling_ball=True):
        self.with_rolling_ball = with_rolling_ball

    def fit(self, X, y=None):
        self.n_features_out_ = len(self.feature_names)
        return self

    def transform(self, X):
        rows = []
        for pts in X:
            c = contour_from_points(np.asarray(pts, dtype=float))
            tp = two_point_report([c])
            rb = rolling_ball([c]) if self.with_rolling_ball else np.nan
            rows.append([tp.s_norm, tp.ubc_radius, rb, tp.normal_lip, c.length, abs(c.area)])
        return np.asarray(rows, dtype=float).reshape(-1, len(self.feature_names))

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.feature_names, dtype=object)
