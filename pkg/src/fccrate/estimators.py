"""scikit-learn style wrappers around the estimation functions.

The classes follow the usual contract: hyper-parameters are plain
``__init__`` arguments, ``fit`` learns trailing-underscore attributes and
returns ``self``, so they work with ``get_params``/``clone``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_samples, check_strategy, check_traces
from .crowd import (PipelineParams, assess_fleet, build_references, fleet_report,
                    preprocess)
from .estimator import (ExpCapacityModel, estimate_from_samples, fit_exp_model)


class RateFccEstimator(BaseEstimator):
    """Per-trace FCC estimate from the CC-phase charging rate.

    ``c_new`` is the rate of a new battery of the same model on the same
    charger. When it is None, ``fit`` learns it from traces of known-new
    batteries (their median CC rate).

    Examples
    --------
    >>> est = RateFccEstimator(fcc_new_mah=2100, c_new=0.44)      # doctest: +SKIP
    >>> est.predict([trace])                                       # doctest: +SKIP
    array([2098.])
    """

    def __init__(self, fcc_new_mah=2100.0, c_new=None, v_max_mv=4200.0, tol_mv=50.0,
                 strategy="at_cc_end"):
        self.fcc_new_mah = fcc_new_mah
        self.c_new = c_new
        self.v_max_mv = v_max_mv
        self.tol_mv = tol_mv
        self.strategy = strategy

    def fit(self, X=None, y=None):
        if self.c_new is not None:
            if self.c_new <= 0:
                raise ValueError("c_new must be positive")
            self.c_new_ = float(self.c_new)
            return self
        if X is None:
            raise ValueError("c_new is None: fit needs traces from new batteries")
        rates = [self._estimate(t, 1.0).c_now for t in check_traces(X)]
        self.c_new_ = float(np.median(rates))
        return self

    def _estimate(self, trace, c_new):
        return estimate_from_samples(trace, self.fcc_new_mah, c_new, self.v_max_mv,
                                     check_strategy(self.strategy), self.tol_mv)

    def estimate(self, trace):
        """Full :class:`FccEstimate` for one trace."""
        check_is_fitted(self, "c_new_")
        return self._estimate(check_samples(trace), self.c_new_)

    def predict(self, X):
        """Estimated FCC in mAh, one per trace."""
        check_is_fitted(self, "c_new_")
        return np.array([self._estimate(t, self.c_new_).fcc_now_mah for t in check_traces(X)],
                        dtype=float)


class CapacityCurveRegressor(RegressorMixin, BaseEstimator):
    """Two-term exponential map from rate increase to remaining capacity."""

    def __init__(self, max_nfev=5000, restarts=4, random_state=0):
        self.max_nfev = max_nfev
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=8)
        if X.shape[1] != 1:
            raise ValueError("X must have a single column of rate increases")
        model = fit_exp_model(np.column_stack([X[:, 0], y]), self.max_nfev, self.restarts,
                              self.random_state)
        self.model_ = model
        self.coef_ = np.array([model.a, model.b, model.c, model.d])
        self.rmse_ = model.rmse
        self.r2_ = model.r2
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return self.model_(X[:, 0])

    @classmethod
    def from_model(cls, model: ExpCapacityModel) -> "CapacityCurveRegressor":
        reg = cls()
        reg.model_ = model
        reg.coef_ = np.array([model.a, model.b, model.c, model.d])
        reg.rmse_, reg.r2_ = model.rmse, model.r2
        return reg


class CrowdFccModel(BaseEstimator):
    """Fleet-level capacity-loss detector.

    ``fit`` builds one reference per device model from pooled samples;
    ``assess`` scores devices against them.
    """

    def __init__(self, tol_mv=50.0, skew_alpha=0.05, grubbs_alpha=0.05,
                 min_model_samples=250, min_user_samples=25, coverage_floor=0.6,
                 temp_range_c=(21.0, 40.0), window_days=30.0, min_loss=0.05, cpu_max=None):
        self.tol_mv = tol_mv
        self.skew_alpha = skew_alpha
        self.grubbs_alpha = grubbs_alpha
        self.min_model_samples = min_model_samples
        self.min_user_samples = min_user_samples
        self.coverage_floor = coverage_floor
        self.temp_range_c = temp_range_c
        self.window_days = window_days
        self.min_loss = min_loss
        self.cpu_max = cpu_max

    def _params(self) -> PipelineParams:
        return PipelineParams(
            tol_mv=self.tol_mv, skew_alpha=self.skew_alpha, grubbs_alpha=self.grubbs_alpha,
            min_model_samples=self.min_model_samples, min_user_samples=self.min_user_samples,
            coverage_floor=self.coverage_floor, temp_range_c=tuple(self.temp_range_c),
            window_s=self.window_days * 86400.0, min_loss=self.min_loss, cpu_max=self.cpu_max)

    def fit(self, X, y=None):
        pre = preprocess(X, self._params())
        self.references_, self.rejects_ = build_references(pre, self._params())
        self.n_malformed_ = pre.n_malformed
        return self

    def assess(self, X):
        check_is_fitted(self, "references_")
        return assess_fleet(preprocess(X, self._params()), self.references_, self._params())

    def predict(self, X):
        """Loss fraction per assessed device (NaN where no loss could be computed)."""
        return np.array([np.nan if a.loss_fraction is None else a.loss_fraction
                         for a in self.assess(X)], dtype=float)

    def report(self, X):
        return fleet_report(self.assess(X))
