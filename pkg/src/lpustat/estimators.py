"""Estimator-style wrappers with ``fit``/``transform`` and ``get_params``.

Every wrapper takes a one-dimensional series. For the process-based
wrappers the first ``r + 1`` entries are the pre-observations
``Y_{-r}, ..., Y_0``.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .constrained import a_star_hat, constrained_estimate
from .functions import get_function
from .plugin import estimate_theta, one_step_efficient_ar1, substitution_estimate
from .process import ProcessPath, default_r, get_model, recover_innovations
from ._validation import check_series
from .ustat import UStatConfig, choose_m, ustat

__all__ = ["InnovationFilter", "UStatisticEstimator", "LinearProcessExpectation"]


def _resolve_h(h):
    if isinstance(h, str):
        return get_function(h)
    return h


def _split(y, r):
    y = check_series(y, "y", min_length=2)
    r = default_r(y.size) if r is None else int(r)
    if r + 1 >= y.size:
        raise ValueError(f"series of length {y.size} leaves no observations after r={r}")
    return ProcessPath(pre_obs=y[: r + 1], obs=y[r + 1:])


class InnovationFilter(BaseEstimator, TransformerMixin):
    """Recover innovations of a linear process.

    Parameters
    ----------
    model : str
        ``AR1``, ``MA1`` or ``ARMA11``.
    theta : array_like, optional
        Fixed parameter; estimated in ``fit`` when ``None``.
    method : str
        Parameter estimator used when ``theta`` is ``None``.
    r : int, optional
        Number of pre-observations minus one; default from the series length.
    """

    def __init__(self, model="AR1", theta=None, method="least-squares", r=None):
        self.model = model
        self.theta = theta
        self.method = method
        self.r = r

    def fit(self, y, x=None):
        path = _split(y, self.r)
        model = get_model(self.model)
        if self.theta is None:
            self.theta_ = estimate_theta(path, model, self.method)
        else:
            self.theta_ = model.check(self.theta)
        self.r_ = path.r
        return self

    def transform(self, y):
        """Innovations ``X_{n,j}``, ``j = 1..n``, for the observations after the pre-sample."""
        check_is_fitted(self, "theta_")
        path = _split(y, self.r_)
        return recover_innovations(path, get_model(self.model), self.theta_)


class UStatisticEstimator(BaseEstimator):
    """Constrained U-statistic for ``E[h(sum_r beta_r X_r)]`` from i.i.d. ``X``.

    After ``fit``: ``kappa_tilde_`` (plain U-statistic), ``a_star_`` and
    ``kappa_hat_`` (constraint-corrected when ``constrained=True``) and
    ``result_`` (the full :class:`UStatResult`).
    """

    def __init__(self, beta=(1.0,), h="square", mode="incomplete", B=None, random_state=None,
                 n_partitions=1, constrained=True):
        self.beta = beta
        self.h = h
        self.mode = mode
        self.B = B
        self.random_state = random_state
        self.n_partitions = n_partitions
        self.constrained = constrained

    def fit(self, X, y=None):
        X = check_series(X, "X")
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        cfg = UStatConfig(m=beta.size, mode=self.mode, B=self.B, random_state=self.random_state,
                          n_partitions=self.n_partitions)
        self.result_ = ustat(X, beta, _resolve_h(self.h), cfg)
        self.kappa_tilde_ = self.result_.kappa_tilde
        if self.constrained:
            self.a_star_ = a_star_hat(X, self.result_)
            self.kappa_hat_ = constrained_estimate(self.result_, self.a_star_, X)
        else:
            self.a_star_ = 0.0
            self.kappa_hat_ = self.kappa_tilde_
        return self


class LinearProcessExpectation(BaseEstimator):
    """Estimate ``E[h(Y_0)]`` from an observed linear process path.

    Parameters
    ----------
    model : str
    h : str or SmoothFunction
    theta_method : {"least-squares", "moment-match", "one-step"}
        ``one-step`` (AR1 only) needs ``innovations``, the known innovation law.
    innovations : InnovationSpec, optional
    m : int, optional
        U-statistic order; chosen from the sample size when ``None``.
    """

    def __init__(self, model="AR1", h="square", theta_method="least-squares", innovations=None,
                 m=None, mode="incomplete", B=None, random_state=None, n_partitions=1, r=None):
        self.model = model
        self.h = h
        self.theta_method = theta_method
        self.innovations = innovations
        self.m = m
        self.mode = mode
        self.B = B
        self.random_state = random_state
        self.n_partitions = n_partitions
        self.r = r

    def fit(self, y, x=None):
        path = _split(y, self.r)
        model = get_model(self.model)
        if self.theta_method == "one-step":
            if self.innovations is None:
                raise ValueError("theta_method='one-step' needs the innovation law")
            start = estimate_theta(path, model, "least-squares")
            theta = np.array([one_step_efficient_ar1(path, start, self.innovations)])
        else:
            theta = estimate_theta(path, model, self.theta_method)
        m = choose_m(path.n) if self.m is None else self.m
        cfg = UStatConfig(m=m, mode=self.mode, B=self.B, random_state=self.random_state,
                          n_partitions=self.n_partitions)
        self.report_ = substitution_estimate(path, model, theta, _resolve_h(self.h), config=cfg,
                                             theta_method=self.theta_method, spec=self.innovations)
        self.theta_ = theta
        self.kappa_hat_ = self.report_.kappa_hat
        self.se_ = self.report_.se_plugin
        return self
