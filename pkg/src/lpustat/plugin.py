"""Parameter estimation and the substitution estimator on estimated innovations.

The substitution estimator recovers innovations ``X_{n,j}(theta_hat)``,
evaluates the U-statistic with weights ``alpha_r = delta_{r-1}(theta_hat)``
and applies the constraint correction with ``psi(X_{n,j}(theta_hat))``.
One sampling pass serves the point estimate, the projection coefficient and
the plug-in standard error.
"""

from dataclasses import asdict, dataclass, field
import json
import math
import warnings

import numpy as np
from scipy import optimize

from .constrained import IDENTITY, a_star_hat, constrained_estimate
from .innovations import ScoreUnavailable
from .process import recover_innovations, xi_vectors
from ._validation import DomainError, check_series
from .ustat import RateConditionWarning, UStatConfig, choose_m, default_B, ustat

__all__ = [
    "EstimateReport",
    "DomainClipWarning",
    "MissingInfluenceWarning",
    "least_squares_ar1",
    "mu_hat",
    "estimate_theta",
    "one_step_efficient_ar1",
    "theta_influence",
    "substitution_estimate",
    "plugin_se",
]

BOUNDARY_MARGIN = 1e-3


class DomainClipWarning(UserWarning):
    """An estimate fell outside the model domain and was moved inside."""


class MissingInfluenceWarning(UserWarning):
    """No influence function is known for the parameter estimator."""


@dataclass
class EstimateReport:
    """Outcome of :func:`substitution_estimate`.

    ``config`` echoes every input needed to reproduce the numbers.
    """

    kappa_hat: float
    theta_hat: list
    a_star_hat: float
    m: int
    r: int
    B: int
    se_plugin: float
    kappa_tilde: float
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def csv_row(self):
        return {
            "kappa_hat": self.kappa_hat,
            "theta_hat": " ".join(repr(float(t)) for t in self.theta_hat),
            "a_star_hat": self.a_star_hat,
            "se_plugin": self.se_plugin,
            "m": self.m,
            "r": self.r,
            "B": self.B,
        }


def least_squares_ar1(path):
    """``sum Y_{j-1} Y_j / sum Y_{j-1}**2`` over ``j = 1..n``."""
    y, x = path.obs, path.lagged
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise ValueError("least squares needs a path with some nonzero lagged value")
    return float(np.dot(x, y) / denom)


def mu_hat(path, theta, k):
    """Moment ``(1/n) sum (Y_j - theta Y_{j-1})**k`` of AR(1) residuals."""
    resid = path.obs - float(np.atleast_1d(theta)[0]) * path.lagged
    return float(np.mean(resid**k))


def _clip_to_domain(model, theta):
    """Move ``theta`` inside ``|theta_i| <= 1 - margin``; warn if it moved."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    bound = 1.0 - BOUNDARY_MARGIN
    clipped = np.clip(theta, -bound, bound)
    if np.any(clipped != theta):
        warnings.warn(
            f"{model.name} estimate {theta.tolist()} outside the domain; clipped to {clipped.tolist()}",
            DomainClipWarning,
            stacklevel=3,
        )
    return clipped


def _autocov(y, lag):
    y = y - y.mean()
    return float(np.dot(y[lag:], y[: y.size - lag]) / y.size)


def _ma1_from_rho(rho):
    if abs(rho) > 0.5:
        raise DomainError(f"lag-1 autocorrelation {rho:.4f} exceeds 0.5: no invertible MA(1) root")
    if rho == 0.0:
        return 0.0
    return (1.0 - math.sqrt(1.0 - 4.0 * rho * rho)) / (2.0 * rho)


def _arma11_moments(y):
    c0, c1, c2 = (_autocov(y, k) for k in range(3))
    if c0 == 0.0 or c1 == 0.0:
        raise DomainError("lag-1 autocovariance vanishes; ARMA(1,1) moments are not identified")
    rho1 = c1 / c0
    phi = c2 / c1
    if abs(phi) >= 1:
        raise DomainError(f"autoregressive moment estimate {phi:.4f} is not stationary")
    # rho1 (1 + t^2 - 2 phi t) = (phi - t)(1 - phi t), quadratic in the MA parameter t
    coefs = [rho1 - phi, 1.0 + phi * phi - 2.0 * phi * rho1, rho1 - phi]
    if coefs[0] == 0.0:
        return np.array([phi, phi])
    roots = np.roots(coefs)
    real = roots[np.abs(roots.imag) < 1e-12].real
    inside = real[np.abs(real) <= 1.0]
    if inside.size == 0:
        raise DomainError("no real invertible ARMA(1,1) moving-average root")
    return np.array([phi, float(inside[np.argmin(np.abs(inside))])])


def _conditional_least_squares(path, model, start):
    bound = 1.0 - BOUNDARY_MARGIN
    start = np.clip(start, -bound + 1e-9, bound - 1e-9)

    def resid(th):
        return recover_innovations(path, model, th)

    def jac(th):
        return xi_vectors(path, model, th)

    fit = optimize.least_squares(resid, start, jac=jac, bounds=(-bound, bound), method="trf")
    return fit.x


def estimate_theta(path, model, method="least-squares"):
    """Root-n consistent estimate of the model parameter.

    ``least-squares`` is the closed form for AR1 and conditional least squares
    (minimising the sum of squared recovered innovations, started from the
    moment estimate) otherwise. ``moment-match`` inverts the lag-1
    autocorrelation for MA1 and lag-1/lag-2 autocovariances for ARMA11.
    Estimates outside the domain are clipped to distance ``1e-3`` from the
    boundary with a :class:`DomainClipWarning`.
    """
    name = model.name
    if method not in ("least-squares", "moment-match"):
        raise ValueError(f"unknown method {method!r}")
    y = path.obs
    if name == "AR1":
        theta = np.array([least_squares_ar1(path)])
    elif name == "MA1":
        theta = np.array([_ma1_from_rho(_autocov(y, 1) / _autocov(y, 0))])
        if method == "least-squares":
            theta = _conditional_least_squares(path, model, _clip_to_domain(model, theta))
    elif name == "ARMA11":
        theta = _arma11_moments(y)
        if method == "least-squares":
            start = _clip_to_domain(model, theta)
            if abs(start[0] - start[1]) < 1e-2:
                start = start + np.array([0.05, -0.05])
            theta = _conditional_least_squares(path, model, start)
    else:
        raise ValueError(f"no parameter estimator for custom model {name!r}")
    return _clip_to_domain(model, theta)


def _feasible_interval(path, spec):
    """Parameters keeping every residual ``Y_j - t Y_{j-1}`` inside the support."""
    bound = 1.0 - BOUNDARY_MARGIN
    lo, hi = -bound, bound
    if spec.family == "gamma":
        y, x = path.obs, path.lagged
        k = spec.params["shape"]
        pos, neg = x > 0, x < 0
        if np.any(pos):
            hi = min(hi, float(np.min((y[pos] + k) / x[pos])))
        if np.any(neg):
            lo = max(lo, float(np.max((y[neg] + k) / x[neg])))
    if not lo < hi:
        raise DomainError("no AR(1) parameter keeps all residuals inside the innovation support")
    return lo, hi


def one_step_efficient_ar1(path, theta_init, spec, nuisance="oracle", update="root"):
    """Efficient AR(1) estimate using the known innovation score ``l``.

    The Fisher-scoring step is::

        theta# = theta - (1 - theta**2) / (n mu2 I) * sum_j Y_{j-1} l(Y_j - theta Y_{j-1})

    With ``update="root"`` (default) the step is iterated to its fixed point,
    the root of ``sum_j Y_{j-1} l(Y_j - t Y_{j-1}) = 0``. For log-concave
    innovation laws the sum is monotone in ``t``, so the root is unique and is
    found by bracketing on the parameters that keep every residual inside the
    support. It has the same influence function as a single step but does not
    break down when residuals approach a support boundary, where the score of
    e.g. a gamma law is unbounded. ``update="step"`` takes one step from
    ``theta_init``, halving it until the residuals stay in the support and the
    score sum shrinks.

    Parameters
    ----------
    nuisance : {"oracle", "plug-in"}
        Source of ``mu2`` and ``I`` in the step length: the law's exact values,
        or residual moments ``mu_hat`` and the mean squared score.
    """
    if not spec.has_score:
        raise ScoreUnavailable(f"{spec.family} innovations have no usable score")
    if nuisance not in ("oracle", "plug-in"):
        raise ValueError(f"nuisance must be 'oracle' or 'plug-in', got {nuisance!r}")
    if update not in ("root", "step"):
        raise ValueError(f"update must be 'root' or 'step', got {update!r}")
    y, x = path.obs, path.lagged
    n = y.size
    lo, hi = _feasible_interval(path, spec)
    width = hi - lo

    def psi(t):
        return float(np.sum(x * spec.score(y - t * x)))

    if update == "root":
        a, b = lo + 1e-12 * width, hi - 1e-12 * width
        fa, fb = psi(a), psi(b)
        if fa <= 0.0 <= fb:
            if fa == 0.0:
                return a
            if fb == 0.0:
                return b
            return float(optimize.brentq(psi, a, b, xtol=1e-14))
        warnings.warn("score equation has no sign change on the domain; taking a single step",
                      DomainClipWarning, stacklevel=2)

    t0 = float(np.clip(np.atleast_1d(theta_init)[0], lo + 1e-6 * width, hi - 1e-6 * width))
    if nuisance == "oracle":
        mu2, info = spec.moment(2), spec.fisher_info
    else:
        mu2 = mu_hat(path, t0, 2)
        info = float(np.mean(spec.score(y - t0 * x) ** 2))
    s0 = psi(t0)
    step = -(1.0 - t0 * t0) / (n * mu2 * info) * s0
    lam = 1.0
    while lam > 1e-10:
        t1 = t0 + lam * step
        if lo < t1 < hi and abs(psi(t1)) <= abs(s0):
            return t1
        lam /= 2.0
    return t0


def theta_influence(path, model, theta, method, spec=None):
    """Per-observation influence ``w_j`` of the parameter estimator, shape ``(n, d)``.

    ``least-squares``: ``-V^{-1} xi_j X_j`` with ``V`` the mean of ``xi xi^T``.
    ``one-step``: ``V^{-1} xi_j l(X_j) / I``. Returns ``None`` for methods
    without a known influence function.
    """
    if method not in ("least-squares", "one-step"):
        return None
    theta = model.check(theta)
    X = recover_innovations(path, model, theta)
    xi = xi_vectors(path, model, theta)
    V = xi.T @ xi / xi.shape[0]
    if method == "least-squares":
        return -np.linalg.solve(V, (xi * X[:, None]).T).T
    if spec is None or not spec.has_score:
        raise ScoreUnavailable("the one-step influence needs an innovation law with a score")
    score = spec.score(X)
    return np.linalg.solve(V, (xi * score[:, None]).T).T / spec.fisher_info


def plugin_se(X, result, a_star, psi=None, gradient=None, influence=None):
    """Standard error from per-observation influence estimates.

    Each observation contributes ``sum_r H[j, r] - m kappa_tilde - a_star psi(X_j)``
    plus ``gradient . w_j`` when the parameter influence ``w`` is given.
    Returns the sample SD of the contributions divided by ``sqrt(n)``.
    """
    psi = IDENTITY if psi is None else psi
    X = check_series(X, "X")
    if result.H is None:
        raise ValueError("plugin_se needs the bucket table of the U-statistic")
    u = result.bucket_row_sums() - result.m * result.kappa_tilde - a_star * np.asarray(psi(X))
    if influence is not None and gradient is not None:
        u = u + np.asarray(influence).reshape(X.size, -1) @ np.atleast_1d(gradient)
    if X.size < 2:
        return float("nan")
    return float(np.std(u, ddof=1) / math.sqrt(X.size))


def _tail_excess(model, theta, m, n):
    """``sqrt(n) * sum_{r>m} |alpha_r|`` from a long coefficient prefix."""
    long = np.abs(model.delta(theta, m + 2000))
    return math.sqrt(n) * float(np.sum(long[m - 1:]))


def substitution_estimate(path, model, theta_hat, h, psi=None, config=None, theta_method=None,
                          spec=None):
    """Constrained U-statistic estimate of ``E[h(Y_0)]`` at an estimated parameter.

    Parameters
    ----------
    path : ProcessPath
    model : CoefficientModel
    theta_hat : array_like
        Parameter estimate; must lie in the model domain.
    h : SmoothFunction
    psi : ConstraintSpec, optional
        Defaults to the identity.
    config : UStatConfig, optional
        ``None`` chooses ``m`` with :func:`choose_m` and incomplete sampling
        with the default ``B``.
    theta_method : {"least-squares", "one-step", "moment-match", None}
        Used only to pick the parameter influence in ``se_plugin``.
    spec : InnovationSpec, optional
        Needed for the one-step influence.

    Returns
    -------
    EstimateReport
    """
    psi = IDENTITY if psi is None else psi
    theta = model.check(theta_hat)
    n = path.n
    rate_warnings = []
    if config is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RateConditionWarning)
            m, msgs = choose_m(n, return_diagnostics=True)
        rate_warnings.extend(msgs)
        config = UStatConfig(m=m)
    m = config.m
    excess = _tail_excess(model, theta, m, n)
    if excess > 0.1:
        msg = f"sqrt(n) * tail sum beyond m={m} is {excess:.3g} > 0.1"
        if msg not in rate_warnings:
            rate_warnings.append(msg)

    X = recover_innovations(path, model, theta)
    alpha = model.alpha(theta, m)
    alpha_dot = model.alpha_dot(theta, m)
    res = ustat(X, alpha, h, config, beta_dot=alpha_dot, h_prime=h.h_prime)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        a_hat = a_star_hat(X, res, psi)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    kappa = constrained_estimate(res, a_hat, X, psi)

    influence = None
    if theta_method is not None:
        influence = theta_influence(path, model, theta, theta_method, spec)
        if influence is None:
            warnings.warn(f"no influence function for {theta_method!r}; se_plugin ignores it",
                          MissingInfluenceWarning, stacklevel=2)
    se = plugin_se(X, res, a_hat, psi, res.grad_mean, influence)

    ss_resid = None
    if path.true_innovations is not None:
        ss_resid = float(np.sum((X - path.true_innovations) ** 2))
    B = res.tuples_used
    return EstimateReport(
        kappa_hat=kappa,
        theta_hat=theta.tolist(),
        a_star_hat=a_hat,
        m=m,
        r=path.r,
        B=int(B),
        se_plugin=se,
        kappa_tilde=float(res.kappa_tilde),
        diagnostics={
            "innovation_ss_resid": ss_resid,
            "empty_bucket_fraction": float(res.empty_bucket_fraction),
            "rate_warnings": rate_warnings,
            "sampling_se": float(res.sampling_se),
            "gradient": None if res.grad_mean is None else res.grad_mean.tolist(),
        },
        config={
            "model": model.name,
            "h": h.to_dict(),
            "psi": psi.name,
            "theta_method": theta_method,
            "m": m,
            "mode": config.mode,
            "B": None if config.B is None else int(config.B),
            "B_resolved": int(default_B(n, m) if config.B is None and config.mode == "incomplete" else B),
            "n_partitions": config.n_partitions,
            "random_state": config.random_state if isinstance(config.random_state, (int, type(None)))
            else repr(config.random_state),
            "n": n,
        },
    )
