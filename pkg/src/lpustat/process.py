"""Causal invertible linear processes with parameterized coefficients.

A process is described by its moving-average coefficients ``delta_s(theta)``
and autoregressive coefficients ``gamma_s(theta)``::

    Y_t = X_t + sum_s delta_s X_{t-s}        X_t = Y_t + sum_s gamma_s Y_{t-s}

Named models (AR1, MA1, ARMA11) carry finite lag polynomials, so both
simulation and truncated innovation recovery run as exact recursions.
"""

import csv
from dataclasses import dataclass
import io
import math
from pathlib import Path

import numpy as np
from scipy import signal

from ._seeding import as_generator
from ._validation import DomainError, check_count, check_series, check_theta

__all__ = [
    "CoefficientModel",
    "ProcessPath",
    "ar1",
    "ma1",
    "arma11",
    "custom_model",
    "get_model",
    "default_r",
    "coefficients",
    "simulate",
    "recover_innovations",
    "xi_vectors",
]


def _dpow(t, s):
    """``d/dt t**s`` for integer arrays ``s >= 0``."""
    s = np.asarray(s)
    safe = np.where(s > 0, s - 1, 0)
    return np.where(s > 0, s * t**safe, 0.0)


def default_r(n, c=1.0, eps=0.1):
    """Number of pre-observations ``ceil(c * (log n)**(1 + eps))``."""
    n = check_count(n, "n", minimum=1)
    return max(1, math.ceil(c * math.log(max(n, 2)) ** (1.0 + eps)))


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """Coefficient family of a linear process.

    The ``*_fn`` callables take ``(theta, s)`` with ``theta`` a length-``dim``
    vector and ``s`` an integer array of lags ``>= 1``; the value functions
    return shape ``(len(s),)`` and the gradient functions ``(len(s), dim)``.
    ``rate_fn(theta)`` returns the geometric decay rate of both coefficient
    sequences and ``in_domain_fn(theta)`` tests admissibility.
    ``lag_polys_fn(theta)``, when present, returns ``(ar, ma)`` lag
    polynomials with ``ar(L) Y = ma(L) X``.
    """

    name: str
    dim: int
    delta_fn: object
    gamma_fn: object
    delta_dot_fn: object
    gamma_dot_fn: object
    rate_fn: object
    in_domain_fn: object
    lag_polys_fn: object = None

    def check(self, theta):
        theta = check_theta(theta, self.dim)
        if not self.in_domain_fn(theta):
            raise DomainError(f"theta={theta.tolist()} is outside the {self.name} domain")
        return theta

    def _lags(self, count):
        return np.arange(1, check_count(count, "count") + 1)

    def delta(self, theta, count):
        return np.asarray(self.delta_fn(self.check(theta), self._lags(count)), dtype=float)

    def gamma(self, theta, count):
        return np.asarray(self.gamma_fn(self.check(theta), self._lags(count)), dtype=float)

    def delta_dot(self, theta, count):
        out = self.delta_dot_fn(self.check(theta), self._lags(count))
        return np.asarray(out, dtype=float).reshape(count, self.dim)

    def gamma_dot(self, theta, count):
        out = self.gamma_dot_fn(self.check(theta), self._lags(count))
        return np.asarray(out, dtype=float).reshape(count, self.dim)

    def alpha(self, theta, m):
        """U-statistic weights ``alpha_r = delta_{r-1}``, ``r = 1..m``, with ``delta_0 = 1``."""
        return np.concatenate([[1.0], self.delta(theta, m - 1)])

    def alpha_dot(self, theta, m):
        return np.vstack([np.zeros((1, self.dim)), self.delta_dot(theta, m - 1)])

    def lag_polys(self, theta):
        if self.lag_polys_fn is None:
            return None
        ar, ma = self.lag_polys_fn(self.check(theta))
        return np.asarray(ar, dtype=float), np.asarray(ma, dtype=float)

    def tail_constants(self, theta0, eta=None):
        """Constants ``(C, a, eta)`` of the geometric bounds on the eta-ball around ``theta0``.

        ``|delta_s| + ||delta_dot_s|| <= C a**s`` and the same for gamma, for all
        ``s`` and all ``theta`` within ``eta`` of ``theta0`` (checked on a grid).
        """
        theta0 = self.check(theta0)
        rate0 = float(self.rate_fn(theta0))
        if rate0 >= 1:
            raise DomainError(f"decay rate {rate0} >= 1: geometric tail unattainable")
        if eta is None:
            eta = (1.0 - rate0) / 4.0
        rho = rate0 + eta
        if rho >= 1:
            raise DomainError("eta-ball reaches the boundary of the stationarity region")
        a = (1.0 + rho) / 2.0
        n_lags = max(200, math.ceil(40.0 / -math.log(rho / a)) if rho > 0 else 200)
        s = np.arange(1, n_lags + 1)
        bound = 0.0
        log_a = s * math.log(a)
        for theta in _ball_grid(theta0, eta):
            for val_fn, dot_fn in ((self.delta_fn, self.delta_dot_fn), (self.gamma_fn, self.gamma_dot_fn)):
                val = np.abs(np.asarray(val_fn(theta, s), dtype=float))
                dot = np.linalg.norm(np.asarray(dot_fn(theta, s), dtype=float).reshape(len(s), -1), axis=1)
                with np.errstate(divide="ignore"):
                    ratio = np.exp(np.log(val + dot) - log_a)
                bound = max(bound, float(np.max(ratio)))
        return bound, a, float(eta)

    def __repr__(self):
        return f"CoefficientModel(name={self.name!r}, dim={self.dim})"


def _ball_grid(theta0, eta, k=21):
    if theta0.size == 1:
        return [np.array([t]) for t in np.linspace(theta0[0] - eta, theta0[0] + eta, k)]
    pts = []
    axes = [np.linspace(c - eta, c + eta, 11) for c in theta0]
    for point in np.array(np.meshgrid(*axes)).reshape(theta0.size, -1).T:
        if np.linalg.norm(point - theta0) <= eta:
            pts.append(point)
    return pts


def ar1():
    return CoefficientModel(
        name="AR1",
        dim=1,
        delta_fn=lambda th, s: th[0] ** s,
        gamma_fn=lambda th, s: np.where(s == 1, -th[0], 0.0),
        delta_dot_fn=lambda th, s: _dpow(th[0], s)[:, None],
        gamma_dot_fn=lambda th, s: np.where(s == 1, -1.0, 0.0)[:, None],
        rate_fn=lambda th: abs(th[0]),
        in_domain_fn=lambda th: abs(th[0]) < 1,
        lag_polys_fn=lambda th: ([1.0, -th[0]], [1.0]),
    )


def ma1():
    return CoefficientModel(
        name="MA1",
        dim=1,
        delta_fn=lambda th, s: np.where(s == 1, th[0], 0.0),
        gamma_fn=lambda th, s: (-th[0]) ** s,
        delta_dot_fn=lambda th, s: np.where(s == 1, 1.0, 0.0)[:, None],
        gamma_dot_fn=lambda th, s: (-_dpow(-th[0], s))[:, None],
        rate_fn=lambda th: abs(th[0]),
        in_domain_fn=lambda th: abs(th[0]) < 1,
        lag_polys_fn=lambda th: ([1.0], [1.0, th[0]]),
    )


def _arma11_delta_dot(th, s):
    t1, t2 = th
    d1 = t1 ** (s - 1) + (t1 - t2) * _dpow(t1, s - 1)
    d2 = -(t1 ** (s - 1))
    return np.column_stack([d1, d2])


def _arma11_gamma_dot(th, s):
    t1, t2 = th
    g1 = -(t2 ** (s - 1))
    g2 = t2 ** (s - 1) + (t2 - t1) * _dpow(t2, s - 1)
    return np.column_stack([g1, g2])


def arma11(min_gap=1e-6):
    """ARMA(1,1) ``Y_t - theta1 Y_{t-1} = X_t - theta2 X_{t-1}``."""
    return CoefficientModel(
        name="ARMA11",
        dim=2,
        delta_fn=lambda th, s: (th[0] - th[1]) * th[0] ** (s - 1),
        gamma_fn=lambda th, s: (th[1] - th[0]) * th[1] ** (s - 1),
        delta_dot_fn=_arma11_delta_dot,
        gamma_dot_fn=_arma11_gamma_dot,
        rate_fn=lambda th: float(np.max(np.abs(th))),
        in_domain_fn=lambda th: bool(np.all(np.abs(th) < 1) and abs(th[0] - th[1]) >= min_gap),
        lag_polys_fn=lambda th: ([1.0, -th[0]], [1.0, -th[1]]),
    )


def custom_model(name, dim, delta, gamma, delta_dot, gamma_dot, rate, in_domain=None):
    """Model from user callables; simulated by a truncated moving average."""
    if in_domain is None:
        in_domain = lambda th: rate(th) < 1  # noqa: E731
    return CoefficientModel(name, dim, delta, gamma, delta_dot, gamma_dot, rate, in_domain)


_NAMED = {"AR1": ar1, "MA1": ma1, "ARMA11": arma11}


def get_model(name):
    try:
        return _NAMED[str(name).upper()]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_NAMED)}") from None


def coefficients(model, theta, kind, count):
    """First ``count`` coefficients of ``kind`` in {delta, gamma, delta_dot, gamma_dot}."""
    try:
        fn = {"delta": model.delta, "gamma": model.gamma,
              "delta_dot": model.delta_dot, "gamma_dot": model.gamma_dot}[kind]
    except KeyError:
        raise ValueError(f"unknown coefficient kind {kind!r}") from None
    return fn(theta, count)


@dataclass(frozen=True, eq=False)
class ProcessPath:
    """Observations ``Y_{-r}, ..., Y_0`` (``pre_obs``) and ``Y_1, ..., Y_n`` (``obs``)."""

    pre_obs: np.ndarray
    obs: np.ndarray
    true_theta: np.ndarray = None
    true_innovations: np.ndarray = None

    def __post_init__(self):
        pre = np.asarray(self.pre_obs, dtype=float)
        if pre.ndim != 1 or pre.size < 1:
            raise ValueError(
                "missing pre-observations: a path needs Y_{-r}, ..., Y_0 with r >= 0 "
                "(at least Y_0)"
            )
        object.__setattr__(self, "pre_obs", check_series(pre, "pre_obs"))
        object.__setattr__(self, "obs", check_series(self.obs, "obs"))
        if self.true_theta is not None:
            object.__setattr__(self, "true_theta", np.atleast_1d(np.asarray(self.true_theta, float)))
        if self.true_innovations is not None:
            innov = check_series(self.true_innovations, "true_innovations")
            if innov.shape != self.obs.shape:
                raise ValueError("true_innovations must align with obs")
            object.__setattr__(self, "true_innovations", innov)

    @property
    def r(self):
        return self.pre_obs.size - 1

    @property
    def n(self):
        return self.obs.size

    @property
    def y_full(self):
        """``Y_{-r}, ..., Y_n`` as one array (position ``r + j`` holds ``Y_j``)."""
        return np.concatenate([self.pre_obs, self.obs])

    @property
    def lagged(self):
        """``Y_0, ..., Y_{n-1}``."""
        return self.y_full[self.r:-1]

    def to_csv(self, target, comments=()):
        """Write columns ``index, y[, innovation]`` with index running from ``-r`` to ``n``.

        ``comments`` are written first as lines starting with ``#``.
        """
        own = isinstance(target, (str, Path))
        fh = open(target, "w", newline="") if own else target
        try:
            for line in comments:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            with_innov = self.true_innovations is not None
            writer.writerow(["index", "y", "innovation"] if with_innov else ["index", "y"])
            for k, y in enumerate(self.y_full):
                j = k - self.r
                row = [j, repr(float(y))]
                if with_innov:
                    row.append(repr(float(self.true_innovations[j - 1])) if j >= 1 else "")
                writer.writerow(row)
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, source):
        if isinstance(source, (str, Path)):
            text = Path(source).read_text()
        else:
            text = source.read()
        body = "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))
        rows = list(csv.DictReader(io.StringIO(body)))
        if not rows or "index" not in rows[0] or "y" not in rows[0]:
            raise ValueError("path CSV needs columns 'index' and 'y'")
        index = np.array([int(row["index"]) for row in rows])
        y = np.array([float(row["y"]) for row in rows])
        if np.any(np.diff(index) != 1):
            raise ValueError("path CSV index must increase by one per row")
        if index[0] > 0:
            raise ValueError(
                "missing pre-observations: the path must start at index -r <= 0 "
                f"(first index is {index[0]}, so r would be {-index[0]})"
            )
        if index[-1] < 1:
            raise ValueError("path CSV has no observations with index >= 1")
        split = int(np.searchsorted(index, 1))
        innov = None
        if "innovation" in rows[0] and all(row["innovation"] for row in rows[split:]):
            innov = np.array([float(row["innovation"]) for row in rows[split:]])
        return cls(pre_obs=y[:split], obs=y[split:], true_innovations=innov)


def _burn_in(C, a, tol):
    if a <= 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - a) / max(C, 1.0)) / math.log(a)))


def simulate(model, theta0, spec, n, r=None, random_state=None, tail_tol=1e-12):
    """Simulate a stationary path with ``r + 1`` pre-observations and ``n`` observations.

    Named models run their exact recursion after a burn-in long enough for the
    start-up transient to fall below ``tail_tol``; custom models use the moving
    average truncated where the neglected coefficient mass is below ``tail_tol``.
    """
    theta0 = model.check(theta0)
    n = check_count(n, "n", minimum=1)
    r = default_r(n) if r is None else check_count(r, "r")
    if not tail_tol > 0:
        raise ValueError("tail_tol must be positive")
    rate = float(model.rate_fn(theta0))
    if rate >= 1:
        raise DomainError(f"decay rate {rate} >= 1: tail tolerance unattainable")
    rng = as_generator(random_state)
    C, a, _ = model.tail_constants(theta0)
    polys = model.lag_polys(theta0)
    if polys is not None:
        ar, ma = polys
        burn = 0 if rate == 0 and len(ma) == 1 else _burn_in(C, a, tail_tol) + len(ma)
        x = spec.sample(burn + r + 1 + n, rng)
        y = signal.lfilter(ma, ar, x)[burn:]
    else:
        L = _burn_in(C, a, tail_tol)
        x = spec.sample(L + r + 1 + n, rng)
        b = np.concatenate([[1.0], model.delta(theta0, L)])
        y = signal.lfilter(b, [1.0], x)[L:]
        burn = L
    return ProcessPath(
        pre_obs=y[: r + 1],
        obs=y[r + 1:],
        true_theta=theta0,
        true_innovations=x[burn + r + 1:],
    )


def recover_innovations(path, model, theta):
    """Truncated innovations ``X_{n,j} = Y_j + sum_{s=1}^{r+j} gamma_s Y_{j-s}``, ``j = 1..n``."""
    polys = model.lag_polys(theta)
    z = path.y_full
    if polys is not None:
        ar, ma = polys
        # zero initial state makes the IIR filter reproduce the truncated sums exactly
        return signal.lfilter(ar, ma, z)[path.r + 1:]
    b = np.concatenate([[1.0], model.gamma(theta, z.size - 1)])
    return signal.convolve(z, b)[: z.size][path.r + 1:]


def xi_vectors(path, model, theta, truncation=None):
    """Truncated ``xi_j = sum_s gamma_dot_s(theta) Y_{j-s}`` as an ``(n, d)`` array.

    With ``truncation=None`` every available lag (back to ``Y_{-r}``) is used;
    otherwise the sum stops at ``s = truncation``, which must not exceed ``r + 1``.
    """
    theta = model.check(theta)
    z = path.y_full
    if truncation is None:
        length = z.size - 1
    else:
        length = check_count(truncation, "truncation")
        if length > path.r + 1:
            raise ValueError(
                f"truncation {length} needs {length - 1} pre-observations, path has r={path.r}"
            )
    out = np.zeros((path.n, model.dim))
    if length == 0:
        return out
    gdot = model.gamma_dot(theta, length)
    for k in range(model.dim):
        b = np.concatenate([[0.0], gdot[:, k]])
        out[:, k] = signal.convolve(z, b)[: z.size][path.r + 1:]
    return out
