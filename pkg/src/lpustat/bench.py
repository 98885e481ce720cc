"""Competing estimators of ``sigma^2 = E[Y_0^2]`` for AR(1) and a Monte Carlo harness.

Estimators compared on shared paths (common random numbers):

``empirical``           ``(1/n) sum h(Y_j)``
``improved-empirical``  ``(1/n) sum (Y_j^2 - c_hat Y_j)``, ``c_hat = mu3_hat / ((1 + theta_ls) mu2_hat)``
``ustat-ls``            substitution U-statistic at the least squares parameter
``ustat-onestep``       substitution U-statistic at the efficient parameter
``simple-efficient``    ``mu2_star / (1 - theta#^2)``, ``mu2_star = mu2_hat - mu3_hat mu1_hat / mu2_hat``
"""

import csv
from dataclasses import dataclass, field, replace
import io
import json
import math
from pathlib import Path
import warnings

import numpy as np

from .functions import get_function, square
from .innovations import InnovationSpec, ScoreUnavailable
from .plugin import (
    estimate_theta,
    least_squares_ar1,
    mu_hat,
    one_step_efficient_ar1,
    substitution_estimate,
)
from .process import get_model, simulate
from ._seeding import as_generator, derive_seed_sequence, stream
from ._validation import DomainError, check_count
from .ustat import UStatConfig, choose_m, influence_h_star

__all__ = [
    "ESTIMATORS",
    "empirical_estimator",
    "mu_hat",
    "improved_empirical_sigma2",
    "simple_efficient_sigma2",
    "asymptotic_variance",
    "relative_variance_increase",
    "StudyConfig",
    "StudyResult",
    "monte_carlo_study",
    "variance_gap",
    "BoundedDirection",
    "clipped_square_direction",
    "cosine_direction",
    "gradient_check",
]

ESTIMATORS = ("empirical", "improved-empirical", "ustat-ls", "ustat-onestep", "simple-efficient")
CSV_COLUMNS = ("estimator", "mean", "bias", "n_var", "target", "rel_dev")


def empirical_estimator(path, h=None):
    """``(1/n) sum_j h(Y_j)``; ``h`` defaults to the square."""
    h = square() if h is None else h
    return float(np.mean(h(path.obs)))


def improved_empirical_sigma2(path, theta=None):
    """``(1/n) sum (Y_j^2 - mu3_hat / ((1 + theta) mu2_hat) Y_j)`` with least squares ``theta``."""
    theta = least_squares_ar1(path) if theta is None else float(theta)
    mu2, mu3 = mu_hat(path, theta, 2), mu_hat(path, theta, 3)
    denom = (1.0 + theta) * mu2
    if abs(denom) < 1e-12:
        raise DomainError("(1 + theta) * mu2_hat vanishes; the correction is undefined")
    y = path.obs
    return float(np.mean(y * y - mu3 / denom * y))


def simple_efficient_sigma2(path, theta):
    """``mu2_star / (1 - theta**2)`` with ``mu2_star = mu2_hat - (mu3_hat / mu2_hat) mu1_hat``."""
    theta = float(np.atleast_1d(theta)[0])
    if not abs(theta) < 1:
        raise DomainError(f"|theta| = {abs(theta)} >= 1")
    mu1, mu2, mu3 = (mu_hat(path, theta, k) for k in (1, 2, 3))
    if mu2 == 0.0:
        return 0.0
    return float((mu2 - mu3 / mu2 * mu1) / (1.0 - theta * theta))


def _moments(spec=None, mu=None, info=None):
    if spec is not None:
        mu = spec.mu[1:]
        if info is None and spec.has_score:
            info = spec.fisher_info
    mu2, mu3, mu4 = (float(v) for v in mu)
    return mu2, mu3, mu4, info


def asymptotic_variance(which, theta0, spec=None, mu=None, info=None):
    """Asymptotic variance of ``sqrt(n)(estimate - sigma^2)`` for AR(1) and ``h = square``.

    Parameters
    ----------
    which : {"empirical", "improved", "ustat-ls", "efficient"}
        ``improved-empirical`` and ``simple-efficient``/``ustat-onestep`` are
        accepted as aliases of ``improved`` and ``efficient``.
    theta0 : float
    spec : InnovationSpec, optional
        Source of moments and Fisher information.
    mu : (mu2, mu3, mu4), optional
        Moments when ``spec`` is not given.
    info : float, optional
        Fisher information for location; required for ``efficient``.

    Notes
    -----
    The U-statistic with the least squares parameter has influence
    ``(x^2 - mu2 - mu3 x / mu2) / (1 - t^2) + 2 mu2 t / (1 - t^2)^2 * w`` with
    ``w = (1 - t^2) / mu2 * Y_{j-1} X_j``; its variance equals the improved
    empirical one for every innovation law.
    """
    which = {"improved-empirical": "improved", "simple-efficient": "efficient",
             "ustat-onestep": "efficient"}.get(which, which)
    mu2, mu3, mu4, info = _moments(spec, mu, info)
    t2 = float(theta0) ** 2
    if not t2 < 1:
        raise DomainError("|theta0| must be below 1")
    scale = 1.0 / (1.0 - t2) ** 2
    base = mu4 - mu2 * mu2
    if which == "empirical":
        return scale * (base + 4 * mu2 * mu2 * t2 / (1 - t2))
    if which in ("improved", "ustat-ls"):
        return scale * (base + 4 * mu2 * mu2 * t2 / (1 - t2) - mu3 * mu3 / mu2)
    if which == "efficient":
        if info is None:
            raise ScoreUnavailable("the efficient variance needs the Fisher information I(P)")
        return scale * (base + 4 * mu2 * t2 / (info * (1 - t2)) - mu3 * mu3 / mu2)
    raise ValueError(f"unknown estimator {which!r}")


def relative_variance_increase(which, theta0, spec=None, mu=None, info=None):
    """``(V_which - V_efficient) / V_efficient`` for ``which`` in {empirical, improved}."""
    which = {"improved-empirical": "improved"}.get(which, which)
    mu2, mu3, mu4, info = _moments(spec, mu, info)
    if info is None:
        raise ScoreUnavailable("relative increases need the Fisher information I(P)")
    t2 = float(theta0) ** 2
    denom = info * (1 - t2) * (mu4 - mu2 * mu2 - mu3 * mu3 / mu2) + 4 * t2 * mu2
    tail = 4 * t2 * mu2 * (mu2 * info - 1)
    if which == "empirical":
        return (info * (1 - t2) * mu3 * mu3 / mu2 + tail) / denom
    if which == "improved":
        return tail / denom
    raise ValueError(f"unknown estimator {which!r}")


def _target_key(name):
    return {"improved-empirical": "improved", "ustat-ls": "ustat-ls", "empirical": "empirical",
            "ustat-onestep": "efficient", "simple-efficient": "efficient"}[name]


@dataclass
class StudyConfig:
    """Monte Carlo study of the AR(1)-type comparison.

    ``m``/``B``/``r`` set to ``None`` are resolved automatically and echoed in
    the result. ``n_partitions`` is the tuple-sampling partition count and
    changes the numbers; ``workers`` only changes wall time.
    """

    model: str = "AR1"
    theta0: tuple = (0.5,)
    spec: InnovationSpec = field(default_factory=lambda: InnovationSpec.gamma(3.0))
    h: object = field(default_factory=square)
    n: int = 2000
    N: int = 1000
    estimators: tuple = ("empirical", "improved-empirical", "ustat-ls", "simple-efficient")
    master_seed: int = 0
    m: int = None
    B: int = None
    r: int = None
    mode: str = "incomplete"
    n_partitions: int = 1
    one_step_update: str = "root"
    workers: int = 1

    def __post_init__(self):
        self.theta0 = tuple(np.atleast_1d(np.asarray(self.theta0, dtype=float)).tolist())
        self.estimators = tuple(self.estimators)
        check_count(self.N, "N", minimum=2)
        check_count(self.n, "n", minimum=2)
        if not self.estimators:
            raise ValueError("estimator list must not be empty")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; choose from {list(ESTIMATORS)}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ValueError("estimator list has duplicates")
        ar_only = {"improved-empirical", "ustat-onestep", "simple-efficient"} & set(self.estimators)
        if ar_only and self.model.upper() != "AR1":
            raise ValueError(f"{sorted(ar_only)} need the AR1 model")

    def resolved(self):
        """Config with ``m`` (when U-statistics are requested) filled in, as a plain dict."""
        m = self.m
        if m is None and any(e.startswith("ustat") for e in self.estimators):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                m = choose_m(self.n)
        return {
            "model": self.model.upper(),
            "theta0": list(self.theta0),
            "spec": self.spec.to_dict(),
            "h": self.h.to_dict(),
            "n": self.n,
            "N": self.N,
            "estimators": list(self.estimators),
            "master_seed": self.master_seed,
            "m": m,
            "B": self.B if self.B is not None or m is None else 200 * self.n * m,
            "r": self.r,
            "mode": self.mode,
            "n_partitions": self.n_partitions,
            "one_step_update": self.one_step_update,
        }


@dataclass
class StudyResult:
    """Per-estimator summary rows, ratio rows and the raw estimates.

    Ratio rows use the ``n_var`` column for the measured relative variance
    increase and ``rel_dev`` for measured minus closed form.
    """

    rows: list
    ratio_rows: list
    estimates: np.ndarray
    errors: list
    config: dict
    metadata: dict = field(default_factory=dict)

    def row(self, name):
        for r in self.rows + self.ratio_rows:
            if r["estimator"] == name:
                return r
        raise KeyError(name)

    def n_var(self, name):
        return self.row(name)["n_var"]

    def to_csv(self, target=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows + self.ratio_rows:
            writer.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    def to_dict(self):
        return {
            "config": self.config,
            "rows": self.rows,
            "ratio_rows": self.ratio_rows,
            "errors": self.errors,
            "n_errors": len(self.errors),
            "metadata": self.metadata,
        }

    def to_json(self, target=None, **kwargs):
        text = json.dumps(self.to_dict(), **kwargs)
        if target is not None:
            Path(target).write_text(text)
        return text


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _replicate(cfg, resolved, i):
    """All requested estimates on replication ``i``'s path."""
    model = get_model(cfg.model)
    path = simulate(model, cfg.theta0, cfg.spec, cfg.n, r=cfg.r,
                    random_state=stream(cfg.master_seed, "path", i))
    out = {}
    theta_ls = theta_os = None

    def ls():
        nonlocal theta_ls
        if theta_ls is None:
            theta_ls = estimate_theta(path, model, "least-squares")
        return theta_ls

    def onestep():
        nonlocal theta_os
        if theta_os is None:
            theta_os = np.array([one_step_efficient_ar1(path, ls(), cfg.spec,
                                                        update=cfg.one_step_update)])
        return theta_os

    def ucfg():
        # fresh seed sequence per call: both U-statistic estimators see the same tuples
        return UStatConfig(m=resolved["m"], mode=cfg.mode, B=cfg.B, n_partitions=cfg.n_partitions,
                           random_state=derive_seed_sequence(cfg.master_seed, "tuples", i))

    for name in cfg.estimators:
        if name == "empirical":
            out[name] = empirical_estimator(path, cfg.h)
        elif name == "improved-empirical":
            out[name] = improved_empirical_sigma2(path, ls()[0])
        elif name == "ustat-ls":
            out[name] = substitution_estimate(path, model, ls(), cfg.h, config=ucfg()).kappa_hat
        elif name == "ustat-onestep":
            out[name] = substitution_estimate(path, model, onestep(), cfg.h, config=ucfg()).kappa_hat
        elif name == "simple-efficient":
            out[name] = simple_efficient_sigma2(path, onestep())
    return [out[name] for name in cfg.estimators]


def _safe_replicate(args):
    cfg, resolved, i = args
    if cfg.h is None:
        # worker processes receive the function by registry name (lambdas do not pickle)
        cfg = replace(cfg, h=get_function(resolved["h"]["name"], *resolved["h"]["params"]))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return i, _replicate(cfg, resolved, i), None
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return i, None, f"{type(exc).__name__}: {exc}"


def _true_value(cfg):
    """``E[h(Y_0)]`` when a closed form exists (AR1 with ``h = square``)."""
    if cfg.h.name == "square" and cfg.model.upper() == "AR1":
        t = cfg.theta0[0]
        return cfg.spec.moment(2) / (1.0 - t * t)
    return None


def _fsum_mean_var(values):
    k = values.size
    mean = math.fsum(values) / k
    var = math.fsum((values - mean) ** 2) / (k - 1)
    return mean, var


def variance_gap(a, b, n):
    """Paired gap ``n Var(a) - n Var(b)`` and its Monte Carlo standard error."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    da, db = (a - a.mean()) ** 2, (b - b.mean()) ** 2
    diff = n * (da - db)
    return float(diff.mean() * a.size / (a.size - 1)), float(diff.std(ddof=1) / math.sqrt(a.size))


def monte_carlo_study(cfg, progress=None):
    """Run ``cfg.N`` replications and summarise each estimator.

    Replications that raise are recorded in ``errors`` and dropped for all
    estimators. Results depend only on the config (including the master seed
    and partition count), not on ``workers``.
    """
    resolved = cfg.resolved()
    jobs = [(cfg, resolved, i) for i in range(cfg.N)]
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        try:
            get_function(resolved["h"]["name"], *resolved["h"]["params"])
        except ValueError as exc:
            raise ValueError("workers > 1 needs a registry function h") from exc
        portable = replace(cfg, h=None)
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_safe_replicate, [(portable, resolved, i) for i in range(cfg.N)],
                                     chunksize=4))
    else:
        outcomes = []
        for job in jobs:
            outcomes.append(_safe_replicate(job))
            if progress is not None:
                progress(len(outcomes), cfg.N)
    outcomes.sort(key=lambda t: t[0])
    errors = [{"replication": i, "error": msg} for i, _, msg in outcomes if msg is not None]
    good = [vals for _, vals, msg in outcomes if msg is None]
    if len(good) < 2:
        raise RuntimeError(f"only {len(good)} replications succeeded; first error: "
                           f"{errors[0]['error'] if errors else 'none'}")
    est = np.array(good, dtype=float)
    truth = _true_value(cfg)
    rows = []
    nvar = {}
    for k, name in enumerate(cfg.estimators):
        mean, var = _fsum_mean_var(est[:, k])
        nvar[name] = cfg.n * var
        target = None
        if truth is not None:
            try:
                target = asymptotic_variance(_target_key(name), cfg.theta0[0], cfg.spec)
            except ScoreUnavailable:
                target = None
        rows.append({
            "estimator": name,
            "mean": mean,
            "bias": None if truth is None else mean - truth,
            "n_var": nvar[name],
            "target": target,
            "rel_dev": None if target is None else nvar[name] / target - 1.0,
        })
    ratio_rows = []
    eff = next((e for e in ("simple-efficient", "ustat-onestep") if e in nvar), None)
    if truth is not None and eff is not None and cfg.spec.has_score:
        for which, name in (("empirical", "empirical"), ("improved", "improved-empirical")):
            if name not in nvar:
                continue
            measured = (nvar[name] - nvar[eff]) / nvar[eff]
            target = relative_variance_increase(which, cfg.theta0[0], cfg.spec)
            ratio_rows.append({"estimator": f"ratio:{name}", "mean": None, "bias": None,
                               "n_var": measured, "target": target, "rel_dev": measured - target})
    return StudyResult(rows=rows, ratio_rows=ratio_rows, estimates=est, errors=errors,
                       config=resolved, metadata={"truth": truth, "replications_used": len(good)})


# gradient check ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundedDirection:
    """Perturbation direction ``g`` with ``lower <= g <= upper`` and ``E_P[g] = 0``."""

    g: object
    lower: float
    upper: float
    name: str

    def __call__(self, x):
        return self.g(x)


def _expect(spec, fn):
    if spec.family == "two-point":
        lo, hi = spec.support_points
        p = spec.params["p"]
        return float(p * fn(np.array(lo)) + (1 - p) * fn(np.array(hi)))
    return float(spec.dist.expect(fn, epsabs=1e-13, epsrel=1e-12, limit=200))


def clipped_square_direction(spec, clip=4.0):
    """``min(x^2, clip) - E[min(X^2, clip)]``."""
    c = float(clip)
    mean = _expect(spec, lambda x: np.minimum(x * x, c))
    return BoundedDirection(lambda x: np.minimum(np.square(x), c) - mean, -mean, c - mean,
                            f"clipped-square({c:g})")


def cosine_direction(spec, t=1.0):
    """``cos(t x) - E[cos(t X)]`` (``exp(-t^2/2)`` for standard normal ``X``)."""
    t = float(t)
    mean = _expect(spec, lambda x: np.cos(t * x))
    return BoundedDirection(lambda x: np.cos(t * np.asarray(x)) - mean, -1.0 - mean, 1.0 - mean,
                            f"cosine({t:g})")


def _influence_inner_product(spec, beta, h, g, mc, rng):
    """``int h_* g dP``: closed form for quadratic/linear ``h``, else Gauss-Legendre on quantiles."""
    if h.name == "square":
        return float(np.sum(beta**2)) * _expect(spec, lambda x: (x * x - spec.moment(2)) * g(x)), "closed-form"
    if h.name == "identity":
        return float(np.sum(beta)) * _expect(spec, lambda x: x * g(x)), "closed-form"
    if h.name == "constant":
        return 0.0, "closed-form"
    if spec.family == "two-point":
        pts = np.array(spec.support_points)
        wts = np.array([spec.params["p"], 1 - spec.params["p"]])
    else:
        nodes, weights = np.polynomial.legendre.leggauss(64)
        u = 0.5 * (nodes + 1.0)
        pts = spec.dist.ppf(u)
        wts = 0.5 * weights
    hv = np.atleast_1d(influence_h_star(spec, beta, h, pts, mc=mc, random_state=rng))
    return float(np.sum(wts * hv * g(pts))), "quadrature"


def gradient_check(spec, beta, h, g, eps_grid=(0.02, 0.05, 0.1), mc=10**6, random_state=None,
                   tail_tol=1e-8, chunk_size=1 << 15):
    """Compare the derivative of ``eps -> E_{P_eps}[h(S)]`` with ``int h_* g dP``.

    ``P_eps`` has density ``1 + eps g`` with respect to ``P``. Each
    ``kappa(P_eps)`` is a self-normalised importance-weighted average of
    ``h(S)`` over one shared sample, with weights ``prod_r (1 + eps g(X_r))``
    over the coefficients above ``tail_tol``. The slope is the least squares
    fit through ``(+-eps, kappa(P_+-eps))``.

    Parameters
    ----------
    beta : array_like
        Coefficient sequence (truncated where ``|beta_r| < tail_tol``).
    g : BoundedDirection
    """
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size == 0 or np.any(eps <= 0):
        raise ValueError("eps_grid must hold positive values")
    if np.any(1 + eps * g.lower <= 0) or np.any(1 - eps * g.upper <= 0):
        raise ValueError("weights 1 + eps g must stay positive; shrink eps_grid")
    beta = np.asarray(beta, dtype=float)
    keep = np.nonzero(np.abs(beta) >= tail_tol)[0]
    beta = beta[: keep[-1] + 1] if keep.size else beta[:1]
    rng = as_generator(random_state)
    gen_mc, gen_q = rng.spawn(2)
    signed = np.concatenate([-eps[::-1], [0.0], eps])
    num = [[] for _ in signed]
    den = [[] for _ in signed]
    L = beta.size
    done = 0
    while done < mc:
        c = min(chunk_size, mc - done)
        X = spec.sample(c * L, gen_mc).reshape(c, L)
        hv = np.asarray(h(X @ beta), dtype=float)
        gx = g(X)
        for k, e in enumerate(signed):
            w = np.prod(1.0 + e * gx, axis=1)
            if np.any(w <= 0):
                raise ValueError("nonpositive importance weight")
            num[k].append(float(np.sum(w * hv)))
            den[k].append(float(np.sum(w)))
        done += c
    kappa = np.array([math.fsum(a) / math.fsum(b) for a, b in zip(num, den)])
    slope = float(np.polyfit(signed, kappa, 1)[0])
    target, method = _influence_inner_product(spec, beta, h, g, min(mc, 10**5), gen_q)
    rel = abs(slope - target) / abs(target) if target != 0 else abs(slope)
    return {
        "direction": g.name,
        "slope": slope,
        "target": target,
        "relative_error": rel,
        "target_method": method,
        "eps_grid": eps.tolist(),
        "kappa": kappa.tolist(),
        "mc": int(mc),
        "terms": int(L),
    }
