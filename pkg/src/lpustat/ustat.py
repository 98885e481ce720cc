"""U-statistics of increasing order for ``E[h(sum_r beta_r X_r)]``.

The estimator averages ``h(S_i)``, ``S_i = sum_r beta_r X_{i(r)}``, over
injective index tuples ``i``. Exact mode enumerates every tuple; incomplete
mode averages over uniformly sampled tuples and is unbiased for the exact
value conditional on the data. Both modes fill the table of bucket means
``H[j, r]`` (mean of ``h(S_i)`` over tuples with ``i(r) = j``) used by the
constrained estimator.
"""

from dataclasses import dataclass, field
import itertools
import json
import math
import warnings

import numpy as np

from ._sampling import TupleSampler, all_injective_tuples, deposit, weighted_sums
from ._seeding import as_generator, spawn_generators
from ._validation import check_count, check_series

__all__ = [
    "RateConditionWarning",
    "UStatConfig",
    "UStatResult",
    "choose_m",
    "kernel",
    "ustat_exact",
    "ustat_incomplete",
    "ustat",
    "influence_h_star",
    "truncation_bound",
    "default_B",
]

MAX_KERNEL_ORDER = 8
DEFAULT_ENUMERATION_CAP = 10**6


class RateConditionWarning(UserWarning):
    """The growth/tail conditions on ``m`` are not comfortably met."""


def default_B(n, m):
    """Number of sampled tuples: about 200 per bucket ``(r, j)``."""
    return 200 * n * m


@dataclass
class UStatConfig:
    """How to evaluate the U-statistic.

    ``B=None`` means :func:`default_B`. ``n_partitions`` splits the sampled
    tuples into independently seeded blocks; results depend on it, so it is
    part of the recorded configuration.
    """

    m: int
    mode: str = "incomplete"
    B: int = None
    random_state: object = None
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    n_partitions: int = 1

    def __post_init__(self):
        if self.mode not in ("exact", "incomplete"):
            raise ValueError(f"mode must be 'exact' or 'incomplete', got {self.mode!r}")
        check_count(self.m, "m", minimum=1)
        check_count(self.n_partitions, "n_partitions", minimum=1)


@dataclass
class UStatResult:
    """Outcome of one U-statistic evaluation.

    ``H`` and ``counts`` have shape ``(n, m)``; ``H[j, r]`` is ``nan`` for an
    empty bucket. ``grad_mean`` is the tuple average of
    ``h'(S_i) * sum_r beta_dot_r X_{i(r)}`` when gradients were supplied.
    """

    kappa_tilde: float
    H: np.ndarray
    counts: np.ndarray
    tuples_used: int
    m: int
    mode: str
    sampling_se: float = 0.0
    truncation_bound: float = None
    n_partitions: int = 1
    grad_mean: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def empty_buckets(self):
        return int(np.sum(self.counts == 0))

    @property
    def empty_bucket_fraction(self):
        return self.empty_buckets / self.counts.size

    def bucket_row_sums(self):
        """``sum_r H[j, r]`` with empty buckets contributing zero."""
        return np.nansum(self.H, axis=1)

    def to_dict(self):
        return {
            "kappa_tilde": float(self.kappa_tilde),
            "sampling_se": float(self.sampling_se),
            "tuples_used": int(self.tuples_used),
            "m": int(self.m),
            "mode": self.mode,
            "truncation_bound": None if self.truncation_bound is None else float(self.truncation_bound),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def choose_m(n, beta_tail=None, c=1.0, eps=0.1, beta=None, return_diagnostics=False):
    """Order ``m`` of the U-statistic for sample size ``n``.

    ``m = max(2, ceil(c * (log n)**(1 + eps)))``, lowered to the largest value
    with ``m**4 <= n/2``. If ``beta`` is given and vanishes beyond index
    ``p0``, ``m = p0``. A :class:`RateConditionWarning` is issued when the
    clip binds or when ``sqrt(n) * sum_{r>m} |beta_r| > 0.1``.

    Parameters
    ----------
    n : int
        Sample size, at least 8.
    beta_tail : (C, a), optional
        Geometric bound ``|beta_r| <= C a**r``.
    beta : array_like, optional
        Explicit coefficients; the tail sum is read off the array.
    """
    n = check_count(n, "n", minimum=8)
    msgs = []
    tail_sum = None
    if beta is not None:
        beta = np.asarray(beta, dtype=float)
        nz = np.flatnonzero(beta)
        p0 = int(nz[-1]) + 1 if nz.size else 1
        if p0 < beta.size:
            m = p0
            if m > n:
                raise ValueError(f"finite coefficient sequence of length {p0} exceeds n={n}")
            return (m, msgs) if return_diagnostics else m
        tail_sum = lambda mm: float(np.sum(np.abs(beta[mm:])))  # noqa: E731
    if beta_tail is not None:
        C, a = beta_tail
        if not 0 <= a < 1:
            raise ValueError(f"geometric tail rate a={a} >= 1: the rate condition is unattainable")
        tail_sum = lambda mm: C * a ** (mm + 1) / (1 - a)  # noqa: E731
    m = max(2, math.ceil(c * math.log(n) ** (1.0 + eps)))
    m_max = max(1, int(math.floor((n / 2) ** 0.25)))
    while (m_max + 1) ** 4 <= n / 2:
        m_max += 1
    while m_max**4 > n / 2 and m_max > 1:
        m_max -= 1
    if m > m_max:
        msgs.append(f"m clipped from {m} to {m_max} so that m^4 <= n/2")
        m = m_max
    if tail_sum is not None:
        excess = math.sqrt(n) * tail_sum(m)
        if excess > 0.1:
            msgs.append(f"sqrt(n) * tail sum beyond m={m} is {excess:.3g} > 0.1")
    for msg in msgs:
        warnings.warn(msg, RateConditionWarning, stacklevel=2)
    return (m, msgs) if return_diagnostics else m


def kernel(x, beta, h):
    """Symmetrized kernel: mean of ``h(beta . x_perm)`` over all permutations of ``x``."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    m = beta.size
    if x.size != m or m < 1:
        raise ValueError("x and beta must have the same positive length")
    if m > MAX_KERNEL_ORDER:
        raise ValueError(f"direct kernel evaluation is limited to m <= {MAX_KERNEL_ORDER}")
    perms = np.array(list(itertools.permutations(range(m))))
    return float(np.mean(h(x[perms] @ beta)))


class _Accumulator:
    def __init__(self, X, beta, h, beta_dot=None, h_prime=None):
        self.X, self.beta, self.h = X, beta, h
        self.beta_dot = beta_dot
        self.h_prime = h_prime
        n, m = X.size, beta.size
        self.bucket_sum = np.zeros((n, m))
        self.counts = np.zeros((n, m), dtype=np.int64)
        self.sums = []
        self.grad_sums = []
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, idx):
        S = weighted_sums(self.X, idx, self.beta)
        hv = np.asarray(self.h(S), dtype=float)
        deposit(idx, hv, self.bucket_sum, self.counts)
        k = hv.size
        total = float(np.sum(hv))
        self.sums.append(total)
        # Chan et al. merge of running mean / M2
        mean_b = total / k
        m2_b = float(np.sum((hv - mean_b) ** 2))
        delta = mean_b - self.mean
        tot = self.count + k
        self.mean += delta * k / tot
        self.m2 += m2_b + delta**2 * self.count * k / tot
        self.count = tot
        if self.beta_dot is not None and self.h_prime is not None:
            sdot = self.X[idx] @ self.beta_dot
            self.grad_sums.append(np.sum(np.asarray(self.h_prime(S))[:, None] * sdot, axis=0))

    def merge(self, other):
        self.bucket_sum += other.bucket_sum
        self.counts += other.counts
        self.sums.extend(other.sums)
        self.grad_sums.extend(other.grad_sums)
        if other.count:
            delta = other.mean - self.mean
            tot = self.count + other.count
            self.mean += delta * other.count / tot
            self.m2 += other.m2 + delta**2 * self.count * other.count / tot
            self.count = tot

    def result(self, mode, n_partitions):
        with np.errstate(invalid="ignore", divide="ignore"):
            H = np.where(self.counts > 0, self.bucket_sum / np.maximum(self.counts, 1), np.nan)
        kappa = math.fsum(self.sums) / self.count
        if mode == "exact":
            se = 0.0
        else:
            se = math.sqrt(self.m2 / (self.count - 1) / self.count) if self.count > 1 else float("nan")
        grad = None
        if self.grad_sums:
            grad = np.array([math.fsum(col) for col in np.array(self.grad_sums).T]) / self.count
        return UStatResult(
            kappa_tilde=kappa, H=H, counts=self.counts, tuples_used=self.count, m=self.beta.size,
            mode=mode, sampling_se=se, n_partitions=n_partitions, grad_mean=grad,
        )


def _prepare(X, beta, beta_dot):
    X = check_series(X, "X")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.ndim != 1 or beta.size < 1:
        raise ValueError("beta must be a non-empty vector")
    if beta.size > X.size:
        raise ValueError(f"m={beta.size} exceeds n={X.size}")
    if beta_dot is not None:
        beta_dot = np.asarray(beta_dot, dtype=float).reshape(beta.size, -1)
    return X, beta, beta_dot


def ustat_exact(X, beta, h, enumeration_cap=DEFAULT_ENUMERATION_CAP, beta_dot=None, h_prime=None):
    """Complete U-statistic over all ``n!/(n-m)!`` injective tuples.

    Raises ``ValueError`` when the tuple count exceeds ``enumeration_cap``.
    """
    X, beta, beta_dot = _prepare(X, beta, beta_dot)
    n, m = X.size, beta.size
    total = math.perm(n, m)
    if total > enumeration_cap:
        raise ValueError(
            f"exact mode needs {total} tuples, above the enumeration cap {enumeration_cap}"
        )
    acc = _Accumulator(X, beta, h, beta_dot, h_prime)
    tuples = all_injective_tuples(n, m)
    for start in range(0, total, 1 << 16):
        acc.add(tuples[start:start + (1 << 16)])
    return acc.result("exact", 1)


def ustat_incomplete(X, beta, h, B=None, random_state=None, n_partitions=1, chunk_size=1 << 16,
                     beta_dot=None, h_prime=None):
    """Incomplete U-statistic over ``B`` uniformly drawn injective tuples.

    The draws are split into ``n_partitions`` blocks, each with its own child
    stream of ``random_state``; blocks are merged in order, so the result is
    reproducible for a fixed partition count.
    """
    X, beta, beta_dot = _prepare(X, beta, beta_dot)
    n, m = X.size, beta.size
    B = default_B(n, m) if B is None else check_count(B, "B", minimum=1)
    k = check_count(n_partitions, "n_partitions", minimum=1)
    rngs = spawn_generators(random_state, k) if k > 1 else [as_generator(random_state)]
    sizes = [B // k + (i < B % k) for i in range(k)]
    acc = _Accumulator(X, beta, h, beta_dot, h_prime)
    for rng, size in zip(rngs, sizes):
        if size == 0:
            continue
        part = _Accumulator(X, beta, h, beta_dot, h_prime)
        sampler = TupleSampler(n, m, rng)
        done = 0
        while done < size:
            c = min(chunk_size, size - done)
            part.add(sampler.draw(c))
            done += c
        acc.merge(part)
    return acc.result("incomplete", k)


def ustat(X, beta, h, config, beta_dot=None, h_prime=None):
    """Dispatch on ``config.mode``.

    Incomplete mode with ``B`` at least the number of injective tuples
    enumerates them instead (``extra["forced_enumeration"]`` is set).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size != config.m:
        raise ValueError(f"beta has {beta.size} entries but config.m={config.m}")
    if config.mode == "exact":
        return ustat_exact(X, beta, h, config.enumeration_cap, beta_dot, h_prime)
    n_tuples = math.perm(np.size(X), config.m) if config.m <= np.size(X) else 0
    if config.B is not None and 0 < n_tuples <= min(config.B, config.enumeration_cap):
        res = ustat_exact(X, beta, h, config.enumeration_cap, beta_dot, h_prime)
        res.extra["forced_enumeration"] = True
        return res
    return ustat_incomplete(X, beta, h, config.B, config.random_state, config.n_partitions,
                            beta_dot=beta_dot, h_prime=h_prime)


def _series_length(beta, tail, tail_tol):
    if callable(beta):
        if tail is None:
            raise ValueError("a callable beta needs tail=(C, a)")
        C, a = tail
        if not 0 <= a < 1:
            raise ValueError(f"geometric tail rate a={a} >= 1")
        L = 1
        while C * a ** (L + 1) / (1 - a) >= tail_tol:
            L += 1
        return np.asarray([beta(r) for r in range(1, L + 1)], dtype=float)
    beta = np.asarray(beta, dtype=float)
    if tail is not None and not 0 <= tail[1] < 1:
        raise ValueError(f"geometric tail rate a={tail[1]} >= 1")
    return beta


def influence_h_star(spec, beta, h, x, mc=10**5, random_state=None, tail=None, tail_tol=1e-10,
                     chunk_size=1 << 14):
    """Monte Carlo value of ``h_*(x) = sum_r (E[h(S) | X_r = x] - E[h(S)])``.

    Every term is estimated from one shared sample of series (common random
    numbers) as the average of ``h(S + beta_r (x - X_r)) - h(S)``.

    Parameters
    ----------
    spec : InnovationSpec
    beta : array_like or callable
        Coefficients ``beta_1, beta_2, ...``; a callable ``r -> beta_r`` is
        truncated where the geometric tail ``tail=(C, a)`` drops below ``tail_tol``.
    x : float or array_like
        Evaluation points.
    """
    beta = _series_length(beta, tail, tail_tol)
    mc = check_count(mc, "mc", minimum=1)
    rng = as_generator(random_state)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    L = beta.size
    sums = [[] for _ in range(x.size)]
    done = 0
    while done < mc:
        c = min(chunk_size, mc - done)
        draws = spec.sample(c * L, rng).reshape(c, L)
        S = draws @ beta
        base = np.asarray(h(S), dtype=float)
        for k, xv in enumerate(x):
            moved = S[:, None] + beta[None, :] * (xv - draws)
            diff = np.asarray(h(moved), dtype=float) - base[:, None]
            sums[k].append(float(np.sum(diff)))
        done += c
    out = np.array([math.fsum(s) / mc for s in sums])
    return out if out.size > 1 else float(out[0])


def truncation_bound(beta, h, spec, m):
    """Bound ``K * sum_{r>m} |beta_r|`` on ``|E h(S) - E h(S^(m))|``.

    ``K = 2 C2 (1 + sum|beta|)**(2p-1) (1 + E X^2 + E|X|^(2p))`` with ``C2`` and
    ``p`` from the function's growth constants. ``beta`` must be long enough
    to represent the series (its tail beyond the array is taken as zero).
    """
    beta = np.abs(np.asarray(beta, dtype=float))
    m = check_count(m, "m", minimum=1)
    tail = float(np.sum(beta[m:]))
    if tail == 0.0:
        return 0.0
    try:
        mom = spec.abs_moment(2 * h.p)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"moment E|X|^{2 * h.p} unavailable: {exc}") from exc
    K = 2 * h.C2 * (1 + beta.sum()) ** (2 * h.p - 1) * (1 + spec.moment(2) + mom)
    return K * tail
