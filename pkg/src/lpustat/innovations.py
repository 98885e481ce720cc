"""Innovation distributions with exact moments, location score and Fisher information.

All families are centered, so ``moment(1) == 0`` and the remaining moments
are raw moments of the centered variable.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from ._seeding import as_generator
from ._validation import check_count

__all__ = [
    "InnovationSpec",
    "ScoreUnavailable",
    "sample",
    "moments",
    "score_and_info",
]

_ALIASES = {
    "normal": "normal",
    "standard-normal": "normal",
    "gaussian": "normal",
    "gamma": "gamma",
    "centered-gamma": "gamma",
    "laplace": "laplace",
    "centered-laplace": "laplace",
    "uniform": "uniform",
    "centered-uniform": "uniform",
    "two-point": "two-point",
    "twopoint": "two-point",
}

_DEFAULTS = {
    "normal": {"sigma": 1.0},
    "gamma": {"shape": 3.0},
    "laplace": {"scale": 1.0},
    "uniform": {"half_width": 1.0},
    "two-point": {"p": 0.5, "scale": 1.0},
}


class ScoreUnavailable(ValueError):
    """Raised for families without a density or without finite Fisher information."""


@dataclass(frozen=True)
class InnovationSpec:
    """A centered innovation law.

    Parameters
    ----------
    family : str
        One of ``normal``, ``gamma`` (Gamma(k, 1) shifted by ``-k``), ``laplace``,
        ``uniform`` or ``two-point``. The longer names ``standard-normal``,
        ``centered-gamma`` etc. are accepted as aliases.
    params : dict
        Family parameters: ``sigma`` (normal), ``shape`` (gamma, must exceed 2),
        ``scale`` (laplace), ``half_width`` (uniform), ``p`` and ``scale``
        (two-point). The two-point law puts mass ``p`` on
        ``-scale*sqrt((1-p)/p)`` and ``1-p`` on ``scale*sqrt(p/(1-p))``, which
        has mean 0 and variance ``scale**2``.
    """

    family: str = "normal"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        fam = _ALIASES.get(str(self.family).lower())
        if fam is None:
            raise ValueError(f"unknown innovation family {self.family!r}")
        unknown = set(self.params) - set(_DEFAULTS[fam])
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for family {fam!r}")
        merged = {**_DEFAULTS[fam], **{k: float(v) for k, v in self.params.items()}}
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", merged)
        self._check_params()

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))

    # constructors -------------------------------------------------------
    @classmethod
    def normal(cls, sigma=1.0):
        return cls("normal", {"sigma": sigma})

    @classmethod
    def gamma(cls, shape=3.0):
        return cls("gamma", {"shape": shape})

    @classmethod
    def laplace(cls, scale=1.0):
        return cls("laplace", {"scale": scale})

    @classmethod
    def uniform(cls, half_width=1.0):
        return cls("uniform", {"half_width": half_width})

    @classmethod
    def two_point(cls, p=0.5, scale=1.0):
        return cls("two-point", {"p": p, "scale": scale})

    def _check_params(self):
        p = self.params
        if self.family == "gamma" and not p["shape"] > 2:
            raise ValueError("centered gamma needs shape > 2 for finite Fisher information")
        if self.family == "two-point" and not 0 < p["p"] < 1:
            raise ValueError("two-point mass p must lie in (0, 1)")
        for key in ("sigma", "scale", "half_width"):
            if key in p and not p[key] > 0:
                raise ValueError(f"{key} must be positive")

    # distribution -------------------------------------------------------
    @property
    def support_points(self):
        """The two atoms of the two-point law, else ``None``."""
        if self.family != "two-point":
            return None
        p, s = self.params["p"], self.params["scale"]
        return np.array([-s * math.sqrt((1 - p) / p), s * math.sqrt(p / (1 - p))])

    @property
    def dist(self):
        """Frozen scipy distribution, or ``None`` for the two-point law."""
        p = self.params
        if self.family == "normal":
            return stats.norm(scale=p["sigma"])
        if self.family == "gamma":
            return stats.gamma(a=p["shape"], loc=-p["shape"])
        if self.family == "laplace":
            return stats.laplace(scale=p["scale"])
        if self.family == "uniform":
            return stats.uniform(loc=-p["half_width"], scale=2 * p["half_width"])
        return None

    def sample(self, n, random_state=None):
        n = check_count(n, "n", minimum=1)
        rng = as_generator(random_state)
        p = self.params
        if self.family == "normal":
            return p["sigma"] * rng.standard_normal(n)
        if self.family == "gamma":
            return rng.standard_gamma(p["shape"], n) - p["shape"]
        if self.family == "laplace":
            return rng.laplace(0.0, p["scale"], n)
        if self.family == "uniform":
            return rng.uniform(-p["half_width"], p["half_width"], n)
        lo, hi = self.support_points
        return np.where(rng.random(n) < p["p"], lo, hi)

    def moment(self, k):
        """Exact ``E[X**k]`` for ``k = 1..4``."""
        if k not in (1, 2, 3, 4):
            raise ValueError(f"moments are available for k in 1..4, got {k!r}")
        p = self.params
        if k == 1:
            return 0.0
        if self.family == "normal":
            s = p["sigma"]
            return {2: s**2, 3: 0.0, 4: 3 * s**4}[k]
        if self.family == "gamma":
            a = p["shape"]
            return {2: a, 3: 2 * a, 4: 3 * a**2 + 6 * a}[k]
        if self.family == "laplace":
            b = p["scale"]
            return {2: 2 * b**2, 3: 0.0, 4: 24 * b**4}[k]
        if self.family == "uniform":
            w = p["half_width"]
            return {2: w**2 / 3, 3: 0.0, 4: w**4 / 5}[k]
        lo, hi = self.support_points
        return float(p["p"] * lo**k + (1 - p["p"]) * hi**k)

    @property
    def mu(self):
        """``(mu_1, mu_2, mu_3, mu_4)``."""
        return tuple(self.moment(k) for k in (1, 2, 3, 4))

    def abs_moment(self, q):
        """``E|X|**q`` for real ``q > 0`` (closed form where cheap, else quadrature)."""
        if q <= 0:
            raise ValueError("q must be positive")
        if float(q).is_integer() and int(q) in (2, 4):
            return self.moment(int(q))
        if self.family == "two-point":
            lo, hi = self.support_points
            return float(self.params["p"] * abs(lo) ** q + (1 - self.params["p"]) * hi**q)
        if self.family == "normal":
            s = self.params["sigma"]
            return s**q * 2 ** (q / 2) * math.gamma((q + 1) / 2) / math.sqrt(math.pi)
        value = self.dist.expect(lambda x: np.abs(x) ** q)
        if not np.isfinite(value):
            raise ValueError(f"E|X|^{q} is not finite for {self.family}")
        return float(value)

    # location score -----------------------------------------------------
    @property
    def has_score(self):
        return self.family in ("normal", "gamma", "laplace")

    def score(self, x):
        """Location score ``f'/f``; ``nan`` outside the support."""
        if not self.has_score:
            raise ScoreUnavailable(f"{self.family} innovations have no finite Fisher information")
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "normal":
            return -x / p["sigma"] ** 2
        if self.family == "laplace":
            return -np.sign(x) / p["scale"]
        k = p["shape"]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > -k, (k - 1) / (x + k) - 1.0, np.nan)

    @property
    def fisher_info(self):
        if not self.has_score:
            raise ScoreUnavailable(f"{self.family} innovations have no finite Fisher information")
        p = self.params
        if self.family == "normal":
            return 1.0 / p["sigma"] ** 2
        if self.family == "laplace":
            return 1.0 / p["scale"] ** 2
        return 1.0 / (p["shape"] - 2.0)

    def to_dict(self):
        return {"family": self.family, **self.params}


def sample(spec, n, stream=None):
    """``n`` i.i.d. draws from ``spec``; identical ``(spec, stream)`` gives identical output."""
    return spec.sample(n, stream)


def moments(spec, k):
    return spec.moment(k)


def score_and_info(spec):
    """Return ``(score, I(P))``; raises :class:`ScoreUnavailable` for two-point and uniform."""
    return spec.score, spec.fisher_info
