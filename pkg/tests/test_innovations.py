import math

import numpy as np
import pytest
from scipy import integrate, stats

from lpustat.innovations import InnovationSpec, ScoreUnavailable, moments, sample, score_and_info

SPECS = [
    InnovationSpec.normal(1.3),
    InnovationSpec.gamma(3.0),
    InnovationSpec.gamma(5.5),
    InnovationSpec.laplace(0.7),
    InnovationSpec.uniform(2.0),
    InnovationSpec.two_point(0.3, 1.5),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}-{list(s.params.values())}")
def test_moments_match_quadrature(spec):
    for k in (1, 2, 3, 4):
        if spec.family == "two-point":
            lo, hi = spec.support_points
            p = spec.params["p"]
            ref = p * lo**k + (1 - p) * hi**k
        else:
            ref = spec.dist.expect(lambda x: x**k)
        assert spec.moment(k) == pytest.approx(ref, rel=1e-8, abs=1e-10)


def test_gamma3_moments():
    assert InnovationSpec.gamma(3).mu == (0.0, 3.0, 6.0, 45.0)


def test_two_point_is_centered_with_variance_scale_squared():
    spec = InnovationSpec.two_point(0.2, 2.0)
    assert spec.moment(1) == 0.0
    assert spec.moment(2) == pytest.approx(4.0)


@pytest.mark.parametrize("spec", [s for s in SPECS if s.has_score], ids=lambda s: s.family)
def test_score_is_log_density_derivative(spec):
    x = spec.dist.ppf(np.linspace(0.05, 0.95, 9))
    x = x[np.abs(x) > 1e-3]  # laplace kink
    h = 1e-6
    numeric = (spec.dist.logpdf(x + h) - spec.dist.logpdf(x - h)) / (2 * h)
    np.testing.assert_allclose(spec.score(x), numeric, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("spec", [s for s in SPECS if s.has_score], ids=lambda s: s.family)
def test_fisher_info_matches_quadrature(spec):
    lo, hi = spec.dist.support()
    pts = [0.0] if spec.family == "laplace" else None
    val, _ = integrate.quad(lambda x: spec.score(x) ** 2 * spec.dist.pdf(x), max(lo, -60), min(hi, 60),
                            points=pts, limit=400)
    assert spec.fisher_info == pytest.approx(val, rel=1e-6)


def test_gamma_score_nan_off_support():
    assert math.isnan(InnovationSpec.gamma(3).score(-3.5))


@pytest.mark.parametrize("spec", [InnovationSpec.uniform(), InnovationSpec.two_point()])
def test_score_unavailable(spec):
    with pytest.raises(ScoreUnavailable):
        spec.score(0.0)
    with pytest.raises(ScoreUnavailable):
        score_and_info(spec)


def test_sampling_reproducible_and_centered():
    spec = InnovationSpec.gamma(3)
    a = sample(spec, 200000, np.random.default_rng(1))
    b = sample(spec, 200000, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    assert abs(a.mean()) < 4 * math.sqrt(3 / a.size)
    assert stats.kstest(a + 3, stats.gamma(3).cdf).pvalue > 1e-4


def test_parameter_validation():
    with pytest.raises(ValueError):
        InnovationSpec.gamma(2.0)
    with pytest.raises(ValueError):
        InnovationSpec("cauchy")
    with pytest.raises(ValueError):
        InnovationSpec("normal", {"shape": 3})
    with pytest.raises(ValueError):
        moments(InnovationSpec.normal(), 5)


def test_aliases_and_abs_moment():
    assert InnovationSpec("standard-normal").family == "normal"
    assert InnovationSpec("centered-gamma", {"shape": 4}).moment(2) == 4
    assert InnovationSpec.normal().abs_moment(1) == pytest.approx(math.sqrt(2 / math.pi))
    assert InnovationSpec.laplace(1.0).abs_moment(3) == pytest.approx(6.0, rel=1e-6)
