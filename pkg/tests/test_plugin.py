import math
import warnings

import numpy as np
import pytest

from lpustat._validation import DomainError
from lpustat.constrained import a_star_hat
from lpustat.functions import constant, square
from lpustat.innovations import InnovationSpec, ScoreUnavailable
from lpustat.plugin import (
    DomainClipWarning,
    MissingInfluenceWarning,
    estimate_theta,
    least_squares_ar1,
    mu_hat,
    one_step_efficient_ar1,
    plugin_se,
    substitution_estimate,
    theta_influence,
)
from lpustat.process import ProcessPath, ar1, arma11, ma1, simulate
from lpustat.ustat import UStatConfig, ustat_incomplete

GAMMA3 = InnovationSpec.gamma(3)


def geometric_path():
    return ProcessPath(pre_obs=np.array([1.0]), obs=np.array([0.5, 0.25]))


def test_least_squares_examples():
    assert least_squares_ar1(geometric_path()) == pytest.approx(0.5)
    wn = simulate(ar1(), [0.0], InnovationSpec.normal(), 10**5, random_state=1)
    assert abs(least_squares_ar1(wn)) < 4 / math.sqrt(10**5)
    with pytest.raises(ValueError):
        least_squares_ar1(ProcessPath(pre_obs=np.zeros(1), obs=np.zeros(5)))


def test_mu_hat_examples():
    p = geometric_path()
    assert mu_hat(p, 0.5, 2) == 0.0
    assert mu_hat(p, 0.0, 2) == pytest.approx(np.mean(p.obs**2))


def test_least_squares_variance_500_reps():
    n = 2000
    est = [least_squares_ar1(simulate(ar1(), [0.5], GAMMA3, n, random_state=i)) for i in range(500)]
    assert n * np.var(est) == pytest.approx(0.75, rel=0.15)


def test_estimate_theta_ma1_moment_match():
    path = simulate(ma1(), [0.5], InnovationSpec.normal(), 10**5, random_state=2)
    assert estimate_theta(path, ma1(), "moment-match")[0] == pytest.approx(0.5, abs=0.02)
    assert estimate_theta(path, ma1(), "least-squares")[0] == pytest.approx(0.5, abs=0.02)


def test_estimate_theta_ma1_zero_autocorrelation():
    y = np.array([1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0])
    # lag-1 autocovariance of this series is exactly zero
    path = ProcessPath(pre_obs=np.array([0.0]), obs=y)
    assert estimate_theta(path, ma1(), "moment-match")[0] == 0.0


def test_estimate_theta_ma1_no_invertible_root():
    y = np.sin(0.1 * np.arange(200))  # lag-1 autocorrelation near cos(0.1)
    path = ProcessPath(pre_obs=np.array([0.0]), obs=y)
    with pytest.raises(DomainError):
        estimate_theta(path, ma1(), "moment-match")


def test_estimate_theta_arma11():
    path = simulate(arma11(), [0.5, 0.2], InnovationSpec.normal(), 50000, random_state=3)
    mm = estimate_theta(path, arma11(), "moment-match")
    ls = estimate_theta(path, arma11(), "least-squares")
    np.testing.assert_allclose(mm, [0.5, 0.2], atol=0.08)
    np.testing.assert_allclose(ls, [0.5, 0.2], atol=0.03)


def test_estimate_theta_clips_to_domain():
    y = np.cumsum(np.ones(50))
    path = ProcessPath(pre_obs=np.array([0.0]), obs=y * 1.05 ** np.arange(50))
    with pytest.warns(DomainClipWarning):
        th = estimate_theta(path, ar1())
    assert th[0] == pytest.approx(1 - 1e-3)


def test_one_step_normal_equals_least_squares():
    spec = InnovationSpec.normal()
    path = simulate(ar1(), [0.5], spec, 2000, random_state=4)
    ls = least_squares_ar1(path)
    assert one_step_efficient_ar1(path, ls, spec) == pytest.approx(ls, abs=1e-10)
    # a single Gaussian scoring step from the LS solution does not move
    assert one_step_efficient_ar1(path, ls, spec, update="step") == pytest.approx(ls, abs=1e-12)


def test_one_step_zero_update_at_root():
    spec = InnovationSpec.gamma(3)
    path = simulate(ar1(), [0.5], spec, 1000, random_state=5)
    root = one_step_efficient_ar1(path, 0.4, spec)
    assert one_step_efficient_ar1(path, root, spec, update="step") == pytest.approx(root, abs=1e-12)


def test_one_step_requires_score():
    path = geometric_path()
    with pytest.raises(ScoreUnavailable):
        one_step_efficient_ar1(path, 0.5, InnovationSpec.uniform())


def test_one_step_variance_gamma():
    n = 2000
    est = []
    for i in range(500):
        path = simulate(ar1(), [0.5], GAMMA3, n, random_state=i)
        est.append(one_step_efficient_ar1(path, least_squares_ar1(path), GAMMA3))
    assert n * np.var(est) == pytest.approx(0.25, rel=0.15)


def test_theta_influence_ar1_closed_forms():
    path = simulate(ar1(), [0.5], GAMMA3, 300, random_state=6)
    X = path.true_innovations
    w = theta_influence(path, ar1(), [0.5], "least-squares")[:, 0]
    V = np.mean(path.lagged**2)
    np.testing.assert_allclose(w, path.lagged * X / V)
    w_eff = theta_influence(path, ar1(), [0.5], "one-step", GAMMA3)[:, 0]
    np.testing.assert_allclose(w_eff, -path.lagged * GAMMA3.score(X) / V)
    assert theta_influence(path, ar1(), [0.5], "moment-match") is None


def test_substitution_white_noise_degeneration():
    spec = InnovationSpec.normal()
    path = simulate(ar1(), [0.0], spec, 200, r=2, random_state=7)
    rep = substitution_estimate(path, ar1(), [0.0], square(), config=UStatConfig(m=1, mode="exact"))
    Y = path.obs
    res_a = rep.a_star_hat
    assert rep.kappa_hat == pytest.approx(np.mean(Y**2) - res_a * Y.mean(), rel=1e-12)
    assert res_a == pytest.approx(np.sum(Y * (Y**2 - np.mean(Y**2))) / np.sum(Y**2), rel=1e-12)


def test_report_fields_and_json():
    path = simulate(ar1(), [0.5], GAMMA3, 300, random_state=8)
    rep = substitution_estimate(path, ar1(), estimate_theta(path, ar1()), square(),
                                config=UStatConfig(m=3, random_state=1), theta_method="least-squares")
    d = rep.to_dict()
    for key in ("kappa_hat", "theta_hat", "a_star_hat", "m", "r", "B", "se_plugin", "diagnostics", "config"):
        assert key in d
    assert set(d["diagnostics"]) >= {"innovation_ss_resid", "empty_bucket_fraction", "rate_warnings"}
    assert rep.se_plugin >= 0 and rep.B == 200 * 300 * 3
    assert d["diagnostics"]["rate_warnings"]  # m=3 leaves a long tail at n=300
    assert '"kappa_hat"' in rep.to_json()


def test_moment_match_influence_warning():
    path = simulate(ma1(), [0.4], InnovationSpec.normal(), 400, random_state=9)
    th = estimate_theta(path, ma1(), "moment-match")
    with pytest.warns(MissingInfluenceWarning):
        substitution_estimate(path, ma1(), th, square(), config=UStatConfig(m=2, random_state=0),
                              theta_method="moment-match")


def test_plugin_se_constant_function_is_zero():
    path = simulate(ar1(), [0.5], GAMMA3, 500, random_state=10)
    rep = substitution_estimate(path, ar1(), [0.5], constant(3.0), config=UStatConfig(m=3, random_state=0),
                                theta_method="least-squares")
    assert rep.se_plugin == pytest.approx(0.0, abs=1e-12)
    assert rep.kappa_hat == pytest.approx(3.0)


def test_plugin_se_known_innovations():
    # sqrt(64 - (8/3)^2 * 3) = 6.53 with the full series; m=5 drops a negligible tail
    n = 2000
    X = GAMMA3.sample(n, np.random.default_rng(11))
    beta = 0.5 ** np.arange(5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = ustat_incomplete(X, beta, np.square, random_state=1)
    se = plugin_se(X, res, a_star_hat(X, res))
    assert se * math.sqrt(n) == pytest.approx(math.sqrt(64 - 64 / 3), rel=0.20)


def test_substitution_mean_variance_and_coverage():
    n, reps = 2000, 500
    kap, cover = [], 0
    for i in range(reps):
        path = simulate(ar1(), [0.5], GAMMA3, n, random_state=1000 + i)
        th = estimate_theta(path, ar1())
        # B = 40 n m keeps the run short; the sampling noise adds about 1% to the variance
        rep = substitution_estimate(path, ar1(), th, square(),
                                    config=UStatConfig(m=5, B=40 * n * 5, random_state=i),
                                    theta_method="least-squares")
        kap.append(rep.kappa_hat)
        cover += abs(rep.kappa_hat - 4.0) <= 1.96 * rep.se_plugin
    kap = np.array(kap)
    se = kap.std(ddof=1) / math.sqrt(reps)
    assert abs(kap.mean() - 4.0) < 3 * se
    assert n * kap.var(ddof=1) == pytest.approx(64.0, rel=0.15)
    assert 0.92 <= cover / reps <= 0.98
