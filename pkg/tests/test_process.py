import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpustat._validation import DomainError
from lpustat.innovations import InnovationSpec
from lpustat.process import (
    ProcessPath,
    ar1,
    arma11,
    coefficients,
    custom_model,
    default_r,
    get_model,
    ma1,
    recover_innovations,
    simulate,
    xi_vectors,
)


def test_arma11_coefficients_hand_values():
    m = arma11()
    np.testing.assert_allclose(m.delta([0.5, 0.2], 2), [0.3, 0.15])
    np.testing.assert_allclose(m.gamma([0.5, 0.2], 2), [-0.3, -0.06])


def test_ar1_and_ma1_coefficients():
    np.testing.assert_allclose(ar1().gamma([0.5], 3), [-0.5, 0, 0])
    np.testing.assert_allclose(ar1().delta([0.5], 3), [0.5, 0.25, 0.125])
    np.testing.assert_allclose(ma1().gamma([0.5], 3), [-0.5, 0.25, -0.125])
    np.testing.assert_allclose(coefficients(ma1(), [0.4], "delta", 2), [0.4, 0.0])


def test_alpha_prepends_one():
    np.testing.assert_allclose(ar1().alpha([0.5], 3), [1.0, 0.5, 0.25])
    np.testing.assert_allclose(ar1().alpha_dot([0.5], 3)[:, 0], [0.0, 1.0, 1.0])


@given(t1=st.floats(-0.9, 0.9), t2=st.floats(-0.9, 0.9))
def test_arma11_gradients_match_finite_differences(t1, t2):
    if abs(t1 - t2) < 0.05:
        return
    m = arma11()
    th = np.array([t1, t2])
    h = 1e-6
    for val, dot in ((m.delta, m.delta_dot), (m.gamma, m.gamma_dot)):
        analytic = dot(th, 8)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            numeric = (val(th + e, 8) - val(th - e, 8)) / (2 * h)
            np.testing.assert_allclose(analytic[:, k], numeric, atol=1e-6)


@given(t=st.floats(-0.95, 0.95))
def test_delta_and_gamma_are_inverse_filters(t):
    # (1 + sum delta_s z^s)(1 + sum gamma_s z^s) = 1 as power series
    for model, th in ((ar1(), [t]), (ma1(), [t]), (arma11(), [t, t / 2 if abs(t) > 0.1 else 0.5])):
        d = np.concatenate([[1.0], model.delta(th, 30)])
        g = np.concatenate([[1.0], model.gamma(th, 30)])
        prod = np.convolve(d, g)[:31]
        np.testing.assert_allclose(prod, np.eye(1, 31)[0], atol=1e-9)


def test_domain_checks():
    with pytest.raises(DomainError):
        ar1().check([1.0])
    with pytest.raises(DomainError):
        arma11().check([0.5, 0.5])
    with pytest.raises(ValueError):
        get_model("AR2")


def test_tail_constants_bound_holds():
    m = arma11()
    C, a, eta = m.tail_constants([0.5, 0.2])
    s = np.arange(1, 60)
    for th in ([0.5, 0.2], [0.5 + eta * 0.7, 0.2], [0.5, 0.2 - eta * 0.7]):
        d = np.abs(m.delta(th, 59)) + np.linalg.norm(m.delta_dot(th, 59), axis=1)
        assert np.all(d <= C * a**s * (1 + 1e-9))


def test_white_noise_ar1_reproduces_innovations():
    path = simulate(ar1(), [0.0], InnovationSpec.normal(), 50, r=3, random_state=1)
    np.testing.assert_array_equal(path.obs, path.true_innovations)


def test_simulated_ar1_variance():
    path = simulate(ar1(), [0.5], InnovationSpec.normal(), 200000, random_state=2)
    assert path.obs.var() == pytest.approx(4 / 3, rel=0.02)


def test_recovery_exact_for_ar1_and_shrinking_for_ma1():
    spec = InnovationSpec.gamma(3)
    path = simulate(ar1(), [0.5], spec, 500, r=2, random_state=3)
    np.testing.assert_allclose(recover_innovations(path, ar1(), [0.5]), path.true_innovations, atol=1e-12)
    path = simulate(ma1(), [0.5], spec, 500, r=10, random_state=3)
    err = recover_innovations(path, ma1(), [0.5]) - path.true_innovations
    # the truncation error is (-theta)^(r+j+1) X_{-r-1}: geometric decay in j
    j = np.arange(err.size)
    np.testing.assert_allclose(err, err[0] * (-0.5) ** j, atol=1e-14)
    assert np.sum(err**2) < 1e-3


def test_custom_model_matches_named_model():
    named = ar1()
    custom = custom_model("myar", 1, named.delta_fn, named.gamma_fn, named.delta_dot_fn,
                          named.gamma_dot_fn, named.rate_fn)
    path = simulate(custom, [0.4], InnovationSpec.normal(), 300, r=5, random_state=4)
    np.testing.assert_allclose(recover_innovations(path, custom, [0.4]), path.true_innovations, atol=1e-9)
    np.testing.assert_allclose(recover_innovations(path, named, [0.4]),
                               recover_innovations(path, custom, [0.4]), atol=1e-9)


def test_xi_vectors_ar1_is_minus_lag():
    path = simulate(ar1(), [0.3], InnovationSpec.normal(), 100, r=4, random_state=5)
    np.testing.assert_allclose(xi_vectors(path, ar1(), [0.3])[:, 0], -path.lagged)
    with pytest.raises(ValueError, match="pre-observations"):
        xi_vectors(path, ar1(), [0.3], truncation=10)


def test_xi_is_derivative_of_recovered_innovations():
    path = simulate(arma11(), [0.5, 0.2], InnovationSpec.normal(), 200, r=6, random_state=6)
    th = np.array([0.5, 0.2])
    h = 1e-6
    xi = xi_vectors(path, arma11(), th)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        numeric = (recover_innovations(path, arma11(), th + e) - recover_innovations(path, arma11(), th - e)) / (2 * h)
        np.testing.assert_allclose(xi[:, k], numeric, atol=1e-6)


def test_csv_roundtrip_and_missing_pre_observations(tmp_path):
    path = simulate(ma1(), [0.3], InnovationSpec.laplace(), 40, r=3, random_state=7)
    target = tmp_path / "p.csv"
    path.to_csv(target, comments=["hello"])
    back = ProcessPath.from_csv(target)
    np.testing.assert_array_equal(back.y_full, path.y_full)
    np.testing.assert_array_equal(back.true_innovations, path.true_innovations)
    assert back.r == 3
    with pytest.raises(ValueError, match="r"):
        ProcessPath.from_csv(io.StringIO("index,y\n1,0.2\n2,0.3\n"))


def test_default_r():
    assert default_r(2000) == 10
    assert default_r(1) == 1
