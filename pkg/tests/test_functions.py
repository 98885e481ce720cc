import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpustat.functions import absolute, constant, cos_t, get_function, identity, poly, square

FUNCS = [square(), identity(), absolute(), cos_t(1.7), constant(2.0), poly(1.0, -2.0, 0.5), poly(0.0, 0.0, 0.0, 1.0)]
reals = st.floats(-50, 50, allow_nan=False)


@pytest.mark.parametrize("f", FUNCS, ids=lambda f: f"{f.name}{f.params}")
@given(x=reals, y=reals)
def test_growth_constants(f, x, y):
    p, q = f.p, f.q
    tol = 1e-9 * (1 + abs(x) ** 3 + abs(y) ** 3)
    assert abs(f(x)) <= f.C1 * (1 + abs(x) ** p) + tol
    assert abs(f(x + y) - f(x)) <= f.C2 * (1 + abs(x) ** p) * (abs(y) + abs(y) ** p) + tol
    assert abs(f.h_prime(x)) <= f.C3 * (1 + abs(x)) ** q + tol


@pytest.mark.parametrize("f", [f for f in FUNCS if f.name != "abs"], ids=lambda f: f.name)
def test_derivative(f):
    x = np.linspace(-3, 3, 13)
    numeric = (f(x + 1e-6) - f(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(f.h_prime(x), numeric, atol=1e-5)


def test_registry():
    assert get_function("cos_t", 2.0)(0.5) == pytest.approx(np.cos(1.0))
    assert get_function("poly", 1, 2)(3.0) == 7.0
    with pytest.raises(ValueError):
        get_function("exp")
