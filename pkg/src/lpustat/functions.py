"""Target functions ``h`` with derivatives and growth constants.

The constants satisfy, for all real ``x, y``::

    |h(x)|          <= C1 (1 + |x|**p)
    |h(x+y) - h(x)| <= C2 (1 + |x|**p) (|y| + |y|**p)
    |h'(x)|         <= C3 (1 + |x|)**q

They only feed diagnostics (truncation bounds), never the estimators.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["SmoothFunction", "square", "identity", "absolute", "cos_t", "poly", "constant",
           "get_function"]


@dataclass(frozen=True, eq=False)
class SmoothFunction:
    name: str
    h: object
    h_prime: object
    p: float
    q: float
    C1: float
    C2: float
    C3: float
    params: tuple = ()

    def __call__(self, x):
        return self.h(x)

    def to_dict(self):
        return {"name": self.name, "params": list(self.params)}


def square():
    return SmoothFunction("square", np.square, lambda x: 2.0 * np.asarray(x), 2, 1, 1.0, 1.0, 2.0)


def identity():
    return SmoothFunction("identity", lambda x: np.asarray(x, dtype=float),
                          lambda x: np.ones_like(np.asarray(x, dtype=float)), 1, 0, 1.0, 1.0, 1.0)


def absolute():
    return SmoothFunction("abs", np.abs, np.sign, 1, 0, 1.0, 1.0, 1.0)


def cos_t(t=1.0):
    t = float(t)
    return SmoothFunction("cos_t", lambda x: np.cos(t * np.asarray(x)),
                          lambda x: -t * np.sin(t * np.asarray(x)),
                          1, 0, 1.0, abs(t), abs(t), (t,))


def constant(c=1.0):
    c = float(c)
    return SmoothFunction("constant", lambda x: np.full(np.shape(x), c),
                          lambda x: np.zeros(np.shape(x)), 1, 0, abs(c), 0.0, 0.0, (c,))


def poly(*coefs):
    """``h(x) = sum_k coefs[k] x**k``."""
    c = np.asarray(coefs, dtype=float)
    if c.size == 0:
        raise ValueError("poly needs at least one coefficient")
    deg = max(1, c.size - 1)
    k = np.arange(c.size)
    dc = (k * c)[1:]
    h = np.polynomial.polynomial.Polynomial(c)
    hp = np.polynomial.polynomial.Polynomial(dc if dc.size else [0.0])
    return SmoothFunction(
        "poly",
        lambda x: h(np.asarray(x, dtype=float)),
        lambda x: hp(np.asarray(x, dtype=float)),
        deg,
        max(deg - 1, 0),
        float(np.sum(np.abs(c))),
        float(np.sum(np.abs(c) * (2.0**k - 1))),
        float(np.sum(np.abs(dc))) if dc.size else 0.0,
        tuple(c.tolist()),
    )


_REGISTRY = {
    "square": square,
    "identity": identity,
    "abs": absolute,
    "cos_t": cos_t,
    "poly": poly,
    "constant": constant,
}


def get_function(name, *params):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown function {name!r}; choose from {sorted(_REGISTRY)}") from None
    return factory(*params)
