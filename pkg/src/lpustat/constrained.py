"""Correction for a known moment constraint ``E[psi(X)] = 0`` on the innovations."""

from dataclasses import dataclass
import warnings

import numpy as np

from ._validation import check_series

__all__ = [
    "ConstraintSpec",
    "UnreliableProjectionWarning",
    "a_star_hat",
    "constrained_estimate",
    "a_star_closed_form",
]

EMPTY_BUCKET_LIMIT = 0.01


class UnreliableProjectionWarning(UserWarning):
    """More than 1% of the bucket table is empty."""


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Constraint function ``psi`` (Lipschitz, mean zero under P) and its derivative."""

    psi: object = None
    psi_prime: object = None
    lipschitz_const: float = 1.0
    name: str = "identity"

    def __post_init__(self):
        if self.psi is None:
            object.__setattr__(self, "psi", lambda x: np.asarray(x, dtype=float))
            object.__setattr__(self, "psi_prime", lambda x: np.ones_like(np.asarray(x, dtype=float)))
        elif self.psi_prime is None:
            raise ValueError("a custom psi must declare psi_prime")

    def __call__(self, x):
        return self.psi(x)


IDENTITY = ConstraintSpec()


def a_star_hat(X, result, psi=None, center=True):
    """Estimated projection coefficient of the influence function onto ``psi``.

    Returns ``sum_j psi(X_j) R_j / sum_j psi(X_j)**2`` where ``R_j`` is the
    bucket row sum ``sum_r H[j, r]``. With ``center=True`` (default) the
    rows are centred first, ``R_j - m * kappa_tilde``. Both versions estimate
    the same coefficient, but the uncentred one carries an extra term
    ``m * kappa_tilde * mean(psi) / mean(psi**2)`` that vanishes only at rate
    ``m / sqrt(n)``; the final corrected estimate changes by ``O(m/n)``.

    Empty buckets (possible in incomplete mode) contribute zero; an
    :class:`UnreliableProjectionWarning` is issued if more than 1% are empty.
    """
    psi = IDENTITY if psi is None else psi
    X = check_series(X, "X")
    if result.H.shape[0] != X.size:
        raise ValueError("bucket table does not match the sample size")
    p = np.asarray(psi(X), dtype=float)
    denom = float(np.sum(p * p))
    if denom == 0.0:
        raise ValueError("psi(X_j) vanishes for every observation")
    if result.empty_bucket_fraction > EMPTY_BUCKET_LIMIT:
        warnings.warn(
            f"{result.empty_bucket_fraction:.1%} of buckets are empty; a_star_hat is unreliable",
            UnreliableProjectionWarning,
            stacklevel=2,
        )
    rows = result.bucket_row_sums()
    if center:
        rows = rows - result.m * result.kappa_tilde
    return float(np.sum(p * rows) / denom)


def constrained_estimate(result, a, X, psi=None):
    """``kappa_tilde - a * mean(psi(X))``."""
    psi = IDENTITY if psi is None else psi
    kappa = result.kappa_tilde if hasattr(result, "kappa_tilde") else float(result)
    return float(kappa - a * np.mean(psi(check_series(X, "X"))))


def a_star_closed_form(spec, beta, h_name):
    """Exact projection coefficient for ``psi(x) = x`` and quadratic/linear ``h``.

    ``square``: ``mu3 * sum(beta**2) / mu2``; ``identity``: ``sum(beta)``.
    ``beta`` must hold the whole (or numerically complete) series.
    """
    beta = np.asarray(beta, dtype=float)
    name = getattr(h_name, "name", h_name)
    if name == "square":
        return spec.moment(3) * float(np.sum(beta**2)) / spec.moment(2)
    if name == "identity":
        return float(np.sum(beta))
    raise ValueError(f"no closed form for h={name!r}")
