"""Independent oracles used by the tests.

Everything here recomputes expected values through a route the library does
not use: exact rational arithmetic for dyadic/inverse-square eigenvalues,
dense materialized operators for trace functionals, and brute-force scans.
"""

from fractions import Fraction

import numpy as np

from pcabounds import Explicit, materialize


def dyadic_fracs(D):
    """Eigenvalues 2^-j, j = 1..D, as exact rationals."""
    return [Fraction(1, 2**j) for j in range(1, D + 1)]


def inv_square_fracs(D):
    """Eigenvalues j^-2, j = 1..D, as exact rationals."""
    return [Fraction(1, j * j) for j in range(1, D + 1)]


def dyadic_model(D=20):
    return materialize(Explicit(values=tuple(2.0**-j for j in range(1, D + 1))), D)


def frac_tail(vals, d):
    return sum(vals[d:], Fraction(0))


def frac_weighted_stats(vals, d_prime, d):
    """(op_norm, trace, hs_norm_sq) as exact rationals; λ_{d+1} = 0 past D."""
    lam_next = vals[d] if d < len(vals) else Fraction(0)
    op = vals[d_prime - 1] / (vals[d_prime - 1] - lam_next)
    trace = sum((vals[j] / (vals[j] - lam_next) for j in range(d_prime)), Fraction(0))
    hs = sum(
        ((vals[j] / (vals[j] - lam_next)) ** 2 for j in range(d_prime)), Fraction(0)
    )
    return op, trace, hs


def frac_resolvent_tail(vals, d_prime, d):
    lam_dp = vals[d_prime - 1]
    return sum((vals[k] / (lam_dp - vals[k]) for k in range(d, len(vals))), Fraction(0))


def dense_reconstruction_error(model, fit, d):
    """tr(Σ (I - P̂)) with both operators materialized as D x D matrices."""
    D = model.D
    sigma = np.diag(model.eigenvalues)
    proj = fit.basis[:d].T @ fit.basis[:d]
    return float(np.trace(sigma @ (np.eye(D) - proj)))


def random_explicit_model(rng, max_dim=40, min_dim=3):
    m = int(rng.integers(min_dim, max_dim + 1))
    vals = np.sort(rng.uniform(0.05, 2.0, size=m))[::-1]
    return materialize(Explicit(values=tuple(vals)), m)
