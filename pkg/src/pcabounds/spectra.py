"""Eigenvalue profiles and the spectral functionals of the truncated covariance.

The ground truth throughout the package is a D-dimensional covariance that is
diagonal in its own eigenbasis, with eigenvalues materialized from a decay
profile.  Everything downstream (tail sums, resolvent-weighted norms) is a
closed-form function of that eigenvalue vector; indices are 1-based in the
math and converted here once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaincc

from .errors import DegenerateGapError, ParameterError, RangeError

# Relative gap below which resolvent weights are considered meaningless.
GAP_RTOL = 1e-12


@dataclass(frozen=True)
class Polynomial:
    """Eigenvalues K * j**(-alpha); alpha > 1 keeps the sequence summable."""

    K: float
    alpha: float

    def __post_init__(self):
        if not (self.K > 0):
            raise ParameterError(f"Polynomial profile needs K > 0, got K={self.K}")
        if not (self.alpha > 1):
            raise ParameterError(
                f"Polynomial profile needs alpha > 1, got alpha={self.alpha}"
            )

    def value(self, j: int) -> float:
        return self.K * float(j) ** (-self.alpha)

    def label(self) -> str:
        return f"poly(K={self.K:g},alpha={self.alpha:g})"


@dataclass(frozen=True)
class Exponential:
    """Eigenvalues K * exp(-alpha * j**beta), beta in (0, 1]."""

    K: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.K > 0):
            raise ParameterError(f"Exponential profile needs K > 0, got K={self.K}")
        if not (self.alpha > 0):
            raise ParameterError(
                f"Exponential profile needs alpha > 0, got alpha={self.alpha}"
            )
        if not (0 < self.beta <= 1):
            raise ParameterError(
                f"Exponential profile needs beta in (0, 1], got beta={self.beta}"
            )

    def value(self, j: int) -> float:
        return self.K * math.exp(-self.alpha * float(j) ** self.beta)

    def label(self) -> str:
        return f"exp(K={self.K:g},alpha={self.alpha:g},beta={self.beta:g})"


@dataclass(frozen=True)
class Explicit:
    """A finite, strictly positive, non-increasing eigenvalue list."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) == 0:
            raise ParameterError("Explicit profile needs at least one eigenvalue")
        if any(v <= 0 for v in vals):
            raise ParameterError("Explicit eigenvalues must be strictly positive")
        if any(a < b for a, b in zip(vals, vals[1:])):
            raise ParameterError("Explicit eigenvalues must be non-increasing")

    def value(self, j: int) -> float:
        return self.values[j - 1]

    def label(self) -> str:
        return f"explicit(D={len(self.values)})"


EigenvalueProfile = Union[Polynomial, Exponential, Explicit]


@dataclass(frozen=True)
class SpectralModel:
    """A decay profile truncated to D coordinates; eigenvalues λ are read-only."""

    profile: EigenvalueProfile
    eigenvalues: np.ndarray

    @property
    def D(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def model_id(self) -> str:
        return f"{self.profile.label()}|D={self.D}"

    def lam(self, j: int) -> float:
        """Eigenvalue at 1-based index j; zero beyond the truncation."""
        if j < 1:
            raise RangeError(f"eigenvalue index must be >= 1, got {j}")
        return float(self.eigenvalues[j - 1]) if j <= self.D else 0.0


def materialize(profile: EigenvalueProfile, D: int) -> SpectralModel:
    """Evaluate the profile formula at j = 1..D and freeze the eigenvalue vector.

    For Explicit profiles D must equal the stored list length.
    """
    if D < 1:
        raise ParameterError(f"truncation dimension must be >= 1, got D={D}")
    if isinstance(profile, Explicit):
        if D != len(profile.values):
            raise ParameterError(
                f"Explicit profile has {len(profile.values)} values, cannot "
                f"materialize with D={D}"
            )
        eig = np.asarray(profile.values, dtype=float)
    else:
        eig = np.array([profile.value(j) for j in range(1, D + 1)], dtype=float)
    eig.setflags(write=False)
    return SpectralModel(profile=profile, eigenvalues=eig)


def tail_sum(model: SpectralModel, d: int) -> float:
    """Trace tail sum over indices d < k <= D (compensated summation)."""
    if not (0 <= d <= model.D):
        raise RangeError(f"tail_sum needs 0 <= d <= D={model.D}, got d={d}")
    return math.fsum(model.eigenvalues[d:])


def _check_dims(model: SpectralModel, d_prime: int, d: int) -> None:
    # d == D is allowed: the truncated model has λ_k = 0 for k > D.
    if not (1 <= d_prime <= d <= model.D):
        raise RangeError(
            f"need 1 <= d' <= d <= D={model.D}, got d'={d_prime}, d={d}"
        )


def _gap(model: SpectralModel, d_prime: int, d: int) -> tuple:
    """Return (λ_{d+1}, λ_{d'} - λ_{d+1}); raise when the gap is degenerate."""
    lam_dp = model.lam(d_prime)
    lam_next = model.lam(d + 1)
    gap = lam_dp - lam_next
    if gap <= GAP_RTOL * lam_dp:
        raise DegenerateGapError(
            f"gap λ_{d_prime} - λ_{d + 1} = {gap:.3e} is degenerate "
            f"relative to λ_{d_prime} = {lam_dp:.6g}"
        )
    return lam_next, gap


@dataclass(frozen=True)
class WeightedOperatorStats:
    """Closed-form norms of the resolvent-weighted covariance on the top d' block.

    With weights (λ_j - λ_{d+1})^{-1/2}, j <= d':
      op_norm    = λ_{d'} / (λ_{d'} - λ_{d+1})          (operator norm)
      trace      = Σ_{j<=d'} λ_j / (λ_j - λ_{d+1})      (relative rank)
      hs_norm_sq = Σ_{j<=d'} λ_j² / (λ_j - λ_{d+1})²    (squared HS norm)
    """

    op_norm: float
    trace: float
    hs_norm_sq: float


def weighted_operator_stats(
    model: SpectralModel, d_prime: int, d: int
) -> WeightedOperatorStats:
    """Evaluate the three weighted-operator functionals for the pair (d', d)."""
    _check_dims(model, d_prime, d)
    lam_next, gap = _gap(model, d_prime, d)
    head = model.eigenvalues[:d_prime]
    ratios = head / (head - lam_next)
    return WeightedOperatorStats(
        op_norm=float(model.lam(d_prime) / gap),
        trace=math.fsum(ratios),
        hs_norm_sq=math.fsum(r * r for r in ratios),
    )


def resolvent_tail_sum(model: SpectralModel, d_prime: int, d: int) -> float:
    """Σ_{d < k <= D} λ_k / (λ_{d'} - λ_k); zero for an empty tail."""
    _check_dims(model, d_prime, d)
    if d == model.D:
        return 0.0
    lam_dp = model.lam(d_prime)
    tail = model.eigenvalues[d:]
    # λ_{d+1} is the largest tail eigenvalue, so one gap check covers them all.
    if lam_dp - tail[0] <= GAP_RTOL * lam_dp:
        raise DegenerateGapError(
            f"λ_{d_prime} - λ_{d + 1} = {lam_dp - tail[0]:.3e} is degenerate"
        )
    return math.fsum(tail / (lam_dp - tail))


def _integral_tail(profile: EigenvalueProfile, m: float) -> float:
    """Upper bound on Σ_{k>m} λ_k via the integral of the decreasing profile."""
    if isinstance(profile, Polynomial):
        return profile.K * m ** (1.0 - profile.alpha) / (profile.alpha - 1.0)
    if isinstance(profile, Exponential):
        a, b = profile.alpha, profile.beta
        # ∫_m^∞ K e^{-a x^b} dx = K a^{-1/b} / b * Γ(1/b, a m^b)
        return (
            profile.K
            * a ** (-1.0 / b)
            / b
            * float(gammaincc(1.0 / b, a * m**b))
            * math.gamma(1.0 / b)
        )
    raise ParameterError(f"no analytic tail for profile {profile!r}")


def suggest_truncation(
    profile: EigenvalueProfile,
    d_max: int,
    rel_tol: float = 1e-6,
    max_dim: int = 4096,
) -> int:
    """Smallest D whose analytic tail beyond D is below rel_tol times the tail
    mass at d_max, capped at max_dim.

    The cap matters for slowly decaying (polynomial) profiles, where the
    uncapped rule is astronomically large; callers should treat a returned
    D == max_dim as "rule not met, truncation bias ~ rel. tail at max_dim".
    """
    if d_max < 1:
        raise ParameterError(f"d_max must be >= 1, got {d_max}")
    if isinstance(profile, Explicit):
        return len(profile.values)
    floor = max(d_max + 1, 2)
    # Σ_{k>d} λ_k >= ∫_{d+1}^∞ λ(x) dx for a decreasing profile.
    target = rel_tol * _integral_tail(profile, float(d_max + 1))
    if _integral_tail(profile, float(max_dim)) > target:
        return max(max_dim, floor)
    lo, hi = floor, max_dim
    while lo < hi:
        mid = (lo + hi) // 2
        if _integral_tail(profile, float(mid)) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo
