"""Closed-form evaluation of the oracle bounds, comparison bounds, and the
selection rules for the reference dimension d'.

Absolute constants are never invented here: they are configuration values
(defaults 1.0) supplied through BoundConstants, and the condition flags are
evaluated inclusively, exactly as stated (e.g. λ_{d'} >= 2 λ_{d+1} accepts
equality).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import DegenerateGapError, ParameterError, UnsupportedProfileError
from .spectra import (
    EigenvalueProfile,
    Explicit,
    Exponential,
    Polynomial,
    SpectralModel,
    WeightedOperatorStats,
    resolvent_tail_sum,
    tail_sum,
    weighted_operator_stats,
)


@dataclass(frozen=True)
class BoundConstants:
    """User-supplied absolute constants.

    c1, c2, C1 drive the dimension-prefactor bound and its conditions; c1p,
    c2p, C1p the relative-rank (weighted) bound; C_dk the eigengap comparison
    bound; C_hw the quadratic-form tail bound.  The theory fixes the ratio
    c1 = c1p / 8 when deriving one bound from the other, but not the values;
    both are exposed independently.
    """

    c1: float = 1.0
    c2: float = 1.0
    C1: float = 1.0
    c1p: float = 1.0
    c2p: float = 1.0
    C1p: float = 1.0
    C_dk: float = 1.0
    C_hw: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not (getattr(self, f.name) > 0):
                raise ParameterError(f"constant {f.name} must be > 0")


def gap_condition(model: SpectralModel, d_prime: int, d: int) -> bool:
    """One-sided eigenvalue condition λ_{d'} >= 2 λ_{d+1}."""
    return model.lam(d_prime) >= 2.0 * model.lam(d + 1)


def size_condition(
    model: SpectralModel, d_prime: int, d: int, n: int, constants: BoundConstants
) -> bool:
    """max(d', λ_{d'}^{-1} Σ_{k>d} λ_k) <= c1 n."""
    return max(d_prime, tail_sum(model, d) / model.lam(d_prime)) <= constants.c1 * n


def select_dprime(
    model: SpectralModel, d: int, n: int, constants: BoundConstants
) -> int | None:
    """Largest d' <= d satisfying the gap and size conditions, or None.

    Both conditions relax as d' decreases, so the feasible set is downward
    closed; scanning from d downward returns the maximizer.
    """
    if not (1 <= d < model.D):
        raise ParameterError(f"need 1 <= d < D={model.D}, got d={d}")
    for dp in range(d, 0, -1):
        if gap_condition(model, dp, d) and size_condition(model, dp, d, n, constants):
            return dp
    return None


@dataclass(frozen=True)
class NearExponentialSelection:
    """d' = d + 1 - k for near-exponentially decaying eigenvalues.

    k = max(1, ceil((alpha beta)^{-1} (d+1)^{1-beta} log(2 K^2))) is the
    smallest offset that certifies λ_{d'} >= 2 λ_{d+1} through the ratio
    envelope.  in_regime records k <= (d+1)/2, the range where the envelope
    is valid; valid records d' >= 1.
    """

    k: int
    d_prime: int
    in_regime: bool
    valid: bool


def near_exponential_dprime(
    alpha: float, beta: float, K: float, d: int
) -> NearExponentialSelection:
    if not (alpha > 0 and 0 < beta <= 1 and K > 0 and d >= 1):
        raise ParameterError(
            f"need alpha > 0, beta in (0,1], K > 0, d >= 1; "
            f"got alpha={alpha}, beta={beta}, K={K}, d={d}"
        )
    raw = (d + 1.0) ** (1.0 - beta) * math.log(2.0 * K * K) / (alpha * beta)
    # Snap values that are integers up to float fuzz before taking the ceiling.
    if abs(raw - round(raw)) < 1e-9:
        raw = round(raw)
    k = max(1, math.ceil(raw))
    d_prime = d + 1 - k
    return NearExponentialSelection(
        k=k,
        d_prime=d_prime,
        in_regime=k <= (d + 1) / 2.0,
        valid=d_prime >= 1,
    )


@dataclass(frozen=True)
class DimensionBound:
    """Oracle bound with the raw-dimension prefactor 1 + C1 (d' + t)/n."""

    value: float
    oracle: float
    gap_ok: bool
    size_ok: bool
    t_ok: bool


def dimension_bound(
    model: SpectralModel,
    d_prime: int,
    d: int,
    n: int,
    t: float,
    constants: BoundConstants,
) -> DimensionBound:
    if not (1 <= d_prime <= d < model.D):
        raise ParameterError(f"need 1 <= d' <= d < D={model.D}")
    oracle = tail_sum(model, d_prime)
    value = (1.0 + constants.C1 * (d_prime + t) / n) * oracle
    return DimensionBound(
        value=value,
        oracle=oracle,
        gap_ok=gap_condition(model, d_prime, d),
        size_ok=size_condition(model, d_prime, d, n, constants),
        t_ok=1.0 <= t <= constants.c2 * n,
    )


@dataclass(frozen=True)
class RelativeRankBound:
    """Oracle bound with the weighted-operator (relative-rank) prefactor."""

    value: float
    oracle: float
    stats: WeightedOperatorStats
    resolvent_tail: float
    wsize_ok: bool
    t_ok: bool

    @property
    def prefactor(self) -> float:
        return self.value / self.oracle if self.oracle > 0 else math.inf


def relative_rank_bound(
    model: SpectralModel,
    d_prime: int,
    d: int,
    n: int,
    t: float,
    constants: BoundConstants,
) -> RelativeRankBound:
    stats = weighted_operator_stats(model, d_prime, d)
    rts = resolvent_tail_sum(model, d_prime, d)
    oracle = tail_sum(model, d_prime)
    value = (
        1.0
        + constants.C1p * (stats.op_norm * stats.trace + stats.op_norm**2 * t) / n
    ) * oracle
    return RelativeRankBound(
        value=value,
        oracle=oracle,
        stats=stats,
        resolvent_tail=rts,
        wsize_ok=stats.op_norm * stats.trace + stats.op_norm * rts
        <= constants.c1p * n,
        t_ok=1.0 <= t <= constants.c2p * n / stats.op_norm**2,
    )


def davis_kahan_excess(
    model: SpectralModel, d: int, n: int, t: float, constants: BoundConstants
) -> float:
    """Eigengap-based excess-risk bound C_dk * t / ((λ_d - λ_{d+1}) n)."""
    if not (1 <= d < model.D):
        raise ParameterError(f"need 1 <= d < D={model.D}, got d={d}")
    gap = model.lam(d) - model.lam(d + 1)
    if gap <= 0:
        raise DegenerateGapError(f"λ_{d} - λ_{d + 1} = {gap:.3e} is not positive")
    return constants.C_dk * t / (gap * n)


def davis_kahan_bound(
    model: SpectralModel, d: int, n: int, t: float, constants: BoundConstants
) -> float:
    """Oracle tail plus the eigengap excess bound, on the same axis as the
    reconstruction-error bounds."""
    return tail_sum(model, d) + davis_kahan_excess(model, d, n, t, constants)


@dataclass(frozen=True)
class HansonWrightTerms:
    """Constants of the quadratic-form tail bound for the weighted cross term.

    U2 / V = sqrt(n) identically.
    """

    U1: float
    U2: float
    V: float

    @property
    def U(self) -> float:
        return self.U1 + self.U2


def hanson_wright_terms(
    model: SpectralModel, d_prime: int, d: int, n: int
) -> HansonWrightTerms:
    if n < 1:
        raise ParameterError(f"need n >= 1, got n={n}")
    stats = weighted_operator_stats(model, d_prime, d)
    lam_after = model.lam(d_prime + 1)
    tail_dp = tail_sum(model, d_prime)
    U1 = math.sqrt(max(stats.trace * lam_after, stats.op_norm * tail_dp)) / (2.0 * n)
    U2 = math.sqrt(stats.op_norm * lam_after) / math.sqrt(2.0 * n)
    V = math.sqrt(stats.op_norm * lam_after) / (math.sqrt(2.0) * n)
    return HansonWrightTerms(U1=U1, U2=U2, V=V)


def hw_deviation_probability(terms: HansonWrightTerms, s: float, C_hw: float) -> float:
    """Tail bound 2 exp(-min(s²/U², s/V) / C_hw) for deviation s > 0."""
    if s <= 0:
        raise ParameterError(f"deviation s must be > 0, got {s}")
    U = terms.U
    return 2.0 * math.exp(-min(s * s / (U * U), s / terms.V) / C_hw)


def rate_envelope(profile: EigenvalueProfile, d: int, constants: BoundConstants) -> float:
    """Closed-form decay-rate envelope for the reconstruction error.

    Polynomial decay: C1 d^{1-alpha}.  Near-exponential decay:
    C1 d^{1-beta} exp(-alpha (d+1)^beta).
    """
    if d < 1:
        raise ParameterError(f"need d >= 1, got d={d}")
    if isinstance(profile, Polynomial):
        return constants.C1 * float(d) ** (1.0 - profile.alpha)
    if isinstance(profile, Exponential):
        return (
            constants.C1
            * float(d) ** (1.0 - profile.beta)
            * math.exp(-profile.alpha * (d + 1.0) ** profile.beta)
        )
    raise UnsupportedProfileError(
        f"rate envelope is defined for parametric profiles, not {type(profile).__name__}"
    )


@dataclass(frozen=True)
class RatioEnvelope:
    """Two-sided envelope for λ_{d'} / λ_{d+1} with d' = d + 1 - k."""

    lower: float
    upper: float
    in_regime: bool


def eigenvalue_ratio_envelope(
    alpha: float, beta: float, K: float, d: int, k: int
) -> RatioEnvelope:
    """Envelope K^{-2} e^{αβ(d+1)^{β-1} k} <= λ_{d'}/λ_{d+1} <= K² e^{2^{1-β}αβ(d+1)^{β-1} k},
    valid for k <= (d+1)/2 (concavity of x -> x^beta)."""
    if not (alpha > 0 and 0 < beta <= 1 and K > 0 and d >= 1 and k >= 1):
        raise ParameterError("need alpha > 0, beta in (0,1], K > 0, d >= 1, k >= 1")
    e = alpha * beta * (d + 1.0) ** (beta - 1.0) * k
    return RatioEnvelope(
        lower=math.exp(e) / (K * K),
        upper=K * K * math.exp(2.0 ** (1.0 - beta) * e),
        in_regime=k <= (d + 1) / 2.0 and d + 1 - k >= 1,
    )


def ratio_envelope_holds(profile: Exponential, d: int, k: int) -> bool:
    """Check the actual profile ratio λ_{d'}/λ_{d+1} against the envelope."""
    env = eigenvalue_ratio_envelope(profile.alpha, profile.beta, profile.K, d, k)
    if not env.in_regime:
        raise ParameterError(f"(d={d}, k={k}) is outside the envelope regime")
    ratio = profile.value(d + 1 - k) / profile.value(d + 1)
    return env.lower <= ratio <= env.upper


BOUND_REPORT_COLUMNS = (
    "d_prime",
    "d",
    "n",
    "t",
    "selection_failed",
    "gap_ok",
    "size_ok",
    "wsize_ok",
    "t_ok_dim",
    "t_ok_weighted",
    "oracle_dprime",
    "oracle_d",
    "dim_bound",
    "weighted_bound",
    "dk_excess",
    "dk_bound",
    "op_norm",
    "trace",
    "hs_norm_sq",
    "resolvent_tail",
    "hw_u1",
    "hw_u2",
    "hw_v",
)


@dataclass(frozen=True)
class BoundReport:
    """All bound quantities and condition flags for one (d', d, n, t) tuple."""

    d_prime: int
    d: int
    n: int
    t: float
    selection_failed: bool
    gap_ok: bool
    size_ok: bool
    wsize_ok: bool
    t_ok_dim: bool
    t_ok_weighted: bool
    oracle_dprime: float
    oracle_d: float
    dim_bound: float
    weighted_bound: float
    dk_excess: float
    dk_bound: float
    op_norm: float
    trace: float
    hs_norm_sq: float
    resolvent_tail: float
    hw_u1: float
    hw_u2: float
    hw_v: float

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in BOUND_REPORT_COLUMNS)


def bound_report(
    model: SpectralModel,
    d_prime: int,
    d: int,
    n: int,
    t: float,
    constants: BoundConstants,
    selection_failed: bool = False,
) -> BoundReport:
    """Assemble the full report; raises DegenerateGapError when the weighted
    quantities are undefined for (d', d)."""
    dim = dimension_bound(model, d_prime, d, n, t, constants)
    wgt = relative_rank_bound(model, d_prime, d, n, t, constants)
    hw = hanson_wright_terms(model, d_prime, d, n)
    excess = davis_kahan_excess(model, d, n, t, constants)
    oracle_d = tail_sum(model, d)
    return BoundReport(
        d_prime=d_prime,
        d=d,
        n=n,
        t=t,
        selection_failed=selection_failed,
        gap_ok=dim.gap_ok,
        size_ok=dim.size_ok,
        wsize_ok=wgt.wsize_ok,
        t_ok_dim=dim.t_ok,
        t_ok_weighted=wgt.t_ok,
        oracle_dprime=dim.oracle,
        oracle_d=oracle_d,
        dim_bound=dim.value,
        weighted_bound=wgt.value,
        dk_excess=excess,
        dk_bound=oracle_d + excess,
        op_norm=wgt.stats.op_norm,
        trace=wgt.stats.trace,
        hs_norm_sq=wgt.stats.hs_norm_sq,
        resolvent_tail=wgt.resolvent_tail,
        hw_u1=hw.U1,
        hw_u2=hw.U2,
        hw_v=hw.V,
    )
