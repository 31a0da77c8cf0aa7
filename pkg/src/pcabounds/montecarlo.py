"""Replicated experiments, tail-probability estimates, and empirical constants.

All randomness is keyed on (seed, replicate_index); replicates may run on any
thread schedule and the record list is identical.  BLAS pools are pinned to a
single thread for the duration of a run so that per-replicate numerics do not
depend on the parallelism level, and the speedup comes from replicate-level
data parallelism instead.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .bounds import (
    BoundConstants,
    hanson_wright_terms,
    hw_deviation_probability,
    select_dprime,
)
from .errors import ParameterError
from .pca import (
    empirical_reconstruction_error,
    event_indicator,
    fit,
    perturbation_stats,
    population_projection_error,
    reconstruction_error,
)
from .sampler import CoefficientLaw, draw_batch
from .spectra import SpectralModel, tail_sum, weighted_operator_stats


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: a model, a law, grids of (n, d, t), and R replicates."""

    model: SpectralModel
    law: CoefficientLaw
    n_list: tuple
    d_list: tuple
    t_list: tuple
    replicates: int
    seed: int
    constants: BoundConstants
    gamma: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "d_list", tuple(int(d) for d in self.d_list))
        object.__setattr__(self, "t_list", tuple(float(t) for t in self.t_list))
        problems = []
        if self.replicates < 1:
            problems.append(f"replicates must be >= 1, got {self.replicates}")
        for name, lst in (("n", self.n_list), ("d", self.d_list), ("t", self.t_list)):
            if not lst:
                problems.append(f"{name} list must be non-empty")
        if not (0 <= self.seed < 2**64):
            problems.append(f"seed must fit an unsigned 64-bit integer, got {self.seed}")
        if not (0 < self.gamma < 1):
            problems.append(f"gamma must be in (0, 1), got {self.gamma}")
        if self.d_list and any(d < 1 or d >= self.model.D for d in self.d_list):
            problems.append(
                f"every d must satisfy 1 <= d < D={self.model.D}, got {self.d_list}"
            )
        if self.t_list and any(t <= 0 for t in self.t_list):
            problems.append(f"every t must be positive, got {self.t_list}")
        if self.n_list and self.d_list and min(self.n_list) < max(self.d_list) + 1:
            problems.append(
                f"need n >= max(d) + 1 = {max(self.d_list) + 1} for every n, "
                f"got min(n) = {min(self.n_list)}"
            )
        if problems:
            raise ParameterError("; ".join(problems))


RECORD_COLUMNS = (
    "replicate_index",
    "n",
    "d",
    "d_prime",
    "selection_failed",
    "r_hat",
    "oracle_d",
    "oracle_dprime",
    "ratio",
    "rn_hat",
    "rn_pop",
    "cross_hs_sq",
    "inner_op",
    "event_ok",
    "lambda_hat_head",
    "error",
)


@dataclass(frozen=True)
class ReplicateRecord:
    """Everything measured on one batch for one reconstruction dimension d."""

    replicate_index: int
    n: int
    d: int
    d_prime: int
    selection_failed: bool
    r_hat: float
    oracle_d: float
    oracle_dprime: float
    ratio: float
    rn_hat: float
    rn_pop: float
    cross_hs_sq: float
    inner_op: float
    event_ok: bool
    lambda_hat_head: tuple
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.error == ""

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in RECORD_COLUMNS)


def _error_record(r: int, n: int, d: int, exc: Exception) -> ReplicateRecord:
    nan = math.nan
    return ReplicateRecord(
        replicate_index=r,
        n=n,
        d=d,
        d_prime=0,
        selection_failed=False,
        r_hat=nan,
        oracle_d=nan,
        oracle_dprime=nan,
        ratio=nan,
        rn_hat=nan,
        rn_pop=nan,
        cross_hs_sq=nan,
        inner_op=nan,
        event_ok=False,
        lambda_hat_head=(),
        error=f"{type(exc).__name__}: {exc}",
    )


def _replicate_records(config: ExperimentConfig, n: int, r: int) -> list:
    """All records for one (n, replicate) pair; one batch serves every d."""
    model, law = config.model, config.law
    try:
        batch = draw_batch(model, law, n, config.seed, replicate_index=r)
        fit_ = fit(batch)
    except Exception as exc:  # failure isolation: emit error rows, never abort
        return [_error_record(r, n, d, exc) for d in config.d_list]
    records = []
    for d in config.d_list:
        try:
            dp = select_dprime(model, d, n, config.constants)
            selection_failed = dp is None
            if selection_failed:
                dp = d
            stats = perturbation_stats(model, batch, dp, d, fit_=fit_)
            r_hat = reconstruction_error(model, fit_, d)
            oracle_dp = tail_sum(model, dp)
            records.append(
                ReplicateRecord(
                    replicate_index=r,
                    n=n,
                    d=d,
                    d_prime=dp,
                    selection_failed=selection_failed,
                    r_hat=r_hat,
                    oracle_d=tail_sum(model, d),
                    oracle_dprime=oracle_dp,
                    ratio=r_hat / oracle_dp,
                    rn_hat=empirical_reconstruction_error(batch, fit_, d),
                    rn_pop=population_projection_error(batch, d),
                    cross_hs_sq=stats.cross_hs_sq,
                    inner_op=stats.inner_op,
                    event_ok=event_indicator(stats, model, dp, d),
                    lambda_hat_head=tuple(
                        fit_.eigenvalue(k) for k in range(1, d + 2)
                    ),
                )
            )
        except Exception as exc:
            records.append(_error_record(r, n, d, exc))
    return records


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list:
    """Run all replicates; the result is independent of `jobs`.

    Records are ordered by (n, d, replicate_index) following the config's own
    list order.
    """
    tasks = [(n, r) for n in config.n_list for r in range(config.replicates)]
    with threadpool_limits(limits=1):
        if jobs <= 1:
            by_task = {key: _replicate_records(config, *key) for key in tasks}
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = {
                    key: pool.submit(_replicate_records, config, *key)
                    for key in tasks
                }
            by_task = {key: fut.result() for key, fut in futures.items()}
    records = []
    for n in config.n_list:
        for i, d in enumerate(config.d_list):
            for r in range(config.replicates):
                records.append(by_task[(n, r)][i])
    return records


def _binom_logpmf_table(R: int) -> np.ndarray:
    k = np.arange(R + 1)
    return (
        math.lgamma(R + 1)
        - np.array([math.lgamma(i + 1) + math.lgamma(R - i + 1) for i in k])
    )


def _binom_cdf(k: int, R: int, p: float, log_comb: np.ndarray) -> float:
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 1.0 if k >= R else 0.0
    i = np.arange(k + 1)
    logs = log_comb[: k + 1] + i * math.log(p) + (R - i) * math.log1p(-p)
    m = logs.max()
    return float(math.exp(m) * np.exp(logs - m).sum())


def clopper_pearson(x: int, R: int, gamma: float = 0.95) -> tuple:
    """Exact two-sided binomial interval, by inverting the binomial CDF."""
    if not (0 <= x <= R and R >= 1):
        raise ParameterError(f"need 0 <= x <= R with R >= 1, got x={x}, R={R}")
    if not (0 < gamma < 1):
        raise ParameterError(f"confidence level must be in (0, 1), got {gamma}")
    alpha2 = (1.0 - gamma) / 2.0
    log_comb = _binom_logpmf_table(R)

    def solve(k: int, target: float) -> float:
        # CDF(k; R, p) is strictly decreasing in p; bisect to the target.
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = (lo + hi) / 2.0
            if _binom_cdf(k, R, mid, log_comb) > target:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2.0

    low = 0.0 if x == 0 else solve(x - 1, 1.0 - alpha2)
    high = 1.0 if x == R else solve(x, alpha2)
    return low, high


@dataclass(frozen=True)
class TailEstimate:
    """Empirical probability with an exact two-sided binomial interval."""

    successes: int
    trials: int
    ci_low: float
    ci_high: float
    gamma: float

    @property
    def point(self) -> float:
        return self.successes / self.trials


def tail_probability(records, predicate, gamma: float = 0.95) -> TailEstimate:
    """Estimate P(predicate) over valid records with a Clopper-Pearson interval."""
    valid = [rec for rec in records if rec.ok]
    if not valid:
        raise ParameterError("no valid records to estimate from")
    x = sum(1 for rec in valid if predicate(rec))
    low, high = clopper_pearson(x, len(valid), gamma)
    return TailEstimate(
        successes=x, trials=len(valid), ci_low=low, ci_high=high, gamma=gamma
    )


def _shared(records, attr: str):
    vals = {getattr(rec, attr) for rec in records}
    if len(vals) != 1:
        raise ParameterError(f"records mix several values of {attr}: {sorted(vals)}")
    return vals.pop()


def empirical_constant(records, q: float) -> float:
    """Lower empirical q-quantile of the ratio R(P̂)/oracle (no interpolation).

    With this convention the 0.5-quantile is the lower sample median.
    """
    if not (0 < q < 1):
        raise ParameterError(f"quantile level must be in (0, 1), got q={q}")
    valid = [rec for rec in records if rec.ok]
    if not valid:
        raise ParameterError("no valid records to estimate from")
    for attr in ("n", "d", "d_prime"):
        _shared(valid, attr)
    ratios = sorted(rec.ratio for rec in valid)
    return ratios[math.ceil(q * len(ratios)) - 1]


def exact_cross_expectation(
    model: SpectralModel, d_prime: int, d: int, n: int
) -> float:
    """E of the weighted cross HS term under independent unit-variance
    coefficients: tr(weighted top block) * tail(d') / n."""
    stats = weighted_operator_stats(model, d_prime, d)
    return stats.trace * tail_sum(model, d_prime) / n


@dataclass(frozen=True)
class HwCheckReport:
    """Sample mean of the weighted cross term vs. its exact expectation."""

    n_records: int
    sample_mean: float
    expected: float
    std_error: float
    z: float
    passed: bool


def hw_expectation_check(
    model: SpectralModel, records, min_replicates: int = 100
) -> HwCheckReport:
    """z-test of mean(cross_hs_sq) against the analytic expectation."""
    valid = [rec for rec in records if rec.ok]
    if len(valid) < min_replicates:
        raise ParameterError(
            f"need at least {min_replicates} valid replicates, got {len(valid)}"
        )
    n = _shared(valid, "n")
    d = _shared(valid, "d")
    dp = _shared(valid, "d_prime")
    expected = exact_cross_expectation(model, dp, d, n)
    values = np.array([rec.cross_hs_sq for rec in valid])
    mean = float(values.mean())
    se = float(values.std(ddof=1)) / math.sqrt(len(valid))
    if se == 0.0:
        z = 0.0 if mean == expected else math.inf
    else:
        z = (mean - expected) / se
    return HwCheckReport(
        n_records=len(valid),
        sample_mean=mean,
        expected=expected,
        std_error=se,
        z=z,
        passed=abs(z) <= 3.0,
    )


def hw_tail_inequality_holds(
    model: SpectralModel, records, C_hw: float, s_list, margin: float | None = None
) -> bool:
    """Monte Carlo check of the quadratic-form tail inequality.

    For each s in s_list, the empirical frequency of
    {sqrt(cross_hs_sq) >= s + C_hw * sqrt(trace * tail(d')/n)} must not exceed
    2 exp(-min(s²/U², s/V)/C_hw) plus a Monte Carlo margin (default 2/sqrt(R)).
    """
    valid = [rec for rec in records if rec.ok]
    if not valid:
        raise ParameterError("no valid records to check")
    n = _shared(valid, "n")
    d = _shared(valid, "d")
    dp = _shared(valid, "d_prime")
    if margin is None:
        margin = 2.0 / math.sqrt(len(valid))
    terms = hanson_wright_terms(model, dp, d, n)
    stats = weighted_operator_stats(model, dp, d)
    offset = C_hw * math.sqrt(stats.trace * tail_sum(model, dp) / n)
    devs = np.sqrt([rec.cross_hs_sq for rec in valid])
    for s in s_list:
        if s <= 0:
            raise ParameterError(f"deviation levels must be positive, got {s}")
        freq = float(np.mean(devs >= s + offset))
        if freq > hw_deviation_probability(terms, s, C_hw) + margin:
            return False
    return True


def calibrate_hw_constant(
    model: SpectralModel,
    records,
    s_list,
    margin: float | None = None,
    c_max: float = 64.0,
) -> float:
    """Smallest constant for which the tail inequality holds on the records.

    Feasibility is monotone in the constant (the threshold rises and the tail
    bound loosens together), so a bisection applies.  Raises when even c_max
    fails, which signals an implementation or margin problem rather than a
    calibration outcome.
    """
    if not hw_tail_inequality_holds(model, records, c_max, s_list, margin):
        raise ParameterError(f"tail inequality fails even at C_hw={c_max}")
    lo, hi = 0.0, c_max
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if mid > 0 and hw_tail_inequality_holds(model, records, mid, s_list, margin):
            hi = mid
        else:
            lo = mid
    return hi


SUMMARY_COLUMNS = (
    "n",
    "d",
    "d_prime",
    "selection_failed",
    "n_valid",
    "n_error",
    "oracle_d",
    "oracle_dprime",
    "mean_r_hat",
    "mean_ratio",
    "median_ratio",
    "q99_ratio",
    "event_rate",
    "event_ci_low",
    "event_ci_high",
    "mean_cross_hs_sq",
    "hw_expected",
    "hw_z",
    "hw_pass",
)


@dataclass(frozen=True)
class SummaryRow:
    n: int
    d: int
    d_prime: int
    selection_failed: bool
    n_valid: int
    n_error: int
    oracle_d: float
    oracle_dprime: float
    mean_r_hat: float
    mean_ratio: float
    median_ratio: float
    q99_ratio: float
    event_rate: float
    event_ci_low: float
    event_ci_high: float
    mean_cross_hs_sq: float
    hw_expected: float
    hw_z: float
    hw_pass: bool | None

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in SUMMARY_COLUMNS)


def summarize(config: ExperimentConfig, records) -> list:
    """One summary row per (n, d) group, in the config's grid order."""
    rows = []
    for n in config.n_list:
        for d in config.d_list:
            group = [rec for rec in records if rec.n == n and rec.d == d]
            valid = [rec for rec in group if rec.ok]
            if not valid:
                continue
            event = tail_probability(valid, lambda rec: rec.event_ok, config.gamma)
            try:
                hw = hw_expectation_check(config.model, valid)
                hw_expected, hw_z, hw_pass = hw.expected, hw.z, hw.passed
            except ParameterError:
                dp = _shared(valid, "d_prime")
                hw_expected = exact_cross_expectation(config.model, dp, d, n)
                hw_z, hw_pass = math.nan, None
            rows.append(
                SummaryRow(
                    n=n,
                    d=d,
                    d_prime=_shared(valid, "d_prime"),
                    selection_failed=_shared(valid, "selection_failed"),
                    n_valid=len(valid),
                    n_error=len(group) - len(valid),
                    oracle_d=valid[0].oracle_d,
                    oracle_dprime=valid[0].oracle_dprime,
                    mean_r_hat=float(np.mean([rec.r_hat for rec in valid])),
                    mean_ratio=float(np.mean([rec.ratio for rec in valid])),
                    median_ratio=empirical_constant(valid, 0.5),
                    q99_ratio=empirical_constant(valid, 0.99),
                    event_rate=event.point,
                    event_ci_low=event.ci_low,
                    event_ci_high=event.ci_high,
                    mean_cross_hs_sq=float(
                        np.mean([rec.cross_hs_sq for rec in valid])
                    ),
                    hw_expected=hw_expected,
                    hw_z=hw_z,
                    hw_pass=hw_pass,
                )
            )
    return rows
