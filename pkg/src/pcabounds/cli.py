"""Command-line entry point.

Subcommands:
  simulate   run one replicated experiment, write records.csv + summary.csv
  bounds     evaluate bound reports over the (d', d, n, t) grid, no sampling
  sweep      deterministic decay-regime comparison (rate envelopes, eigengap
             bound crossover) over the d grid
  check      self-contained invariant and oracle suite, pass/fail per check

Configs are strict JSON: unknown keys are fatal and every offending key is
named.  Output CSVs embed the resolved config (hash + canonical JSON) so a
run can be reproduced exactly; `--jobs` is a parallelism hint and never
changes results.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    BOUND_REPORT_COLUMNS,
    BoundConstants,
    bound_report,
    davis_kahan_excess,
    dimension_bound,
    eigenvalue_ratio_envelope,
    hanson_wright_terms,
    near_exponential_dprime,
    rate_envelope,
    ratio_envelope_holds,
    relative_rank_bound,
    select_dprime,
)
from .errors import ConfigError, DegenerateGapError, NumericError, ParameterError, UnsupportedProfileError
from .montecarlo import (
    RECORD_COLUMNS,
    SUMMARY_COLUMNS,
    ExperimentConfig,
    clopper_pearson,
    hw_expectation_check,
    run_experiment,
    summarize,
)
from .pca import empirical_reconstruction_error, fit, population_projection_error, reconstruction_error
from .sampler import (
    GAUSSIAN,
    RADEMACHER,
    UNIFORM_SYM,
    draw_batch,
    empirical_covariance,
    law_from_tag,
    moment_check,
)
from .spectra import (
    Explicit,
    Exponential,
    Polynomial,
    materialize,
    resolvent_tail_sum,
    suggest_truncation,
    tail_sum,
    weighted_operator_stats,
)
from .tables import write_csv

_CONSTANT_KEYS = ("c1", "c2", "C1", "c1p", "c2p", "C1p", "C_dk", "C_hw")

_PROFILE_KEYS = {
    "polynomial": {"type", "K", "alpha"},
    "exponential": {"type", "K", "alpha", "beta"},
    "explicit": {"type", "values"},
}

_MODEL_KEYS = {"profile", "D", "D_cap"}
_TOP_KEYS = {"model", "law", "n", "d", "t", "replicates", "seed", "constants", "gamma"}

_DEFAULT_T = [1, 2, 4, 8]
_DEFAULT_GAMMA = 0.95
_DEFAULT_D_CAP = 4096
_TRUNC_TOL = 1e-6


def _as_positive_int_list(value, key, problems):
    if not isinstance(value, list) or not value:
        problems.append(f"{key}: must be a non-empty list")
        return []
    out = []
    for i, v in enumerate(value):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            problems.append(f"{key}[{i}]: must be a positive integer, got {v!r}")
        else:
            out.append(v)
    return out


def _build_profile(raw, problems):
    if not isinstance(raw, dict):
        problems.append("model.profile: must be an object")
        return None
    ptype = raw.get("type")
    if ptype not in _PROFILE_KEYS:
        problems.append(
            f"model.profile.type: must be one of {sorted(_PROFILE_KEYS)}, got {ptype!r}"
        )
        return None
    for key in set(raw) - _PROFILE_KEYS[ptype]:
        problems.append(f"model.profile.{key}: unknown key")
    try:
        if ptype == "polynomial":
            return Polynomial(K=float(raw.get("K", 1.0)), alpha=float(raw["alpha"]))
        if ptype == "exponential":
            return Exponential(
                K=float(raw.get("K", 1.0)),
                alpha=float(raw["alpha"]),
                beta=float(raw.get("beta", 1.0)),
            )
        return Explicit(values=tuple(float(v) for v in raw["values"]))
    except KeyError as exc:
        problems.append(f"model.profile.{exc.args[0]}: missing")
    except (ParameterError, TypeError, ValueError) as exc:
        problems.append(f"model.profile: {exc}")
    return None


def resolve_config(raw: dict) -> tuple:
    """Validate a raw config dict; return (ExperimentConfig, resolved dict).

    The resolved dict has every default applied and the truncation dimension
    pinned (auto-selected D is materialized into it), so it reproduces the
    run byte-for-byte.
    """
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    for key in set(raw) - _TOP_KEYS:
        problems.append(f"{key}: unknown key")
    for key in ("model", "law", "n", "d", "replicates", "seed"):
        if key not in raw:
            problems.append(f"{key}: missing")
    model_raw = raw.get("model", {})
    profile = None
    if isinstance(model_raw, dict):
        for key in set(model_raw) - _MODEL_KEYS:
            problems.append(f"model.{key}: unknown key")
        if "profile" not in model_raw:
            problems.append("model.profile: missing")
        else:
            profile = _build_profile(model_raw["profile"], problems)
    elif "model" in raw:
        problems.append("model: must be an object")
        model_raw = {}

    law_tag = raw.get("law")
    law = None
    if "law" in raw:
        try:
            law = law_from_tag(law_tag)
        except ParameterError as exc:
            problems.append(f"law: {exc}")

    n_list = _as_positive_int_list(raw.get("n", []), "n", problems) if "n" in raw else []
    d_list = _as_positive_int_list(raw.get("d", []), "d", problems) if "d" in raw else []

    t_raw = raw.get("t", _DEFAULT_T)
    t_list = []
    if not isinstance(t_raw, list) or not t_raw:
        problems.append("t: must be a non-empty list")
    else:
        for i, v in enumerate(t_raw):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
                problems.append(f"t[{i}]: must be a positive number, got {v!r}")
            else:
                t_list.append(float(v))

    replicates = raw.get("replicates", 0)
    if "replicates" in raw and (
        not isinstance(replicates, int) or isinstance(replicates, bool) or replicates < 1
    ):
        problems.append(f"replicates: must be a positive integer, got {replicates!r}")

    seed = raw.get("seed", 0)
    if "seed" in raw and (
        not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64
    ):
        problems.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")

    constants_raw = raw.get("constants", {})
    constants = None
    if not isinstance(constants_raw, dict):
        problems.append("constants: must be an object")
        constants_raw = {}
    for key in set(constants_raw) - set(_CONSTANT_KEYS):
        problems.append(f"constants.{key}: unknown key")
    try:
        constants = BoundConstants(
            **{k: float(constants_raw.get(k, 1.0)) for k in _CONSTANT_KEYS}
        )
    except (ParameterError, TypeError, ValueError) as exc:
        problems.append(f"constants: {exc}")

    gamma = raw.get("gamma", _DEFAULT_GAMMA)
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool) or not 0 < gamma < 1:
        problems.append(f"gamma: must be in (0, 1), got {gamma!r}")

    model = None
    D = model_raw.get("D") if isinstance(model_raw, dict) else None
    d_cap = model_raw.get("D_cap", _DEFAULT_D_CAP) if isinstance(model_raw, dict) else _DEFAULT_D_CAP
    if not isinstance(d_cap, int) or isinstance(d_cap, bool) or d_cap < 2:
        problems.append(f"model.D_cap: must be an integer >= 2, got {d_cap!r}")
        d_cap = _DEFAULT_D_CAP
    if profile is not None and not problems:
        if D is None:
            D = suggest_truncation(profile, max(d_list), rel_tol=_TRUNC_TOL, max_dim=d_cap)
        elif not isinstance(D, int) or isinstance(D, bool) or D < 1:
            problems.append(f"model.D: must be a positive integer or null, got {D!r}")
        if not problems:
            try:
                model = materialize(profile, D)
            except ParameterError as exc:
                problems.append(f"model.D: {exc}")

    config = None
    if not problems and model is not None and law is not None:
        try:
            config = ExperimentConfig(
                model=model,
                law=law,
                n_list=tuple(n_list),
                d_list=tuple(d_list),
                t_list=tuple(t_list),
                replicates=replicates,
                seed=seed,
                constants=constants,
                gamma=float(gamma),
            )
        except ParameterError as exc:
            problems.append(str(exc))

    if problems:
        raise ConfigError(problems)

    resolved = {
        "model": {
            "profile": dict(model_raw["profile"]),
            "D": model.D,
            "D_cap": d_cap,
        },
        "law": law_tag,
        "n": list(config.n_list),
        "d": list(config.d_list),
        "t": list(config.t_list),
        "replicates": replicates,
        "seed": seed,
        "constants": {k: getattr(constants, k) for k in _CONSTANT_KEYS},
        "gamma": float(gamma),
    }
    return config, resolved


def _apply_override(raw: dict, assignment: str) -> None:
    path, sep, text = assignment.partition("=")
    if not sep:
        raise ConfigError([f"--set {assignment!r}: expected key=value"])
    keys = path.split(".")
    known = {
        1: _TOP_KEYS,
        2: {"model": _MODEL_KEYS, "constants": set(_CONSTANT_KEYS)},
        3: {"model.profile": {"type", "K", "alpha", "beta", "values"}},
    }
    if len(keys) == 1:
        ok = keys[0] in known[1]
    elif len(keys) == 2:
        ok = keys[0] in known[2] and keys[1] in known[2][keys[0]]
    elif len(keys) == 3:
        parent = ".".join(keys[:2])
        ok = parent in known[3] and keys[2] in known[3][parent]
    else:
        ok = False
    if not ok:
        raise ConfigError([f"--set {path}: not a recognized config key"])
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError([f"--set {path}: {key} is not an object"])
    node[keys[-1]] = value


def load_config(path, overrides=(), seed_override=None) -> tuple:
    """Read, override, and validate a config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    for assignment in overrides:
        _apply_override(raw, assignment)
    if seed_override is not None:
        raw["seed"] = seed_override
    return resolve_config(raw)


def _meta(resolved: dict) -> dict:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return {
        "package": f"pcabounds {__version__}",
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": resolved["seed"],
        "model": f"{resolved['model']['profile']}|D={resolved['model']['D']}",
        "law": resolved["law"],
        "config": canonical,
    }


def _write(path, columns, rows, meta) -> None:
    write_csv(path, columns, rows, meta)


def cmd_simulate(config, resolved, out_dir: Path, jobs: int) -> int:
    records = run_experiment(config, jobs=jobs)
    summary = summarize(config, records)
    meta = _meta(resolved)
    _write(out_dir / "records.csv", RECORD_COLUMNS, [r.row() for r in records], meta)
    _write(out_dir / "summary.csv", SUMMARY_COLUMNS, [r.row() for r in summary], meta)
    for row in summary:
        print(
            f"simulate n={row.n} d={row.d} d'={row.d_prime} "
            f"valid={row.n_valid} errors={row.n_error} "
            f"median_ratio={row.median_ratio:.6g} event_rate={row.event_rate:.4g}"
        )
    return 0


def cmd_bounds(config, resolved, out_dir: Path) -> int:
    rows = []
    for d in config.d_list:
        for n in config.n_list:
            dp = select_dprime(config.model, d, n, config.constants)
            failed = dp is None
            if failed:
                dp = d
            for t in config.t_list:
                rows.append(
                    bound_report(
                        config.model, dp, d, n, t, config.constants, selection_failed=failed
                    ).row()
                )
    _write(out_dir / "bounds.csv", BOUND_REPORT_COLUMNS, rows, _meta(resolved))
    print(f"bounds: wrote {len(rows)} rows")
    return 0


SWEEP_COLUMNS = (
    "profile",
    "d",
    "n",
    "t",
    "d_prime",
    "selection_failed",
    "in_regime",
    "oracle_d",
    "oracle_dprime",
    "rate_env",
    "tail_env_ratio",
    "dim_bound",
    "weighted_bound",
    "dk_excess",
    "dk_bound",
    "dk_crosses",
    "eig_ratio",
    "eig_ratio_low",
    "eig_ratio_high",
)


def cmd_sweep(config, resolved, out_dir: Path) -> int:
    """Decay-regime comparison: rate envelopes vs. oracle tails vs. the
    eigengap bound, on a deterministic (d, n, t) grid."""
    model = config.model
    profile = model.profile
    rows = []
    for d in config.d_list:
        if isinstance(profile, Exponential):
            sel = near_exponential_dprime(profile.alpha, profile.beta, profile.K, d)
            dp, failed, in_regime = sel.d_prime, not sel.valid, sel.in_regime
            if failed:
                dp = d
        else:
            in_regime = True
            dp = None
        try:
            env = rate_envelope(profile, d, config.constants)
        except UnsupportedProfileError:
            env = math.nan
        oracle_d = tail_sum(model, d)
        env_ratio = oracle_d / env if env and not math.isnan(env) else math.nan
        for n in config.n_list:
            if not isinstance(profile, Exponential):
                dp = select_dprime(model, d, n, config.constants)
                failed = dp is None
                if failed:
                    dp = d
            for t in config.t_list:
                dim = dimension_bound(model, dp, d, n, t, config.constants)
                wgt = relative_rank_bound(model, dp, d, n, t, config.constants)
                excess = davis_kahan_excess(model, d, n, t, config.constants)
                if isinstance(profile, Exponential) and in_regime and not failed:
                    k = d + 1 - dp
                    renv = eigenvalue_ratio_envelope(
                        profile.alpha, profile.beta, profile.K, d, k
                    )
                    eig_ratio = profile.value(dp) / profile.value(d + 1)
                    lo, hi = renv.lower, renv.upper
                else:
                    eig_ratio, lo, hi = None, None, None
                rows.append(
                    (
                        profile.label(),
                        d,
                        n,
                        t,
                        dp,
                        failed,
                        in_regime,
                        oracle_d,
                        dim.oracle,
                        env,
                        env_ratio,
                        dim.value,
                        wgt.value,
                        excess,
                        oracle_d + excess,
                        excess > oracle_d,
                        eig_ratio,
                        lo,
                        hi,
                    )
                )
    _write(out_dir / "sweep.csv", SWEEP_COLUMNS, rows, _meta(resolved))
    print(f"sweep: wrote {len(rows)} rows")
    return 0


def _dyadic_model(D: int = 20):
    return materialize(Explicit(values=tuple(2.0 ** -j for j in range(1, D + 1))), D)


def _builtin_checks() -> list:
    """Self-contained invariant/oracle checks; each returns (name, ok, detail)."""
    checks = []
    rng = np.random.default_rng(20240817)

    # Moment grids for every law.
    for law in (GAUSSIAN, RADEMACHER, UNIFORM_SYM):
        report = moment_check(law, [1, 2, 4, 8])
        worst = max(e.ratio for e in report.entries)
        checks.append(
            (f"moments[{law.tag}]", report.ok, f"max ratio {worst:.6f} vs L={law.L:.6f}")
        )

    # Tail-sum identity and brute-force agreement on random explicit models.
    ok, worst = True, 0.0
    for _ in range(25):
        m = int(rng.integers(3, 40))
        vals = np.sort(rng.uniform(0.05, 2.0, size=m))[::-1]
        model = materialize(Explicit(values=tuple(vals)), m)
        for d in range(0, m):
            lhs = tail_sum(model, d) - tail_sum(model, d + 1)
            err = abs(lhs - vals[d]) / vals[d]
            worst = max(worst, err)
            brute = sum(float(v) for v in vals[d:])
            err2 = abs(tail_sum(model, d) - brute) / brute
            worst = max(worst, err2)
    ok = worst <= 1e-12
    checks.append(("tail-sum-identity", ok, f"worst rel err {worst:.2e}"))

    # Weighted stats vs. explicit loops.
    worst = 0.0
    for _ in range(25):
        m = int(rng.integers(4, 30))
        vals = np.sort(rng.uniform(0.05, 2.0, size=m))[::-1]
        model = materialize(Explicit(values=tuple(vals)), m)
        d = int(rng.integers(2, m))
        dp = int(rng.integers(1, d + 1))
        lam_next = vals[d]
        if vals[dp - 1] - lam_next <= 1e-9:
            continue
        stats = weighted_operator_stats(model, dp, d)
        tr = sum(vals[j] / (vals[j] - lam_next) for j in range(dp))
        hs = sum((vals[j] / (vals[j] - lam_next)) ** 2 for j in range(dp))
        opn = vals[dp - 1] / (vals[dp - 1] - lam_next)
        for got, ref in ((stats.trace, tr), (stats.hs_norm_sq, hs), (stats.op_norm, opn)):
            worst = max(worst, abs(got - ref) / ref)
        rts = resolvent_tail_sum(model, dp, d)
        ref = sum(vals[k] / (vals[dp - 1] - vals[k]) for k in range(d, m))
        if ref > 0:
            worst = max(worst, abs(rts - ref) / ref)
    checks.append(("weighted-stats-bruteforce", worst <= 1e-12, f"worst rel err {worst:.2e}"))

    # Fit path equivalence: sample-side route vs. dense covariance eigenvalues.
    worst = 0.0
    model = _dyadic_model(24)
    for i, law in enumerate((GAUSSIAN, RADEMACHER, UNIFORM_SYM)):
        for n in (8, 24, 40):
            batch = draw_batch(model, law, n, seed=7_000 + i, replicate_index=n)
            f = fit(batch)
            w = np.linalg.eigvalsh(empirical_covariance(batch))[::-1]
            worst = max(worst, float(np.max(np.abs(f.lambda_hat - w[: f.rank]))))
    checks.append(("fit-path-equivalence", worst <= 1e-8, f"worst abs err {worst:.2e}"))

    # Minimality and trace preservation on random batches.
    worst_min, worst_emp, worst_tr = 0.0, 0.0, 0.0
    for i in range(12):
        n = int(rng.integers(5, 40))
        law = (GAUSSIAN, RADEMACHER, UNIFORM_SYM)[i % 3]
        batch = draw_batch(model, law, n, seed=9_100 + i)
        f = fit(batch)
        total = float(np.sum(batch.coords**2)) / n
        worst_tr = max(worst_tr, abs(math.fsum(f.lambda_hat) - total) / total)
        for d in (1, 2, min(5, f.rank)):
            worst_min = max(worst_min, tail_sum(model, d) - reconstruction_error(model, f, d))
            worst_emp = max(
                worst_emp,
                empirical_reconstruction_error(batch, f, d)
                - population_projection_error(batch, d),
            )
    ok = worst_min <= 1e-12 and worst_emp <= 1e-12 and worst_tr <= 1e-10
    checks.append(
        (
            "minimality",
            ok,
            f"pop slack {worst_min:.2e}, emp slack {worst_emp:.2e}, trace rel {worst_tr:.2e}",
        )
    )

    # Quadratic-form constants: U2/V = sqrt(n).
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(5, 30))
        vals = np.sort(rng.uniform(0.05, 2.0, size=m))[::-1]
        mdl = materialize(Explicit(values=tuple(vals)), m)
        d = int(rng.integers(2, m))
        dp = int(rng.integers(1, d + 1))
        n = int(rng.integers(2, 5000))
        try:
            terms = hanson_wright_terms(mdl, dp, d, n)
        except DegenerateGapError:
            continue
        worst = max(worst, abs(terms.U2 / terms.V - math.sqrt(n)) / math.sqrt(n))
    checks.append(("hw-ratio-identity", worst <= 1e-12, f"worst rel err {worst:.2e}"))

    # Monte Carlo mean of the cross term vs. its exact expectation.
    cfg = ExperimentConfig(
        model=_dyadic_model(20),
        law=GAUSSIAN,
        n_list=(50,),
        d_list=(2,),
        t_list=(1.0,),
        replicates=400,
        seed=515151,
        constants=BoundConstants(),
    )
    report = hw_expectation_check(cfg.model, run_experiment(cfg))
    checks.append(
        (
            "hw-expectation",
            report.passed,
            f"mean {report.sample_mean:.6g} vs exact "
            f"{report.expected:.6g} (z={report.z:.2f})",
        )
    )

    # Tail-mass envelope for near-exponential decay: the ratio of the true
    # tail to d^{1-beta} exp(-alpha d^beta) stays inside a constant bracket.
    prof = Exponential(K=1.0, alpha=1.0, beta=0.5)
    mdl = materialize(prof, suggest_truncation(prof, 64))
    ratios = [
        tail_sum(mdl, d) / (d ** 0.5 * math.exp(-math.sqrt(d)))
        for d in range(4, 65)
    ]
    ok = all(0.1 <= r <= 10.0 for r in ratios)
    checks.append(
        ("tail-envelope", ok, f"ratio range [{min(ratios):.4f}, {max(ratios):.4f}]")
    )

    # Eigenvalue-ratio envelope: zero violations over a (d, k) grid.
    violations = 0
    for d in (9, 19, 39, 79):
        for k in range(1, (d + 1) // 2 + 1):
            if not ratio_envelope_holds(prof, d, k):
                violations += 1
    checks.append(("eigenvalue-ratio-envelope", violations == 0, f"{violations} violations"))

    # Clopper-Pearson closed forms at the boundary.
    lo0, hi0 = clopper_pearson(0, 100, 0.95)
    loR, hiR = clopper_pearson(100, 100, 0.95)
    ref = 1.0 - 0.025 ** (1.0 / 100.0)
    ok = (
        lo0 == 0.0
        and hiR == 1.0
        and abs(hi0 - ref) <= 1e-10
        and abs(loR - (1.0 - ref)) <= 1e-10
    )
    checks.append(("clopper-pearson-boundary", ok, f"hi(0/100)={hi0:.6f} vs {ref:.6f}"))

    return checks


def cmd_check() -> int:
    failures = 0
    for name, ok, detail in _builtin_checks():
        status = "PASS" if ok else "FAIL"
        print(f"CHECK {name}: {status} ({detail})")
        if not ok:
            failures += 1
    return 0 if failures == 0 else 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, per contract
        raise ConfigError([message])


def _build_parser() -> _Parser:
    parser = _Parser(prog="pcabounds", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "bounds", "sweep", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to the JSON experiment config")
        p.add_argument("--out", default=".", help="output directory for CSV artifacts")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable), e.g. --set n=[500]",
        )
        p.add_argument(
            "--jobs",
            type=int,
            default=1,
            help="replicate-level parallelism; never changes results",
        )
    return parser


def parse_and_dispatch(argv) -> int:
    """Run one CLI invocation; returns the process exit status."""
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "check":
            return cmd_check()
        if args.config is None:
            raise ConfigError(["--config is required for this subcommand"])
        config, resolved = load_config(args.config, args.overrides, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(config, resolved, out_dir, max(1, args.jobs))
        if args.command == "bounds":
            return cmd_bounds(config, resolved, out_dir)
        return cmd_sweep(config, resolved, out_dir)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except (DegenerateGapError, NumericError, ParameterError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))
