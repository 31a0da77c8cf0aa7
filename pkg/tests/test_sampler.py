import math

import numpy as np
import pytest

from pcabounds import (
    GAUSSIAN,
    RADEMACHER,
    UNIFORM_SYM,
    ParameterError,
    SampleBatch,
    draw_batch,
    empirical_covariance,
    law_from_tag,
    load_batch,
    materialize,
    moment_check,
    save_batch,
)
from pcabounds.spectra import Explicit

from _oracles import dyadic_model


class TestCoefficientLaws:
    def test_tags_round_trip(self):
        for law in (GAUSSIAN, RADEMACHER, UNIFORM_SYM):
            assert law_from_tag(law.tag) is law
        with pytest.raises(ParameterError):
            law_from_tag("cauchy")

    def test_moment_grid_all_laws(self):
        for law in (GAUSSIAN, RADEMACHER, UNIFORM_SYM):
            report = moment_check(law, [1, 2, 4, 8])
            assert report.ok, report

    def test_rademacher_q4(self):
        assert RADEMACHER.subgaussian_ratio(4) == 0.5
        assert RADEMACHER.abs_moment(4) == 1.0

    def test_gaussian_q2(self):
        assert math.isclose(GAUSSIAN.abs_moment(2), 1.0, rel_tol=1e-14)
        assert math.isclose(GAUSSIAN.subgaussian_ratio(2), 1 / math.sqrt(2), rel_tol=1e-14)

    def test_uniform_peak_at_q1(self):
        # E|η| = sqrt(3)/2 for uniform on [-sqrt(3), sqrt(3)]; this is where
        # the ratio peaks, so L = sqrt(3)/2 is tight.
        assert math.isclose(UNIFORM_SYM.abs_moment(1), math.sqrt(3) / 2, rel_tol=1e-14)
        assert math.isclose(UNIFORM_SYM.subgaussian_ratio(1), UNIFORM_SYM.L, rel_tol=1e-14)

    def test_gaussian_q8_vs_monte_carlo(self):
        # E|η|^8 = 7!! = 105; the analytic value must sit within 5 standard
        # errors of a large Monte Carlo moment estimate.
        assert math.isclose(GAUSSIAN.abs_moment(8), 105.0, rel_tol=1e-12)
        rng = np.random.default_rng(8675309)
        draws = rng.standard_normal(1_000_000) ** 8
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - 105.0) <= 5 * se
        assert math.isclose(
            GAUSSIAN.subgaussian_ratio(8), 105.0 ** 0.125 / math.sqrt(8), rel_tol=1e-14
        )

    def test_moment_check_flags_violation(self):
        # A deliberately understated L must be reported, not raised.
        from pcabounds.sampler import CoefficientLaw

        weak = CoefficientLaw("gaussian", L=0.5)
        report = moment_check(weak, [1, 2, 4, 8])
        assert not report.ok
        assert any(not e.ok for e in report.entries)

    def test_empty_grid_rejected(self):
        with pytest.raises(ParameterError):
            moment_check(GAUSSIAN, [])


class TestDrawBatch:
    def test_determinism_bit_for_bit(self):
        model = dyadic_model(12)
        a = draw_batch(model, GAUSSIAN, 17, seed=5, replicate_index=3)
        b = draw_batch(model, GAUSSIAN, 17, seed=5, replicate_index=3)
        assert np.array_equal(a.coords, b.coords)
        c = draw_batch(model, GAUSSIAN, 17, seed=5, replicate_index=4)
        assert not np.array_equal(a.coords, c.coords)

    def test_draws_are_pure_functions_of_the_key(self):
        # Drawing replicates in any order gives the same per-index batches.
        model = dyadic_model(6)
        forward = [draw_batch(model, UNIFORM_SYM, 9, 77, r).coords for r in range(5)]
        backward = [draw_batch(model, UNIFORM_SYM, 9, 77, r).coords for r in (4, 3, 2, 1, 0)]
        for r in range(5):
            assert np.array_equal(forward[r], backward[4 - r])

    def test_rademacher_magnitudes_exact(self):
        model = dyadic_model(10)
        batch = draw_batch(model, RADEMACHER, 25, seed=11)
        expected = np.sqrt(model.eigenvalues)
        assert np.array_equal(np.abs(batch.coords), np.tile(expected, (25, 1)))

    def test_gaussian_column_variance(self):
        model = dyadic_model(20)
        n = 10_000
        batch = draw_batch(model, GAUSSIAN, n, seed=98765)
        col_var = np.mean(batch.coords**2, axis=0)
        # Var of the mean-of-squares estimator is 2 λ_j² / n.
        tol = 5 * model.eigenvalues * math.sqrt(2.0 / n)
        assert np.all(np.abs(col_var - model.eigenvalues) <= tol)

    def test_column_independence(self):
        model = dyadic_model(6)
        n = 2000
        batch = draw_batch(model, GAUSSIAN, n, seed=13)
        corr = np.corrcoef(batch.coords, rowvar=False)
        off = corr[~np.eye(6, dtype=bool)]
        assert np.all(np.abs(off) <= 5 / math.sqrt(n))

    def test_validation(self):
        model = dyadic_model(4)
        with pytest.raises(ParameterError):
            draw_batch(model, GAUSSIAN, 0, seed=1)
        with pytest.raises(ParameterError):
            draw_batch(model, GAUSSIAN, 5, seed=-1)
        with pytest.raises(ParameterError):
            draw_batch(model, GAUSSIAN, 5, seed=2**64)
        with pytest.raises(ParameterError):
            draw_batch(model, GAUSSIAN, 5, seed=1, replicate_index=-1)


class TestEmpiricalCovariance:
    def test_single_sample_outer_product(self):
        coords = np.zeros((1, 4))
        coords[0, 0] = 2.0
        batch = SampleBatch(coords, "manual", "gaussian", 0, 0)
        cov = empirical_covariance(batch)
        expected = np.zeros((4, 4))
        expected[0, 0] = 4.0
        assert np.array_equal(cov, expected)

    def test_zero_rows(self):
        batch = SampleBatch(np.zeros((3, 5)), "manual", "gaussian", 0, 0)
        assert np.array_equal(empirical_covariance(batch), np.zeros((5, 5)))

    def test_entrywise_clt_bound(self):
        model = dyadic_model(5)
        n = 100_000
        batch = draw_batch(model, GAUSSIAN, n, seed=31415)
        cov = empirical_covariance(batch)
        lam = model.eigenvalues
        for j in range(5):
            for k in range(5):
                sd = math.sqrt(lam[j] * lam[k] * (2.0 if j == k else 1.0) / n)
                assert abs(cov[j, k] - (lam[j] if j == k else 0.0)) <= 5 * sd

    def test_mean_covariance_rate(self):
        # Averaging Σ̂ over R replicates: Frobenius error decays like
        # 1/sqrt(nR).  A flat-ish spectrum spreads the error over all
        # entries, and averaging ten independent runs per point tames the
        # norm fluctuations enough to read the log-log slope.
        model = materialize(Explicit(values=tuple(1.0 - 0.02 * j for j in range(20))), 20)
        n = 50
        lam = np.diag(model.eigenvalues)
        sizes = [8, 80, 800]
        dists = []
        for R in sizes:
            acc_d = 0.0
            for rep in range(10):
                acc = np.zeros((20, 20))
                for r in range(R):
                    acc += empirical_covariance(
                        draw_batch(model, GAUSSIAN, n, seed=555 + rep, replicate_index=r)
                    )
                acc_d += np.linalg.norm(acc / R - lam)
            dists.append(acc_d / 10)
        slope = np.polyfit(np.log([n * R for R in sizes]), np.log(dists), 1)[0]
        assert -0.6 <= slope <= -0.4


class TestBatchCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        model = dyadic_model(7)
        batch = draw_batch(model, UNIFORM_SYM, 9, seed=2024, replicate_index=5)
        path = tmp_path / "batch.csv"
        save_batch(batch, path)
        restored = load_batch(path)
        assert np.array_equal(restored.coords, batch.coords)
        assert restored.model_id == batch.model_id
        assert restored.law_tag == batch.law_tag
        assert restored.seed == batch.seed
        assert restored.replicate_index == batch.replicate_index
