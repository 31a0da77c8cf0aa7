"""Empirical eigendecomposition and reconstruction-error functionals.

Fits store the empirical eigenbasis as coordinates in the population basis
(where the true covariance is diagonal), so every downstream quantity is a
sum over squared coordinates and no D x D operator is materialized on the
hot path.  Eigenvectors are defined only up to sign; all consumers here are
projector-based, so no sign convention is imposed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, RangeError
from .sampler import SampleBatch, empirical_covariance
from .spectra import SpectralModel, _gap

# Solver eigenvalues below -CLAMP_TOL * max(1, λ̂_max) indicate a broken fit.
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class PcaFit:
    """Empirical eigenvalues (non-increasing) and eigenbasis coordinates.

    basis has min(n, D) orthonormal rows; row i holds the coordinates of the
    i-th empirical eigenvector in the population basis.
    """

    lambda_hat: np.ndarray
    basis: np.ndarray
    n: int
    D: int

    @property
    def rank(self) -> int:
        return self.lambda_hat.shape[0]

    def eigenvalue(self, k: int) -> float:
        """λ̂_k at 1-based index k; zero beyond min(n, D)."""
        if k < 1:
            raise RangeError(f"eigenvalue index must be >= 1, got {k}")
        return float(self.lambda_hat[k - 1]) if k <= self.rank else 0.0

    def has_tie(self, d: int, rel_tol: float = 1e-9) -> bool:
        """True when λ̂_d and λ̂_{d+1} are equal at resolution rel_tol.

        Under a tie the rank-d projector is solver-dependent; spectral sums
        are still well defined.
        """
        lam_d = self.eigenvalue(d)
        return lam_d - self.eigenvalue(d + 1) <= rel_tol * max(lam_d, 1e-300)


def _clamp_eigenvalues(lam: np.ndarray, context: dict) -> np.ndarray:
    floor = -CLAMP_TOL * max(1.0, float(lam.max(initial=0.0)))
    if float(lam.min(initial=0.0)) < floor:
        raise NumericError(
            "eigensolver returned a significantly negative eigenvalue",
            diagnostics={**context, "min_eigenvalue": float(lam.min())},
        )
    return np.maximum(lam, 0.0)


def fit(batch: SampleBatch) -> PcaFit:
    """Eigenpairs of the sample covariance restricted to its column space.

    For n >= D this is a dense eigendecomposition of the D x D sample
    covariance.  For n < D the same eigenpairs come from the n x n Gram
    matrix X X^T / n; we compute that route through the SVD of the coordinate
    matrix, which maps back to covariance eigenvectors without the
    1/sqrt(eigenvalue) amplification that breaks orthonormality for strongly
    decaying spectra.
    """
    X = batch.coords
    n, D = X.shape
    context = {"n": n, "D": D, "model_id": batch.model_id}
    try:
        if n >= D:
            S = empirical_covariance(batch)
            w, V = np.linalg.eigh(S)
            lam = w[::-1]
            basis = V.T[::-1]
        else:
            _, s, Vh = np.linalg.svd(X, full_matrices=False)
            lam = s**2 / n
            basis = Vh
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}", diagnostics=context) from exc
    lam = _clamp_eigenvalues(np.ascontiguousarray(lam), context)
    basis = np.ascontiguousarray(basis)
    lam.setflags(write=False)
    basis.setflags(write=False)
    return PcaFit(lambda_hat=lam, basis=basis, n=n, D=D)


def _check_d(fit_: PcaFit, d: int) -> None:
    if not (1 <= d <= fit_.rank):
        raise RangeError(f"need 1 <= d <= rank={fit_.rank}, got d={d}")


def reconstruction_error(model: SpectralModel, fit_: PcaFit, d: int) -> float:
    """Population reconstruction error tr(Σ (I - P̂_{<=d})), clamped at 0."""
    _check_d(fit_, d)
    if model.D != fit_.D:
        raise RangeError(f"model D={model.D} does not match fit D={fit_.D}")
    leftover = 1.0 - np.sum(fit_.basis[:d] ** 2, axis=0)
    return max(float(model.eigenvalues @ leftover), 0.0)


def empirical_reconstruction_error(batch: SampleBatch, fit_: PcaFit, d: int) -> float:
    """Empirical reconstruction error n^{-1} Σ_i ||X_i - P̂_{<=d} X_i||²."""
    _check_d(fit_, d)
    proj = batch.coords @ fit_.basis[:d].T
    val = (float(np.sum(batch.coords**2)) - float(np.sum(proj**2))) / batch.n
    return max(val, 0.0)


def population_projection_error(batch: SampleBatch, d: int) -> float:
    """Empirical error of the *population* projector: n^{-1} Σ_i Σ_{j>d} X_ij²."""
    if not (0 <= d <= batch.D):
        raise RangeError(f"need 0 <= d <= D={batch.D}, got d={d}")
    return float(np.sum(batch.coords[:, d:] ** 2)) / batch.n


@dataclass(frozen=True)
class PerturbationStats:
    """Resolvent-weighted statistics of Σ̂ - Σ for one batch and (d', d).

    cross_hs_sq      squared HS norm of the weighted top-block x tail-block
                     part of Σ̂ - Σ
    inner_op         operator norm of the weighted top-block x top-block part
    lambda_hat_dplus1  empirical eigenvalue λ̂_{d+1} of the same batch
    """

    cross_hs_sq: float
    inner_op: float
    lambda_hat_dplus1: float


def perturbation_stats(
    model: SpectralModel,
    batch: SampleBatch,
    d_prime: int,
    d: int,
    fit_: PcaFit | None = None,
) -> PerturbationStats:
    """Compute the weighted perturbation statistics from coordinate blocks.

    Requires d < D (λ_{d+1} must exist inside the truncation) and a
    non-degenerate gap λ_{d'} > λ_{d+1}.
    """
    if not (1 <= d_prime <= d < model.D):
        raise RangeError(
            f"need 1 <= d' <= d < D={model.D}, got d'={d_prime}, d={d}"
        )
    if model.D != batch.D:
        raise RangeError(f"model D={model.D} does not match batch D={batch.D}")
    lam_next, _ = _gap(model, d_prime, d)
    weights = model.eigenvalues[:d_prime] - lam_next
    A = batch.coords[:, :d_prime]
    B = batch.coords[:, d_prime:]
    # Population covariance is diagonal, so the cross block of Σ̂ - Σ is the
    # cross block of Σ̂ itself.
    cross = A.T @ B / batch.n
    cross_hs_sq = float(np.sum(cross**2 / weights[:, None]))
    inner = A.T @ A / batch.n - np.diag(model.eigenvalues[:d_prime])
    scale = 1.0 / np.sqrt(weights)
    M = scale[:, None] * inner * scale[None, :]
    M = (M + M.T) / 2.0
    inner_op = float(np.max(np.abs(np.linalg.eigvalsh(M))))
    if fit_ is None:
        fit_ = fit(batch)
    return PerturbationStats(
        cross_hs_sq=cross_hs_sq,
        inner_op=inner_op,
        lambda_hat_dplus1=fit_.eigenvalue(d + 1),
    )


def event_indicator(
    stats: PerturbationStats, model: SpectralModel, d_prime: int, d: int
) -> bool:
    """The joint event that powers the perturbation bound: weighted inner
    perturbation at most 1/4 and λ̂_{d+1} within half a gap of λ_{d+1}."""
    lam_next, gap = _gap(model, d_prime, d)
    return (
        stats.inner_op <= 0.25
        and stats.lambda_hat_dplus1 - lam_next <= gap / 2.0
    )
