"""Reproducible i.i.d. sampling of X_i = Σ_j sqrt(λ_j) η_ij u_j in coordinates.

Coefficient laws are mean-zero, unit-variance, and sub-Gaussian; each carries
the smallest constant L we can certify for the moment condition
q^{-1/2} (E|η|^q)^{1/q} <= L.  Randomness is keyed on (seed, replicate_index)
through a SeedSequence so that replicates are order- and parallelism-
independent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .spectra import SpectralModel

_SQRT3 = math.sqrt(3.0)

LAW_TAGS = ("gaussian", "rademacher", "uniform_sym")


@dataclass(frozen=True)
class CoefficientLaw:
    """One of the supported coefficient distributions, with its constant L."""

    tag: str
    L: float

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.tag == "gaussian":
            return rng.standard_normal(shape)
        if self.tag == "rademacher":
            return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
        if self.tag == "uniform_sym":
            return rng.uniform(-_SQRT3, _SQRT3, size=shape)
        raise ParameterError(f"unknown law tag {self.tag!r}")

    def abs_moment(self, q: float) -> float:
        """E|η|^q in closed form."""
        if q <= 0:
            raise ParameterError(f"moment order must be positive, got q={q}")
        if self.tag == "gaussian":
            # E|N(0,1)|^q = 2^{q/2} Γ((q+1)/2) / sqrt(pi)
            return math.exp(
                0.5 * q * math.log(2.0)
                + math.lgamma((q + 1.0) / 2.0)
                - 0.5 * math.log(math.pi)
            )
        if self.tag == "rademacher":
            return 1.0
        if self.tag == "uniform_sym":
            # uniform on [-sqrt(3), sqrt(3)]: E|η|^q = 3^{q/2} / (q + 1)
            return math.exp(0.5 * q * math.log(3.0) - math.log(q + 1.0))
        raise ParameterError(f"unknown law tag {self.tag!r}")

    def subgaussian_ratio(self, q: float) -> float:
        """q^{-1/2} (E|η|^q)^{1/q}, the quantity bounded by L."""
        return self.abs_moment(q) ** (1.0 / q) / math.sqrt(q)


GAUSSIAN = CoefficientLaw("gaussian", L=1.0)
RADEMACHER = CoefficientLaw("rademacher", L=1.0)
# Bounded on [-sqrt(3), sqrt(3)]; the ratio peaks at q=1 with value sqrt(3)/2.
UNIFORM_SYM = CoefficientLaw("uniform_sym", L=_SQRT3 / 2.0)

_LAWS = {law.tag: law for law in (GAUSSIAN, RADEMACHER, UNIFORM_SYM)}


def law_from_tag(tag: str) -> CoefficientLaw:
    try:
        return _LAWS[tag]
    except KeyError:
        raise ParameterError(
            f"unknown coefficient law {tag!r}; known: {', '.join(LAW_TAGS)}"
        ) from None


@dataclass(frozen=True)
class MomentCheckEntry:
    q: float
    ratio: float
    ok: bool


@dataclass(frozen=True)
class MomentCheckReport:
    """Outcome of vetting a law's sub-Gaussian constant on a finite q grid."""

    law_tag: str
    L: float
    entries: tuple

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)


def moment_check(law: CoefficientLaw, q_list, tolerance: float = 1e-12) -> MomentCheckReport:
    """Verify q^{-1/2} (E|η|^q)^{1/q} <= L + tolerance for each q in q_list."""
    if not q_list:
        raise ParameterError("q_list must be non-empty")
    entries = []
    for q in q_list:
        ratio = law.subgaussian_ratio(float(q))
        entries.append(MomentCheckEntry(q=float(q), ratio=ratio, ok=ratio <= law.L + tolerance))
    return MomentCheckReport(law_tag=law.tag, L=law.L, entries=tuple(entries))


@dataclass(frozen=True)
class SampleBatch:
    """n x D sample coordinates ⟨X_i, u_j⟩ = sqrt(λ_j) η_ij, plus provenance."""

    coords: np.ndarray
    model_id: str
    law_tag: str
    seed: int
    replicate_index: int

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def D(self) -> int:
        return self.coords.shape[1]


def _stream(seed: int, replicate_index: int) -> np.random.Generator:
    # One independent PCG64 stream per (seed, replicate) key.
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(replicate_index,))
    )


def draw_batch(
    model: SpectralModel,
    law: CoefficientLaw,
    n: int,
    seed: int,
    replicate_index: int = 0,
) -> SampleBatch:
    """Draw n i.i.d. samples; a pure function of all five arguments."""
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got n={n}")
    if not (0 <= seed < 2**64):
        raise ParameterError(f"seed must fit an unsigned 64-bit integer, got {seed}")
    if replicate_index < 0:
        raise ParameterError(f"replicate_index must be >= 0, got {replicate_index}")
    rng = _stream(seed, replicate_index)
    eta = law.sample(rng, (n, model.D))
    coords = eta * np.sqrt(model.eigenvalues)[None, :]
    coords.setflags(write=False)
    return SampleBatch(
        coords=coords,
        model_id=model.model_id,
        law_tag=law.tag,
        seed=int(seed),
        replicate_index=int(replicate_index),
    )


def empirical_covariance(batch: SampleBatch) -> np.ndarray:
    """Sample covariance n^{-1} Σ_i X_i X_i^T in coordinates (symmetrized)."""
    S = batch.coords.T @ batch.coords / batch.n
    return (S + S.T) / 2.0


def save_batch(batch: SampleBatch, path) -> None:
    """Dump a batch to CSV: metadata comment lines, then one row per sample."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# model_id={batch.model_id}\n")
        fh.write(f"# law={batch.law_tag}\n")
        fh.write(f"# seed={batch.seed}\n")
        fh.write(f"# replicate_index={batch.replicate_index}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(1, batch.D + 1)])
        for row in batch.coords:
            writer.writerow([format(v, ".17g") for v in row])


def load_batch(path) -> SampleBatch:
    """Restore a batch written by save_batch (bit-exact round trip)."""
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        header_seen = False
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                header_seen = True  # column-name row
                continue
            rows.append([float(v) for v in line.strip().split(",")])
    coords = np.asarray(rows, dtype=float)
    coords.setflags(write=False)
    return SampleBatch(
        coords=coords,
        model_id=meta.get("model_id", ""),
        law_tag=meta.get("law", ""),
        seed=int(meta.get("seed", 0)),
        replicate_index=int(meta.get("replicate_index", 0)),
    )
