"""Controllability and fidelity evaluation.

Sweeps a grid of attribute targets through a generator and correlates
targets with measured attributes of the output; separately fits
Gaussians to 4-attribute feature vectors of reference and generated
sets and reports the Fréchet distance between them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .attributes import AttributeStats, measure

log = logging.getLogger(__name__)


def pcc(x, y) -> float:
    """Pearson correlation coefficient of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pcc needs two 1-D vectors of equal length")
    n = len(x)
    if n < 2:
        raise ValueError("pcc needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("pcc undefined: an argument has zero variance")
    return float(np.dot(dx, dy)) / (math.sqrt(sxx) * math.sqrt(syy))


def sweep_targets(stats: AttributeStats, n: int) -> np.ndarray:
    """n equally spaced raw targets from 0 to the attribute's 99th percentile."""
    if n < 2:
        raise ValueError("need at least 2 sweep targets")
    return np.linspace(0.0, stats.p99, n)


@dataclass(slots=True)
class SweepResult:
    attribute: str
    targets: np.ndarray  # (n,)
    measured: np.ndarray  # (n,) per-target means
    pcc: float
    rows: list[tuple[float, float, int]] = field(default_factory=list)
    failures: int = 0

    def as_rows(self) -> list[tuple[float, float, int]]:
        return list(self.rows)


def attribute_sweep(
    generator,
    attribute: str,
    stats: AttributeStats,
    n: int = 50,
    per_target: int = 20,
    seed: int = 0,
) -> SweepResult:
    """Generate per_target sequences at each of n targets and correlate.

    `generator(target, count, seed)` must return a list of token
    arrays. Generation failures are logged, counted, and excluded; the
    correlation runs over all surviving (target, measured) pairs.
    """
    targets = sweep_targets(stats, n)
    rows: list[tuple[float, float, int]] = []
    failures = 0
    for idx, target in enumerate(targets):
        target_seed = seed + 1000003 * idx
        try:
            sequences = generator(float(target), per_target, target_seed)
        except Exception:
            log.exception("generation failed at target %g", target)
            failures += per_target
            continue
        for s_idx, tokens in enumerate(sequences):
            value = getattr(measure(np.asarray(tokens)), attribute)
            rows.append((float(target), float(value), s_idx))
    if not rows:
        raise ValueError("all generations failed; nothing to correlate")
    flat_t = np.array([r[0] for r in rows])
    flat_m = np.array([r[1] for r in rows])
    correlation = pcc(flat_t, flat_m)
    means = np.array(
        [flat_m[flat_t == t].mean() if np.any(flat_t == t) else np.nan for t in targets]
    )
    return SweepResult(
        attribute=attribute,
        targets=targets,
        measured=means,
        pcc=correlation,
        rows=rows,
        failures=failures,
    )


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray  # (k,)
    cov: np.ndarray  # (k, k), symmetric

    @property
    def dim(self) -> int:
        return len(self.mean)


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Sample mean and (n-1)-denominator covariance, symmetrized."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.shape[0] < 2:
        raise ValueError("need at least 2 feature rows")
    mean = feats.mean(axis=0)
    centered = feats - mean
    cov = centered.T @ centered / (feats.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, cov=cov)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Fréchet distance between two Gaussian fits of equal dimension."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    sqrt_a = _psd_sqrt(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    inner = (inner + inner.T) / 2.0
    cross = _psd_sqrt(inner)
    delta = a.mean - b.mean
    dist = float(delta @ delta + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    return max(dist, 0.0)


@dataclass(slots=True)
class FidelityResult:
    conditional: float
    unconditional: float
    count: int


def measure_features(sequences) -> np.ndarray:
    """Stack 4-attribute feature vectors for a list of token arrays."""
    return np.stack([measure(np.asarray(t)).as_array() for t in sequences])


def eval_fidelity(
    reference_features: np.ndarray,
    conditional_targets: np.ndarray,
    conditional_generator,
    unconditional_generator,
    seed: int = 0,
) -> FidelityResult:
    """Fréchet distance of conditioned and unconditional generations.

    `conditional_generator(targets, seed)` receives one raw attribute
    target per reference record; `unconditional_generator(count, seed)`
    draws the same number of unconditioned sequences. Both must return
    lists of token arrays. Features on all sides are the 4-attribute
    vectors.
    """
    refs = np.asarray(reference_features, dtype=np.float64)
    if refs.ndim != 2 or refs.shape[0] < 2:
        raise ValueError("need a (n >= 2, k) reference feature matrix")
    if len(conditional_targets) != refs.shape[0]:
        raise ValueError("one conditioning target per reference record required")
    ref_stats = gaussian_stats(refs)
    cond_tokens = conditional_generator(np.asarray(conditional_targets, dtype=np.float64), seed)
    cond_stats = gaussian_stats(measure_features(cond_tokens))
    uncond_tokens = unconditional_generator(refs.shape[0], seed + 1)
    uncond_stats = gaussian_stats(measure_features(uncond_tokens))
    return FidelityResult(
        conditional=frechet_distance(ref_stats, cond_stats),
        unconditional=frechet_distance(ref_stats, uncond_stats),
        count=refs.shape[0],
    )
