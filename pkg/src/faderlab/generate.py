"""Generation plumbing: trained models to pitch-token sequences.

Every controller is wrapped in the same shape of object: call it with
(target, count, seed) for sweep-style batches at one raw attribute
target, or use .batch(targets, seed) with one raw target per sequence
for fidelity evaluation. Raw targets are normalized by the training
99th percentile (clamped at 1) before conditioning, mirroring the
fader-to-model mapping of the UI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .attributes import AttributeStats
from .baselines import (
    ArConfig,
    CondLatentVae,
    QuantileMap,
    arvae_latent_for_target,
    cond_vae_sample,
)
from .lcdiff import Denoiser, NoiseSchedule, SamplerConfig, sample_latents
from .seqvae import SequenceVae, greedy_decode


def normalize_targets(raw, stats: AttributeStats) -> np.ndarray:
    """Map raw attribute values to [0, 1] conditioning values."""
    if stats.p99 <= 0:
        raise ValueError("attribute p99 must be positive for conditioning")
    return np.minimum(np.asarray(raw, dtype=np.float64) / stats.p99, 1.0)


@dataclass(frozen=True)
class LatentScaler:
    """Affine map between raw VAE latents and unit-scale diffusion space.

    The sequence VAE is trained with a nearly-free KL term, so its
    posterior means sit far from the standard normal that DDIM sampling
    starts from. The denoiser therefore trains on per-dimension
    standardized latents, and generated latents are mapped back to
    decoder scale afterwards.
    """

    loc: torch.Tensor
    scale: torch.Tensor

    @classmethod
    def fit(cls, latents: torch.Tensor) -> "LatentScaler":
        if latents.ndim != 2 or latents.shape[0] < 2:
            raise ValueError("need a (n >= 2, dim) latent matrix to fit a scaler")
        # floor keeps near-constant dimensions from being amplified
        scale = latents.std(dim=0).clamp_min(1e-3)
        return cls(loc=latents.mean(dim=0), scale=scale)

    def normalize(self, z: torch.Tensor) -> torch.Tensor:
        return (z - self.loc) / self.scale

    def restore(self, z: torch.Tensor) -> torch.Tensor:
        return z * self.scale + self.loc


class TokenDecoder:
    """Greedy decoding of latents through a frozen sequence VAE."""

    def __init__(self, vae: SequenceVae, batch: int = 256):
        self.vae = vae
        self.batch = batch

    def decode(self, latents: torch.Tensor) -> list[np.ndarray]:
        tokens = greedy_decode(self.vae, latents.float(), batch=self.batch)
        return [row.numpy().astype(np.int16) for row in tokens]


class DiffusionGenerator:
    """Attribute-guided DDIM sampling decoded by the frozen VAE."""

    def __init__(
        self,
        vae: SequenceVae,
        denoiser: Denoiser,
        schedule: NoiseSchedule,
        stats: AttributeStats,
        sampler: SamplerConfig | None = None,
        scaler: LatentScaler | None = None,
    ):
        self.decoder = TokenDecoder(vae)
        self.denoiser = denoiser
        self.schedule = schedule
        self.stats = stats
        self.sampler = sampler or SamplerConfig()
        self.scaler = scaler

    def latents(self, targets_raw, seed: int) -> torch.Tensor:
        targets = np.atleast_1d(np.asarray(targets_raw, dtype=np.float64))
        cond = torch.from_numpy(normalize_targets(targets, self.stats)).float()
        sampled = sample_latents(
            self.denoiser, self.schedule, len(targets), cond, self.sampler, seed=seed
        )
        if self.scaler is not None:
            sampled = self.scaler.restore(sampled)
        return sampled

    def batch(self, targets_raw, seed: int) -> list[np.ndarray]:
        return self.decoder.decode(self.latents(targets_raw, seed))

    def __call__(self, target: float, count: int, seed: int) -> list[np.ndarray]:
        return self.batch(np.full(count, target), seed)


class UnconditionalGenerator:
    """Standard-normal latents through the frozen decoder (no guidance)."""

    def __init__(self, vae: SequenceVae):
        self.vae = vae
        self.decoder = TokenDecoder(vae)

    def batch(self, count: int, seed: int) -> list[np.ndarray]:
        gen = torch.Generator().manual_seed(seed)
        z = torch.randn(count, self.vae.config.latent_dim, generator=gen)
        return self.decoder.decode(z)

    def __call__(self, target: float, count: int, seed: int) -> list[np.ndarray]:
        return self.batch(count, seed)


class ArvaeGenerator:
    """Latent draws with the regularized dimension pinned to the target."""

    def __init__(
        self,
        model: SequenceVae,
        ar: ArConfig,
        stats: AttributeStats,
        quantile_map: QuantileMap | None = None,
    ):
        self.model = model
        self.ar = ar
        self.stats = stats
        self.quantile_map = quantile_map
        self.decoder = TokenDecoder(model)

    def batch(self, targets_raw, seed: int) -> list[np.ndarray]:
        targets = np.atleast_1d(np.asarray(targets_raw, dtype=np.float64))
        gen = torch.Generator().manual_seed(seed)
        base = torch.randn(len(targets), self.model.config.latent_dim, generator=gen)
        z = arvae_latent_for_target(targets, self.ar, self.stats, self.quantile_map, base)
        return self.decoder.decode(z)

    def __call__(self, target: float, count: int, seed: int) -> list[np.ndarray]:
        return self.batch(np.full(count, target), seed)


class CondVaeGenerator:
    """Conditional latent-VAE draws decoded by the frozen VAE."""

    def __init__(self, vae: SequenceVae, cond_model: CondLatentVae, stats: AttributeStats):
        self.cond_model = cond_model
        self.stats = stats
        self.decoder = TokenDecoder(vae)

    def batch(self, targets_raw, seed: int) -> list[np.ndarray]:
        targets = np.atleast_1d(np.asarray(targets_raw, dtype=np.float64))
        cond = torch.from_numpy(normalize_targets(targets, self.stats)).float()
        latents = cond_vae_sample(self.cond_model, cond, seed=seed)
        return self.decoder.decode(latents)

    def __call__(self, target: float, count: int, seed: int) -> list[np.ndarray]:
        return self.batch(np.full(count, target), seed)
