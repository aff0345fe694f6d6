"""High-level training and evaluation workflows over a dataset.

These helpers wire the dataset, the frozen VAE, and the constraint
models together: encoding latents, normalizing conditioning values,
fitting each controller for one attribute, and building the generator
objects the evaluation module consumes.
"""

from __future__ import annotations

import logging

import numpy as np
import torch

from . import baselines, lcdiff
from .attributes import AttributeStats
from .baselines import ArConfig, CondVaeConfig, CondVaeTrainConfig, QuantileMap
from .checkpoint import LoadedModel
from .dataset import Dataset
from .generate import (
    ArvaeGenerator,
    CondVaeGenerator,
    DiffusionGenerator,
    LatentScaler,
    UnconditionalGenerator,
    normalize_targets,
)
from .lcdiff import (
    Denoiser,
    DenoiserConfig,
    DiffusionTrainConfig,
    NoiseSchedule,
    SamplerConfig,
    build_schedule,
)
from .seqvae import SequenceVae, TrainSchedule, VaeConfig, encode_means, train_vae

log = logging.getLogger(__name__)


def encode_split_latents(
    vae: SequenceVae, dataset: Dataset, split: str = "train", batch: int = 512
) -> torch.Tensor:
    """Posterior means of the frozen encoder over one split."""
    return encode_means(vae, dataset.split_tokens(split), batch=batch)


def conditioning_column(dataset: Dataset, attribute: str, split: str = "train") -> np.ndarray:
    """Normalized conditioning values of one attribute over a split."""
    raw = dataset.attribute_column(attribute, split)
    return normalize_targets(raw, dataset.stats[attribute])


def fit_vae(
    dataset: Dataset,
    config: VaeConfig | None = None,
    sched: TrainSchedule | None = None,
    seed: int = 0,
    checkpoint_cb=None,
):
    config = config or VaeConfig()
    sched = sched or TrainSchedule()
    return train_vae(
        dataset.split_tokens("train"), config, sched, seed, checkpoint_cb=checkpoint_cb
    )


def fit_diffusion(
    dataset: Dataset,
    vae: SequenceVae,
    attribute: str,
    config: DenoiserConfig | None = None,
    schedule: NoiseSchedule | None = None,
    train_cfg: DiffusionTrainConfig | None = None,
    seed: int = 0,
    latents: torch.Tensor | None = None,
) -> tuple[lcdiff.DiffusionTrainResult, NoiseSchedule, LatentScaler]:
    """Train an attribute-conditional denoiser on the frozen latents.

    The denoiser operates in standardized latent space (the returned
    scaler maps back to decoder scale and must ride along with the
    model). Pass precomputed `latents` (train-split posterior means) to
    avoid re-encoding when fitting several attributes.
    """
    config = config or DenoiserConfig(latent_dim=vae.config.latent_dim)
    if config.latent_dim != vae.config.latent_dim:
        raise ValueError("denoiser latent_dim must match the VAE")
    schedule = schedule or build_schedule()
    train_cfg = train_cfg or DiffusionTrainConfig()
    if latents is None:
        latents = encode_split_latents(vae, dataset)
    scaler = LatentScaler.fit(latents)
    cond = torch.from_numpy(conditioning_column(dataset, attribute)).float()
    result = lcdiff.train_diffusion(
        scaler.normalize(latents), cond, config, schedule, train_cfg, seed
    )
    return result, schedule, scaler


def fit_lcvae(
    dataset: Dataset,
    vae: SequenceVae,
    attribute: str,
    config: CondVaeConfig | None = None,
    train_cfg: CondVaeTrainConfig | None = None,
    seed: int = 0,
    latents: torch.Tensor | None = None,
) -> baselines.CondVaeTrainResult:
    config = config or CondVaeConfig(latent_dim=vae.config.latent_dim)
    if config.latent_dim != vae.config.latent_dim:
        raise ValueError("conditional-VAE latent_dim must match the VAE")
    train_cfg = train_cfg or CondVaeTrainConfig()
    if latents is None:
        latents = encode_split_latents(vae, dataset)
    cond = torch.from_numpy(conditioning_column(dataset, attribute)).float()
    return baselines.train_cond_vae(latents, cond, config, train_cfg, seed)


def fit_arvae(
    dataset: Dataset,
    attribute: str,
    config: VaeConfig | None = None,
    sched: TrainSchedule | None = None,
    ar: ArConfig | None = None,
    seed: int = 0,
) -> tuple[baselines.TrainResult, QuantileMap | None]:
    """Retrain the sequence VAE with the attribute term; fit the
    generation-time quantile map for the pairwise variant."""
    config = config or VaeConfig()
    sched = sched or TrainSchedule()
    ar = ar or ArConfig()
    stats = dataset.stats[attribute]
    raw = dataset.attribute_column(attribute, "train")
    result = baselines.train_arvae(
        dataset.split_tokens("train"), raw, stats, config, sched, ar, seed
    )
    qmap = None
    if ar.variant == "pl":
        z = encode_means(result.model, dataset.split_tokens("train"))
        qmap = QuantileMap.fit(raw, z[:, ar.latent_index].numpy())
    return result, qmap


def generator_for(loaded: LoadedModel, vae: SequenceVae, sampler: SamplerConfig | None = None):
    """Build the sweep/fidelity generator matching a loaded checkpoint."""
    if loaded.kind == "diffusion":
        return DiffusionGenerator(
            vae, loaded.model, loaded.schedule, loaded.stats,
            sampler=sampler, scaler=loaded.scaler,
        )
    if loaded.kind == "lcvae":
        return CondVaeGenerator(vae, loaded.model, loaded.stats)
    if loaded.kind == "arvae":
        return ArvaeGenerator(loaded.model, loaded.ar, loaded.stats, loaded.quantile_map)
    if loaded.kind == "vae":
        return UnconditionalGenerator(loaded.model)
    raise ValueError(f"no generator for model kind {loaded.kind!r}")


def stats_for(dataset: Dataset, attribute: str) -> AttributeStats:
    if attribute not in dataset.stats:
        raise KeyError(f"unknown attribute {attribute!r}")
    return dataset.stats[attribute]
