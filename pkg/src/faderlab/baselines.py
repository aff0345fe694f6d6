"""Baseline controllers: attribute-regularized VAEs and conditional latent VAEs.

Two families compared against the diffusion constraint. The first
retrains the sequence VAE with an extra loss tying one latent dimension
to an attribute (either by matching normalized values or by aligning
pairwise orderings). The second keeps the VAE frozen and fits a small
conditional VAE over its latents, conditioning on the attribute value
either as a plain scalar or through its sinusoidal encoding (the caller
fixes the value's normalization).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .attributes import AttributeStats
from .lcdiff import SinusoidalConfig, sinusoidal_encoding
from .seqvae import (
    SequenceVae,
    TrainResult,
    TrainSchedule,
    VaeConfig,
    train_vae,
)

log = logging.getLogger(__name__)

AR_VARIANTS = ("nm", "pl")


# --------------------------------------------------------------------------
# attribute-regularization losses


def ar_loss_nm(z_dim: torch.Tensor, attr: torch.Tensor, mean: float, std: float) -> torch.Tensor:
    """Mean absolute gap between a latent dim and the z-scored attribute."""
    if std <= 0:
        raise ValueError("attribute std must be positive for normalization matching")
    target = (attr - mean) / std
    return (z_dim - target).abs().mean()


def ar_loss_pl(z_dim: torch.Tensor, attr: torch.Tensor, delta: float = 10.0) -> torch.Tensor:
    """Pairwise ordering penalty between a latent dim and an attribute.

    Builds the signed difference matrices of both vectors and penalizes
    mean |tanh(delta * D_z) - sign(D_attr)| over all ordered pairs.
    """
    d_z = z_dim.unsqueeze(1) - z_dim.unsqueeze(0)
    d_a = attr.unsqueeze(1) - attr.unsqueeze(0)
    return (torch.tanh(delta * d_z) - torch.sign(d_a)).abs().mean()


@dataclass(slots=True)
class ArConfig:
    variant: str = "nm"
    latent_index: int = 0
    gamma: float = 1.0
    delta: float = 10.0

    def __post_init__(self) -> None:
        if self.variant not in AR_VARIANTS:
            raise ValueError(f"unknown regularizer variant {self.variant!r}")


def arvae_loss(
    model: SequenceVae,
    x: torch.Tensor,
    attr: torch.Tensor,
    beta: float,
    ar: ArConfig,
    stats: AttributeStats,
    noise: torch.Tensor,
    tf_prob: float = 1.0,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """VAE objective plus gamma times the attribute term on sampled latents.

    Returns (total, attribute term); gamma = 0 reduces to the plain
    VAE loss.
    """
    from .seqvae import vae_loss

    total, _, _, z = vae_loss(model, x, beta, noise, tf_prob, generator)
    z_dim = z[:, ar.latent_index]
    if ar.variant == "nm":
        term = ar_loss_nm(z_dim, attr, stats.mean, stats.std)
    else:
        term = ar_loss_pl(z_dim, attr, ar.delta)
    return total + ar.gamma * term, term


def train_arvae(
    train_tokens: np.ndarray,
    attr_values: np.ndarray,
    stats: AttributeStats,
    config: VaeConfig,
    sched: TrainSchedule,
    ar: ArConfig,
    seed: int,
    checkpoint_cb=None,
) -> TrainResult:
    """Sequence-VAE training plus the attribute term on sampled latents."""
    values = torch.from_numpy(np.ascontiguousarray(attr_values)).float()

    def regularizer(z: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
        z_dim = z[:, ar.latent_index]
        a = values[idx]
        if ar.variant == "nm":
            term = ar_loss_nm(z_dim, a, stats.mean, stats.std)
        else:
            term = ar_loss_pl(z_dim, a, ar.delta)
        return ar.gamma * term

    return train_vae(
        train_tokens, config, sched, seed,
        regularizer=regularizer, checkpoint_cb=checkpoint_cb,
    )


@dataclass(frozen=True)
class QuantileMap:
    """Monotone map from attribute values to a latent dim via rank matching.

    Built from training pairs: a target attribute is converted to its
    empirical quantile among the attribute values, then mapped to the
    same quantile of the latent values (linear interpolation both ways).
    """

    sorted_attr: np.ndarray
    sorted_latent: np.ndarray

    def __post_init__(self) -> None:
        if len(self.sorted_attr) != len(self.sorted_latent) or len(self.sorted_attr) < 2:
            raise ValueError("need >= 2 aligned (attribute, latent) pairs")

    @classmethod
    def fit(cls, attr_values: np.ndarray, latent_values: np.ndarray) -> "QuantileMap":
        return cls(
            sorted_attr=np.sort(np.asarray(attr_values, dtype=np.float64)),
            sorted_latent=np.sort(np.asarray(latent_values, dtype=np.float64)),
        )

    def __call__(self, target):
        grid = np.linspace(0.0, 1.0, len(self.sorted_attr))
        rank = np.interp(target, self.sorted_attr, grid)
        mapped = np.interp(rank, grid, self.sorted_latent)
        if np.ndim(target) == 0:
            return float(mapped)
        return mapped


def arvae_latent_for_target(
    target: float,
    ar: ArConfig,
    stats: AttributeStats,
    quantile_map: QuantileMap | None,
    base: torch.Tensor,
) -> torch.Tensor:
    """Overwrite the regularized dim of a base latent to hit a raw target.

    `target` may be a scalar applied to every row of `base` or a vector
    of per-row raw attribute targets.
    """
    z = base.clone()
    raw = np.asarray(target, dtype=np.float64)
    if ar.variant == "nm":
        if stats.std <= 0:
            raise ValueError("attribute std must be positive")
        value = (raw - stats.mean) / stats.std
    else:
        if quantile_map is None:
            raise ValueError("pairwise variant needs a fitted quantile map")
        value = quantile_map(raw)
    z[..., ar.latent_index] = torch.as_tensor(value, dtype=base.dtype)
    return z


@torch.no_grad()
def arvae_generate(
    model: SequenceVae,
    target: float,
    ar: ArConfig,
    stats: AttributeStats,
    quantile_map: QuantileMap | None = None,
    count: int = 1,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Sample latents, pin the regularized dim to the target, decode greedily."""
    from .seqvae import greedy_decode

    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(seed)
    base = torch.randn(count, model.config.latent_dim, generator=generator)
    z = arvae_latent_for_target(target, ar, stats, quantile_map, base)
    return greedy_decode(model, z)


# --------------------------------------------------------------------------
# conditional latent VAE


class GatedLinear(nn.Module):
    """Gated output layer: sigmoid gate blends a tanh path and a linear path."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.gate = nn.Linear(in_dim, out_dim)
        self.update = nn.Linear(in_dim, out_dim)
        self.passthrough = nn.Linear(in_dim, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        g = torch.sigmoid(self.gate(x))
        return g * torch.tanh(self.update(x)) + (1.0 - g) * self.passthrough(x)


@dataclass(slots=True)
class CondVaeConfig:
    latent_dim: int = 32  # dimensionality of the frozen latents being modeled
    inner_dim: int = 16
    hidden: int = 128
    depth: int = 4
    conditioning: str = "value"  # "value" (variant A) or "encoding" (variant SE)
    encoding: SinusoidalConfig = field(default_factory=SinusoidalConfig)

    def __post_init__(self) -> None:
        if self.conditioning not in ("value", "encoding"):
            raise ValueError("conditioning must be 'value' or 'encoding'")

    @property
    def cond_dim(self) -> int:
        return 1 if self.conditioning == "value" else self.encoding.dim


def _mlp(in_dim: int, hidden: int, depth: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    d = in_dim
    for _ in range(depth):
        layers.append(nn.Linear(d, hidden))
        layers.append(nn.ReLU())
        d = hidden
    return nn.Sequential(*layers)


class CondLatentVae(nn.Module):
    """Conditional VAE over frozen sequence-VAE latents."""

    def __init__(self, config: CondVaeConfig):
        super().__init__()
        self.config = config
        c = config
        self.enc = _mlp(c.latent_dim + c.cond_dim, c.hidden, c.depth)
        self.enc_mu = GatedLinear(c.hidden, c.inner_dim)
        self.enc_logvar = GatedLinear(c.hidden, c.inner_dim)
        self.dec = _mlp(c.inner_dim + c.cond_dim, c.hidden, c.depth)
        self.dec_out = GatedLinear(c.hidden, c.latent_dim)

    def init_params(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "bias" in name:
                    p.zero_()
                else:
                    bound = 1.0 / (p.shape[1] ** 0.5)
                    u = torch.rand(p.shape, generator=generator, dtype=p.dtype)
                    p.copy_((u * 2.0 - 1.0) * bound)

    def condition(self, attr: torch.Tensor) -> torch.Tensor:
        if self.config.conditioning == "value":
            return attr.unsqueeze(-1)
        return sinusoidal_encoding(attr, self.config.encoding)

    def encode(self, z: torch.Tensor, attr: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.enc(torch.cat([z, self.condition(attr)], dim=-1))
        return self.enc_mu(h), self.enc_logvar(h).clamp(-10.0, 10.0)

    def decode(self, inner: torch.Tensor, attr: torch.Tensor) -> torch.Tensor:
        h = self.dec(torch.cat([inner, self.condition(attr)], dim=-1))
        return self.dec_out(h)


def cond_vae_loss(
    model: CondLatentVae,
    z: torch.Tensor,
    attr: torch.Tensor,
    beta: float,
    noise: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Squared-error reconstruction of the latent plus beta * KL."""
    mu, logvar = model.encode(z, attr)
    inner = mu + torch.exp(0.5 * logvar) * noise
    recon = ((model.decode(inner, attr) - z) ** 2).sum(-1)
    kl = 0.5 * (torch.exp(logvar) + mu * mu - 1.0 - logvar).sum(-1)
    return (recon + beta * kl).mean(), recon.mean(), kl.mean()


@dataclass(slots=True)
class CondVaeTrainConfig:
    epochs: int = 40
    batch: int = 256
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    lr_decay: float = 0.9999
    beta_max: float = 1e-3
    beta_rate: float = 0.9999
    log_every: int = 200


@dataclass(slots=True)
class CondVaeTrainResult:
    model: CondLatentVae
    log: list[dict] = field(default_factory=list)


def train_cond_vae(
    latents: torch.Tensor,
    attr_values: torch.Tensor,
    config: CondVaeConfig,
    train_cfg: CondVaeTrainConfig,
    seed: int,
) -> CondVaeTrainResult:
    """Fit the conditional latent VAE on frozen latents and conditioning values."""
    if latents.shape[0] != attr_values.shape[0]:
        raise ValueError("latents and attribute values must align")
    gen = torch.Generator().manual_seed(seed)
    model = CondLatentVae(config)
    model.init_params(gen)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr_start)
    result = CondVaeTrainResult(model)
    latents = latents.float()
    attr_values = attr_values.float()
    n = latents.shape[0]
    it = 0
    for epoch in range(train_cfg.epochs):
        order = torch.randperm(n, generator=gen)
        for lo in range(0, n, train_cfg.batch):
            idx = order[lo:lo + train_cfg.batch]
            lr = max(train_cfg.lr_end, train_cfg.lr_start * train_cfg.lr_decay**it)
            beta = train_cfg.beta_max * (1.0 - train_cfg.beta_rate**it)
            for group in opt.param_groups:
                group["lr"] = lr
            noise = torch.randn(len(idx), config.inner_dim, generator=gen)
            total, recon, kl = cond_vae_loss(model, latents[idx], attr_values[idx], beta, noise)
            if not torch.isfinite(total):
                raise RuntimeError(f"non-finite conditional-VAE loss at iteration {it}")
            opt.zero_grad()
            total.backward()
            opt.step()
            if it % train_cfg.log_every == 0:
                entry = {
                    "iter": it, "epoch": epoch, "loss": float(total.item()),
                    "recon": float(recon.item()), "kl": float(kl.item()), "lr": lr,
                }
                result.log.append(entry)
                log.debug("cond-vae iter %d: %s", it, entry)
            it += 1
    return result


@torch.no_grad()
def cond_vae_sample(
    model: CondLatentVae,
    attr: torch.Tensor,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Decode inner-noise draws under per-item attribute conditioning."""
    model.eval()
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(seed)
    inner = torch.randn(attr.shape[0], model.config.inner_dim, generator=generator)
    return model.decode(inner, attr.float())
