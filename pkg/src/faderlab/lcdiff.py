"""Latent-constraint diffusion over the frozen VAE latent space.

A small residual MLP, conditioned on a continuous noise level and an
optional attribute value through feature-wise affine modulation,
predicts the noise component of a corrupted latent. Deterministic DDIM
sampling with classifier-free guidance then steers new latents toward a
target attribute value without touching the VAE itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# noise schedule


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear variance schedule with cached cumulative products (float64)."""

    betas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        """Cumulative product at step t, with the t=0 convention of 1."""
        if not 0 <= t <= self.num_steps:
            raise ValueError(f"step {t} outside [0, {self.num_steps}]")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def signal_level(self, t: int) -> float:
        return math.sqrt(self.alpha_bar(t))


def build_schedule(
    num_steps: int = 1000, beta_min: float = 1e-6, beta_max: float = 1e-2
) -> NoiseSchedule:
    if num_steps < 2:
        raise ValueError("need at least 2 diffusion steps")
    if not 0.0 < beta_min < beta_max < 1.0:
        raise ValueError("need 0 < beta_min < beta_max < 1")
    betas = np.linspace(beta_min, beta_max, num_steps, dtype=np.float64)
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def sample_steps(num_steps: int, sampler_steps: int) -> list[int]:
    """Decreasing step subsequence from num_steps to 0 for DDIM.

    Rounds an even spacing and drops duplicates, so the result may be
    slightly shorter than sampler_steps + 1.
    """
    if not 1 <= sampler_steps <= num_steps:
        raise ValueError("sampler steps must lie in [1, num_steps]")
    raw = np.rint(np.linspace(num_steps, 0, sampler_steps + 1)).astype(int)
    out: list[int] = []
    for t in raw:
        if not out or t != out[-1]:
            out.append(int(t))
    return out


# --------------------------------------------------------------------------
# sinusoidal scalar encoding


@dataclass(frozen=True)
class SinusoidalConfig:
    dim: int = 128
    base: float = 10000.0
    scale: float = 5000.0

    def __post_init__(self) -> None:
        if self.dim % 2 != 0 or self.dim < 2:
            raise ValueError("encoding dim must be even and >= 2")


def sinusoidal_encoding(u: torch.Tensor, config: SinusoidalConfig) -> torch.Tensor:
    """Interleaved [sin, cos] features of a scalar at geometric frequencies.

    Pair i (feature slots 2i and 2i+1) uses angle scale * u / base^(2i/dim).
    Accepts any leading shape; appends a trailing dim of size config.dim.
    """
    half = config.dim // 2
    exponents = torch.arange(half, dtype=u.dtype, device=u.device) * (2.0 / config.dim)
    freqs = config.scale / torch.pow(
        torch.tensor(config.base, dtype=u.dtype, device=u.device), exponents
    )
    angles = u.unsqueeze(-1) * freqs
    out = torch.empty(*u.shape, config.dim, dtype=u.dtype, device=u.device)
    out[..., 0::2] = torch.sin(angles)
    out[..., 1::2] = torch.cos(angles)
    return out


# --------------------------------------------------------------------------
# denoiser


@dataclass(slots=True)
class DenoiserConfig:
    latent_dim: int = 32
    hidden: int = 256
    blocks: int = 3
    trunk_width: int = 512
    encoding: SinusoidalConfig = field(default_factory=SinusoidalConfig)

    @property
    def num_film_sites(self) -> int:
        return 2 * self.blocks


class Denoiser(nn.Module):
    """Residual MLP noise predictor with per-site affine conditioning.

    Each residual block applies two {norm, modulate, SiLU, linear}
    stacks; the modulation at every site is scale * LN(x) + shift where
    scale and shift each sum a noise-level head and (when conditioned)
    an attribute head. Dropping the conditioning zeroes the attribute
    head outputs exactly, so the unconditional path is the noise-only
    modulation.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        c = config
        self.in_proj = nn.Linear(c.latent_dim, c.hidden)
        self.out_proj = nn.Linear(c.hidden, c.latent_dim)
        self.norms = nn.ModuleList(
            nn.LayerNorm(c.hidden) for _ in range(c.num_film_sites)
        )
        self.linears = nn.ModuleList(
            nn.Linear(c.hidden, c.hidden) for _ in range(c.num_film_sites)
        )
        self.noise_trunk = nn.Linear(c.encoding.dim, c.trunk_width)
        self.attr_trunk = nn.Linear(c.encoding.dim, c.trunk_width)
        self.noise_scale = nn.ModuleList(
            nn.Linear(c.trunk_width, c.hidden) for _ in range(c.num_film_sites)
        )
        self.noise_shift = nn.ModuleList(
            nn.Linear(c.trunk_width, c.hidden) for _ in range(c.num_film_sites)
        )
        self.attr_scale = nn.ModuleList(
            nn.Linear(c.trunk_width, c.hidden) for _ in range(c.num_film_sites)
        )
        self.attr_shift = nn.ModuleList(
            nn.Linear(c.trunk_width, c.hidden) for _ in range(c.num_film_sites)
        )

    def init_params(self, generator: torch.Generator) -> None:
        """Fan-in uniform weights, zero biases; the noise scale heads get
        bias 1 so every site starts as an identity-scale modulation."""
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "bias" in name:
                    p.zero_()
                elif p.dim() >= 2:
                    bound = 1.0 / math.sqrt(p.shape[1])
                    u = torch.rand(p.shape, generator=generator, dtype=p.dtype)
                    p.copy_((u * 2.0 - 1.0) * bound)
                else:  # LayerNorm weights
                    p.fill_(1.0)
            for head in self.noise_scale:
                head.bias.fill_(1.0)

    def site_modulation(
        self,
        noise_level: torch.Tensor,
        attr: torch.Tensor | None,
        dropout_mask: torch.Tensor | None = None,
    ) -> list[tuple[torch.Tensor, torch.Tensor]]:
        """Per-site (scale, shift), each (B, hidden).

        `attr` is the normalized attribute value per item, or None for
        the unconditional path; `dropout_mask` marks items whose
        attribute contribution is zeroed.
        """
        noise_feat = nn.functional.silu(
            self.noise_trunk(sinusoidal_encoding(noise_level, self.config.encoding))
        )
        attr_feat = None
        if attr is not None:
            attr_feat = nn.functional.silu(
                self.attr_trunk(sinusoidal_encoding(attr, self.config.encoding))
            )
        sites = []
        for s in range(self.config.num_film_sites):
            scale = self.noise_scale[s](noise_feat)
            shift = self.noise_shift[s](noise_feat)
            if attr_feat is not None:
                a_scale = self.attr_scale[s](attr_feat)
                a_shift = self.attr_shift[s](attr_feat)
                if dropout_mask is not None:
                    keep = (~dropout_mask).to(a_scale.dtype).unsqueeze(-1)
                    a_scale = a_scale * keep
                    a_shift = a_shift * keep
                scale = scale + a_scale
                shift = shift + a_shift
            sites.append((scale, shift))
        return sites

    def forward(
        self,
        z_t: torch.Tensor,
        noise_level: torch.Tensor,
        attr: torch.Tensor | None = None,
        dropout_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Predict the noise in z_t at the given signal level.

        z_t: (B, latent_dim); noise_level, attr: (B,) or scalars that
        broadcast; returns (B, latent_dim).
        """
        if z_t.dim() == 1:
            z_t = z_t.unsqueeze(0)
        if noise_level.dim() == 0:
            noise_level = noise_level.expand(z_t.shape[0])
        if attr is not None and attr.dim() == 0:
            attr = attr.expand(z_t.shape[0])
        sites = self.site_modulation(noise_level, attr, dropout_mask)
        h = self.in_proj(z_t)
        site = 0
        for _ in range(self.config.blocks):
            y = h
            for _ in range(2):
                scale, shift = sites[site]
                y = self.linears[site](
                    nn.functional.silu(scale * self.norms[site](y) + shift)
                )
                site += 1
            h = h + y
        return self.out_proj(h)


# --------------------------------------------------------------------------
# guidance and DDIM sampling


def forward_sample(
    z0: torch.Tensor, t: int, schedule: NoiseSchedule, noise: torch.Tensor
) -> torch.Tensor:
    """Corrupt a clean latent to step t in closed form (caller supplies noise)."""
    if not 1 <= t <= schedule.num_steps:
        raise ValueError(f"step {t} outside [1, {schedule.num_steps}]")
    bar = schedule.alpha_bar(t)
    return math.sqrt(bar) * z0 + math.sqrt(1.0 - bar) * noise


def guided_noise(
    model: Denoiser,
    z_t: torch.Tensor,
    noise_level: torch.Tensor,
    attr: torch.Tensor | None,
    guidance: float,
) -> torch.Tensor:
    """Classifier-free guided prediction (1+w)*cond - w*uncond."""
    if attr is None:
        return model(z_t, noise_level, None)
    cond = model(z_t, noise_level, attr)
    if guidance == 0.0:
        return cond
    uncond = model(z_t, noise_level, None)
    return (1.0 + guidance) * cond - guidance * uncond


def estimate_origin(
    z_t: torch.Tensor, noise: torch.Tensor, alpha_bar: float
) -> torch.Tensor:
    """Predicted clean latent implied by a noise estimate at step t."""
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in (0, 1]")
    return (z_t - math.sqrt(1.0 - alpha_bar) * noise) / math.sqrt(alpha_bar)


def ddim_transition(
    z_t: torch.Tensor,
    noise: torch.Tensor,
    alpha_bar_from: float,
    alpha_bar_to: float,
) -> torch.Tensor:
    """Deterministic jump between signal levels reusing the noise estimate."""
    origin = estimate_origin(z_t, noise, alpha_bar_from)
    return math.sqrt(alpha_bar_to) * origin + math.sqrt(1.0 - alpha_bar_to) * noise


@dataclass(slots=True)
class SamplerConfig:
    steps: int = 100
    guidance: float = 3.0


@torch.no_grad()
def sample_latents(
    model: Denoiser,
    schedule: NoiseSchedule,
    count: int,
    attr: torch.Tensor | float | None,
    sampler: SamplerConfig,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Draw latents by DDIM from pure noise, optionally attribute-guided.

    `attr` may be None (unconditional), a scalar applied to every item,
    or a (count,) tensor of per-item normalized targets.
    """
    model.eval()
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(seed)
    if isinstance(attr, (int, float)):
        attr = torch.full((count,), float(attr))
    z = torch.randn(count, model.config.latent_dim, generator=generator)
    steps = sample_steps(schedule.num_steps, sampler.steps)
    for t_from, t_to in zip(steps[:-1], steps[1:]):
        level = torch.full((count,), schedule.signal_level(t_from))
        eps = guided_noise(model, z, level, attr, sampler.guidance)
        z = ddim_transition(
            z, eps, schedule.alpha_bar(t_from), schedule.alpha_bar(t_to)
        )
    return z


# --------------------------------------------------------------------------
# training


def diffusion_loss(
    model: Denoiser | None,
    z0: torch.Tensor,
    attr: torch.Tensor,
    schedule: NoiseSchedule,
    generator: torch.Generator,
    dropout_p: float = 0.2,
    denoise_fn=None,
) -> torch.Tensor:
    """Noise-prediction MSE with continuous levels and conditioning dropout.

    Per item: a step t is drawn uniformly from 1..T, the signal level
    uniformly between the levels at t and t-1, the corruption noise
    from N(0, I), and a dropout flag with probability dropout_p. Draws
    come from `generator` in that fixed order. `denoise_fn` overrides
    the model call (used by tests with a known-perfect predictor).
    """
    batch = z0.shape[0]
    t = torch.randint(1, schedule.num_steps + 1, (batch,), generator=generator)
    bars = torch.from_numpy(schedule.alpha_bars)
    level_t = torch.sqrt(bars[t - 1]).to(z0.dtype)
    level_prev = torch.where(
        t > 1, torch.sqrt(bars[t - 2]), torch.ones_like(bars[0]).expand(batch)
    ).to(z0.dtype)
    u = torch.rand(batch, generator=generator, dtype=z0.dtype)
    level = level_t + u * (level_prev - level_t)
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    z_t = level.unsqueeze(-1) * z0 + torch.sqrt(1.0 - level * level).unsqueeze(-1) * eps
    drop = torch.rand(batch, generator=generator) < dropout_p
    if denoise_fn is not None:
        eps_hat = denoise_fn(z_t, level, attr, drop)
    else:
        eps_hat = model(z_t, level, attr, dropout_mask=drop)
    return ((eps - eps_hat) ** 2).sum(-1).mean()


@dataclass(slots=True)
class DiffusionTrainConfig:
    epochs: int = 30
    batch: int = 256
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    lr_decay: float = 0.9999
    dropout_p: float = 0.2
    log_every: int = 200


@dataclass(slots=True)
class DiffusionTrainResult:
    model: Denoiser
    log: list[dict] = field(default_factory=list)


def train_diffusion(
    latents: torch.Tensor,
    attr_values: torch.Tensor,
    config: DenoiserConfig,
    schedule: NoiseSchedule,
    train_cfg: DiffusionTrainConfig,
    seed: int,
) -> DiffusionTrainResult:
    """Fit a denoiser to frozen latents paired with normalized attributes."""
    if latents.shape[0] != attr_values.shape[0]:
        raise ValueError("latents and attribute values must align")
    gen = torch.Generator().manual_seed(seed)
    model = Denoiser(config)
    model.init_params(gen)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr_start)
    result = DiffusionTrainResult(model)
    latents = latents.float()
    attr_values = attr_values.float()
    n = latents.shape[0]
    it = 0
    for epoch in range(train_cfg.epochs):
        order = torch.randperm(n, generator=gen)
        for lo in range(0, n, train_cfg.batch):
            idx = order[lo:lo + train_cfg.batch]
            lr = max(train_cfg.lr_end, train_cfg.lr_start * train_cfg.lr_decay**it)
            for group in opt.param_groups:
                group["lr"] = lr
            loss = diffusion_loss(
                model,
                latents[idx],
                attr_values[idx],
                schedule,
                gen,
                dropout_p=train_cfg.dropout_p,
            )
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite diffusion loss at iteration {it}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            if it % train_cfg.log_every == 0:
                entry = {"iter": it, "epoch": epoch, "loss": float(loss.item()), "lr": lr}
                result.log.append(entry)
                log.debug("diffusion iter %d: %s", it, entry)
            it += 1
    return result
