"""Unconditional sequence VAE over pitch-token windows.

A two-layer bidirectional LSTM encoder maps a 64-token window to a
Gaussian posterior; a hierarchical decoder (a 4-step conductor feeding a
per-bar re-initialized bottom LSTM) emits one categorical distribution
per step. The KL weight is tiny, so the model behaves as a structured
autoencoder whose latent space downstream constraint models navigate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .tokens import BARS, SEQ_LEN, STEPS_PER_BAR, VOCAB_SIZE

log = logging.getLogger(__name__)


@dataclass(slots=True)
class VaeConfig:
    latent_dim: int = 32
    enc_hidden: int = 64  # per direction
    enc_layers: int = 2
    conductor_hidden: int = 64
    decoder_hidden: int = 64  # also the token embedding width
    vocab: int = VOCAB_SIZE
    bars: int = BARS
    steps_per_bar: int = STEPS_PER_BAR
    logvar_clamp: float = 10.0

    def __post_init__(self) -> None:
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be >= 2")
        if self.bars * self.steps_per_bar != SEQ_LEN:
            raise ValueError("bars * steps_per_bar must equal 64")


@dataclass(slots=True)
class TrainSchedule:
    total_iters: int = 5000
    batch: int = 64
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    lr_decay: float = 0.9999
    beta_max: float = 1e-3
    beta_rate: float = 0.9999
    tf_k: float = 2000.0
    log_every: int = 100
    checkpoint_every: int = 1000

    def __post_init__(self) -> None:
        if not self.lr_start > self.lr_end > 0:
            raise ValueError("need lr_start > lr_end > 0")
        if not (0 < self.lr_decay < 1 and 0 < self.beta_rate < 1):
            raise ValueError("decay rates must lie in (0, 1)")


@dataclass(frozen=True)
class GaussianPosterior:
    mean: torch.Tensor
    logvar: torch.Tensor


def schedules(iteration: int, sched: TrainSchedule) -> tuple[float, float, float]:
    """Learning rate, KL weight, and teacher-forcing probability."""
    lr = max(sched.lr_end, sched.lr_start * sched.lr_decay**iteration)
    beta = sched.beta_max * (1.0 - sched.beta_rate**iteration)
    exponent = iteration / sched.tf_k
    tf_prob = 0.0 if exponent > 700.0 else sched.tf_k / (sched.tf_k + math.exp(exponent))
    return lr, beta, tf_prob


def reparameterize(post: GaussianPosterior, noise: torch.Tensor) -> torch.Tensor:
    return post.mean + torch.exp(0.5 * post.logvar) * noise


def kl_gaussian(post: GaussianPosterior) -> torch.Tensor:
    """KL to the standard normal, summed over latent dims per item.

    Clamped at zero: float cancellation near the standard posterior can
    otherwise yield values like -1e-8.
    """
    mu, logvar = post.mean, post.logvar
    kl = 0.5 * (torch.exp(logvar) + mu * mu - 1.0 - logvar).sum(-1)
    return kl.clamp_min(0.0)


class SequenceVae(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        self.config = config
        c = config
        self.embedding = nn.Embedding(c.vocab, c.decoder_hidden)
        self.encoder = nn.LSTM(
            c.decoder_hidden,
            c.enc_hidden,
            num_layers=c.enc_layers,
            bidirectional=True,
            batch_first=True,
        )
        self.enc_mu = nn.Linear(2 * c.enc_hidden, c.latent_dim)
        self.enc_logvar = nn.Linear(2 * c.enc_hidden, c.latent_dim)
        self.latent_to_conductor = nn.Linear(c.latent_dim, 2 * c.conductor_hidden)
        self.conductor = nn.LSTMCell(1, c.conductor_hidden)
        self.bar_to_state = nn.Linear(c.conductor_hidden, 2 * c.decoder_hidden)
        self.bottom = nn.LSTMCell(c.decoder_hidden + c.conductor_hidden, c.decoder_hidden)
        self.logits = nn.Linear(c.decoder_hidden, c.vocab)

    def init_params(self, generator: torch.Generator) -> None:
        """Uniform(-0.05, 0.05) weights, zero biases, from the generator."""
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "bias" in name:
                    p.zero_()
                else:
                    u = torch.rand(p.shape, generator=generator, dtype=p.dtype)
                    p.copy_(u * 0.1 - 0.05)

    def encode(self, x: torch.Tensor) -> GaussianPosterior:
        if x.dim() == 1:
            x = x.unsqueeze(0)
        emb = self.embedding(x)
        _, (h_n, _) = self.encoder(emb)
        # final hidden states of both directions of the top layer
        feat = torch.cat([h_n[-2], h_n[-1]], dim=-1)
        mu = self.enc_mu(feat)
        logvar = self.enc_logvar(feat).clamp(-self.config.logvar_clamp, self.config.logvar_clamp)
        return GaussianPosterior(mu, logvar)

    def decode(
        self,
        z: torch.Tensor,
        teacher: torch.Tensor | None = None,
        tf_prob: float = 0.0,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Roll out the hierarchical decoder.

        Returns (logits, tokens) of shapes (B, 64, vocab) and (B, 64);
        tokens are the greedy per-step predictions. At each step the
        next input is the teacher token with probability tf_prob, else
        the model's own prediction; tf_prob > 0 requires a teacher, and
        tf_prob = 1 makes the logits a deterministic function of z.
        """
        if tf_prob > 0.0 and teacher is None:
            raise ValueError("teacher sequence required when tf_prob > 0")
        if z.dim() == 1:
            z = z.unsqueeze(0)
        c = self.config
        batch = z.shape[0]
        state = torch.tanh(self.latent_to_conductor(z))
        hc, cc = state.chunk(2, dim=-1)
        hc, cc = hc.contiguous(), cc.contiguous()
        cond_in = z.new_zeros(batch, 1)
        all_logits: list[torch.Tensor] = []
        all_tokens: list[torch.Tensor] = []
        prev_emb = z.new_zeros(batch, c.decoder_hidden)
        step = 0
        for _ in range(c.bars):
            hc, cc = self.conductor(cond_in, (hc, cc))
            bar_emb = hc
            hb, cb = torch.tanh(self.bar_to_state(bar_emb)).chunk(2, dim=-1)
            hb, cb = hb.contiguous(), cb.contiguous()
            for _ in range(c.steps_per_bar):
                hb, cb = self.bottom(torch.cat([prev_emb, bar_emb], dim=-1), (hb, cb))
                step_logits = self.logits(hb)
                predicted = step_logits.argmax(dim=-1)
                all_logits.append(step_logits)
                all_tokens.append(predicted)
                if tf_prob >= 1.0:
                    chosen = teacher[:, step]
                elif tf_prob <= 0.0 or teacher is None:
                    chosen = predicted
                else:
                    mask = (
                        torch.rand(batch, generator=generator, device=z.device) < tf_prob
                    )
                    chosen = torch.where(mask, teacher[:, step], predicted)
                prev_emb = self.embedding(chosen)
                step += 1
        return torch.stack(all_logits, dim=1), torch.stack(all_tokens, dim=1)


def vae_loss(
    model: SequenceVae,
    x: torch.Tensor,
    beta: float,
    noise: torch.Tensor,
    tf_prob: float = 1.0,
    generator: torch.Generator | None = None,
    posterior_sample: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Reconstruction + beta * KL, averaged over the batch.

    Returns (total, recon, kl, z); recon is the cross-entropy summed
    over the 64 steps.
    """
    post = model.encode(x)
    z = reparameterize(post, noise) if posterior_sample is None else posterior_sample
    logits, _ = model.decode(z, teacher=x, tf_prob=tf_prob, generator=generator)
    recon = nn.functional.cross_entropy(
        logits.reshape(-1, model.config.vocab), x.reshape(-1), reduction="none"
    ).reshape(x.shape[0], -1).sum(-1)
    kl = kl_gaussian(post)
    total = (recon + beta * kl).mean()
    return total, recon.mean(), kl.mean(), z


class TrainingDiverged(RuntimeError):
    pass


@dataclass(slots=True)
class TrainResult:
    model: SequenceVae
    log: list[dict] = field(default_factory=list)


def train_vae(
    train_tokens: np.ndarray,
    config: VaeConfig,
    sched: TrainSchedule,
    seed: int,
    regularizer=None,
    checkpoint_cb=None,
) -> TrainResult:
    """Adam optimization of the VAE objective under the schedules.

    `regularizer(z, batch_indices)` may add a term to the loss (the
    attribute-regularized variants use this); `checkpoint_cb(iteration,
    model, log)` is invoked every `checkpoint_every` iterations and once
    at the end. Deterministic given the seed and thread count.
    """
    gen = torch.Generator().manual_seed(seed)
    model = SequenceVae(config)
    model.init_params(gen)
    tokens = torch.from_numpy(np.ascontiguousarray(train_tokens)).long()
    n = tokens.shape[0]
    if n == 0:
        raise ValueError("empty training split")
    opt = torch.optim.Adam(model.parameters(), lr=sched.lr_start)
    result = TrainResult(model)
    for it in range(sched.total_iters):
        lr, beta, tf_prob = schedules(it, sched)
        for group in opt.param_groups:
            group["lr"] = lr
        idx = torch.randint(0, n, (sched.batch,), generator=gen)
        batch = tokens[idx]
        noise = torch.randn(batch.shape[0], config.latent_dim, generator=gen)
        total, recon, kl, z = vae_loss(model, batch, beta, noise, tf_prob, generator=gen)
        if regularizer is not None:
            total = total + regularizer(z, idx)
        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss at iteration {it} (recon={recon.item():.4g}, "
                f"kl={kl.item():.4g}); last periodic checkpoint retained"
            )
        opt.zero_grad()
        total.backward()
        opt.step()
        if it % sched.log_every == 0 or it == sched.total_iters - 1:
            entry = {
                "iter": it,
                "loss": float(total.item()),
                "recon": float(recon.item()),
                "kl": float(kl.item()),
                "lr": lr,
                "beta": beta,
                "tf_prob": tf_prob,
            }
            result.log.append(entry)
            log.debug("vae iter %d: %s", it, entry)
        if checkpoint_cb is not None and (
            (it + 1) % sched.checkpoint_every == 0 or it == sched.total_iters - 1
        ):
            checkpoint_cb(it, model, result.log)
    return result


@torch.no_grad()
def encode_means(model: SequenceVae, tokens: np.ndarray, batch: int = 512) -> torch.Tensor:
    """Posterior means for a token matrix, batched."""
    model.eval()
    out = []
    data = torch.from_numpy(np.ascontiguousarray(tokens)).long()
    for lo in range(0, data.shape[0], batch):
        out.append(model.encode(data[lo:lo + batch]).mean)
    return torch.cat(out, dim=0)


@torch.no_grad()
def greedy_decode(model: SequenceVae, z: torch.Tensor, batch: int = 256) -> torch.Tensor:
    """Argmax rollout with no teacher; returns (n, 64) token tensor."""
    model.eval()
    out = []
    for lo in range(0, z.shape[0], batch):
        _, tokens = model.decode(z[lo:lo + batch], teacher=None, tf_prob=0.0)
        out.append(tokens)
    return torch.cat(out, dim=0)


@torch.no_grad()
def reconstruction_accuracy(model: SequenceVae, tokens: np.ndarray, batch: int = 256) -> float:
    """Fraction of tokens reproduced by greedy decoding posterior means."""
    data = torch.from_numpy(np.ascontiguousarray(tokens)).long()
    correct = 0
    for lo in range(0, data.shape[0], batch):
        chunk = data[lo:lo + batch]
        post = model.encode(chunk)
        _, decoded = model.decode(post.mean, teacher=None, tf_prob=0.0)
        correct += int((decoded == chunk).sum())
    return correct / data.numel()
