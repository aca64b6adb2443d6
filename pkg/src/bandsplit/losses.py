"""Waveform + real/imaginary spectrogram losses (L1, MSE, L1SNR, L2SNR)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import torch

_DB = 10.0 / math.log(10.0)


class LossKind(str, enum.Enum):
    L1 = "l1"
    MSE = "mse"
    L1SNR = "l1snr"
    L2SNR = "l2snr"


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.L1SNR
    epsilon: float = 1e-3
    term_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        object.__setattr__(self, "term_weights", tuple(float(w) for w in self.term_weights))
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if len(self.term_weights) != 3 or min(self.term_weights) < 0:
            raise ValueError("term_weights must be three non-negative numbers")


def _flat(t: torch.Tensor, batch_dims: int) -> torch.Tensor:
    return t.reshape(*t.shape[:batch_dims], -1)


def pnorm(t: torch.Tensor, p: int, batch_dims: int = 0) -> torch.Tensor:
    t = _flat(t, batch_dims)
    if p == 1:
        return t.abs().sum(-1)
    if p == 2:
        return t.square().sum(-1).sqrt()
    raise ValueError(f"p must be 1 or 2, got {p}")


def dist_p(y_hat: torch.Tensor, y: torch.Tensor, p: int = 1,
           epsilon: float = 1e-3, batch_dims: int = 0) -> torch.Tensor:
    """-10 log10((||y||_p + eps) / (||y_hat - y||_p + eps)), per batch item."""
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(y_hat.shape)} vs {tuple(y.shape)}")
    num = pnorm(y, p, batch_dims) + epsilon
    den = pnorm(y_hat - y, p, batch_dims) + epsilon
    return -_DB * (torch.log(num) - torch.log(den))


def _term(kind: LossKind, y_hat, y, epsilon, batch_dims):
    if kind is LossKind.L1:
        return pnorm(y_hat - y, 1, batch_dims)
    if kind is LossKind.MSE:
        return _flat(y_hat - y, batch_dims).square().mean(-1)
    p = 1 if kind is LossKind.L1SNR else 2
    return dist_p(y_hat, y, p, epsilon, batch_dims)


def stem_loss(config: LossConfig, s_hat: torch.Tensor, s: torch.Tensor,
              S_hat: torch.Tensor, S: torch.Tensor, batch_dims: int = 0) -> torch.Tensor:
    """Time-domain term plus separate real and imaginary spectrogram terms.

    Norms run jointly over all non-batch elements of each term. With
    ``batch_dims > 0`` the result is averaged over the batch axes.
    """
    if S_hat.shape != S.shape:
        raise ValueError(f"spectrogram shape mismatch {tuple(S_hat.shape)} vs {tuple(S.shape)}")
    w0, w1, w2 = config.term_weights
    eps, kind = config.epsilon, config.kind
    loss = (w0 * _term(kind, s_hat, s, eps, batch_dims)
            + w1 * _term(kind, S_hat.real, S.real, eps, batch_dims)
            + w2 * _term(kind, S_hat.imag, S.imag, eps, batch_dims))
    return loss.mean() if batch_dims else loss


def total_loss(config: LossConfig, estimates: dict, targets: dict,
               spec_estimates: dict, spec_targets: dict, batch_dims: int = 0) -> torch.Tensor:
    """Mean of :func:`stem_loss` over the stems in ``estimates``."""
    losses = [
        stem_loss(config, estimates[k], targets[k], spec_estimates[k], spec_targets[k], batch_dims)
        for k in estimates
    ]
    return torch.stack(losses).mean()


def loss_gradient(config: LossConfig, s_hat: torch.Tensor, s: torch.Tensor,
                  S_hat: torch.Tensor, S: torch.Tensor) -> dict[str, torch.Tensor]:
    """Gradients of :func:`stem_loss` w.r.t. the estimate's waveform, Re and Im parts."""
    t = s_hat.detach().clone().requires_grad_(True)
    re = S_hat.real.detach().clone().requires_grad_(True)
    im = S_hat.imag.detach().clone().requires_grad_(True)
    loss = stem_loss(config, t, s, torch.complex(re, im), S)
    g_t, g_re, g_im = torch.autograd.grad(loss, (t, re, im))
    return {"time": g_t, "re": g_re, "im": g_im}
