"""Common-encoder bandsplit masking network.

Layout conventions: spectrograms are ``(batch, C, F, T)`` complex; the
internal feature map is ``(batch, B, T, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .bands import BandSpec
from .dsp import StftConfig, istft, stft

NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    band_spec: BandSpec = field(repr=False)
    stems: tuple[str, ...] = ("dialogue", "music", "effects")
    hop: int = 512
    emb_dim: int = 128
    rnn_pairs: int = 8
    mlp_hidden: int | None = None
    channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stems", tuple(self.stems))
        if not self.stems:
            raise ValueError("at least one stem is required")
        if len(set(self.stems)) != len(self.stems):
            raise ValueError(f"duplicate stem names in {self.stems}")
        if self.mlp_hidden is None:
            object.__setattr__(self, "mlp_hidden", 4 * self.emb_dim)

    @property
    def rnn_hidden(self) -> int:
        return 2 * self.emb_dim

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.band_spec.n_fft, self.hop, self.band_spec.fs)

    def with_stems(self, stems) -> "ModelConfig":
        return ModelConfig(self.band_spec, tuple(stems), self.hop, self.emb_dim,
                           self.rnn_pairs, self.mlp_hidden, self.channels)


def complex_to_features(Xb: torch.Tensor) -> torch.Tensor:
    """(batch, C, F_b, T) complex -> (batch, T, 2*C*F_b), real rows first."""
    batch, _, _, frames = Xb.shape
    stacked = torch.cat([Xb.real, Xb.imag], dim=1)
    return stacked.reshape(batch, -1, frames).transpose(1, 2)


class BandEmbedding(nn.Module):
    def __init__(self, band_widths, channels: int, emb_dim: int):
        super().__init__()
        self.norms = nn.ModuleList(nn.LayerNorm(2 * channels * w, eps=NORM_EPS) for w in band_widths)
        self.fcs = nn.ModuleList(nn.Linear(2 * channels * w, emb_dim) for w in band_widths)

    def forward(self, subbands: list[torch.Tensor]) -> torch.Tensor:
        if len(subbands) != len(self.fcs):
            raise ValueError(f"expected {len(self.fcs)} subbands, got {len(subbands)}")
        feats = []
        for Xb, norm, fc in zip(subbands, self.norms, self.fcs):
            feats.append(fc(norm(complex_to_features(Xb))))
        return torch.stack(feats, dim=1)


class ResidualRNN(nn.Module):
    """norm -> biGRU -> affine -> residual add, along the second-to-last axis."""

    def __init__(self, emb_dim: int, hidden: int):
        super().__init__()
        self.norm = nn.LayerNorm(emb_dim, eps=NORM_EPS)
        self.rnn = nn.GRU(emb_dim, hidden, batch_first=True, bidirectional=True)
        self.fc = nn.Linear(2 * hidden, emb_dim)
        for name, p in self.rnn.named_parameters():
            if name.startswith("weight_hh"):
                for gate in p.data.chunk(3, dim=0):
                    nn.init.orthogonal_(gate)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        lead, seq, dim = z.shape[:-2], z.shape[-2], z.shape[-1]
        flat = z.reshape(-1, seq, dim)
        out, _ = self.rnn(self.norm(flat))
        return z + self.fc(out).reshape(*lead, seq, dim)


class TFModel(nn.Module):
    def __init__(self, emb_dim: int, hidden: int, pairs: int):
        super().__init__()
        self.time_rnns = nn.ModuleList(ResidualRNN(emb_dim, hidden) for _ in range(pairs))
        self.band_rnns = nn.ModuleList(ResidualRNN(emb_dim, hidden) for _ in range(pairs))

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        # v: (batch, B, T, D)
        for time_rnn, band_rnn in zip(self.time_rnns, self.band_rnns):
            v = time_rnn(v)
            v = band_rnn(v.transpose(1, 2)).transpose(1, 2)
        return v


class BandMaskEstimator(nn.Module):
    def __init__(self, width: int, channels: int, emb_dim: int, mlp_hidden: int):
        super().__init__()
        self.channels, self.width = channels, width
        self.norm = nn.LayerNorm(emb_dim, eps=NORM_EPS)
        self.hidden = nn.Linear(emb_dim, mlp_hidden)
        self.out = nn.Linear(mlp_hidden, 4 * channels * width)

    def forward(self, lam: torch.Tensor) -> torch.Tensor:
        # lam: (batch, T, D) -> complex (batch, C, F_b, T)
        h = torch.tanh(self.hidden(self.norm(lam)))
        y = nn.functional.glu(self.out(h), dim=-1)
        batch, frames = y.shape[:2]
        y = y.reshape(batch, frames, 2, self.channels, self.width).permute(2, 0, 3, 4, 1)
        return torch.complex(y[0], y[1])


class MaskDecoder(nn.Module):
    def __init__(self, band_widths, channels: int, emb_dim: int, mlp_hidden: int):
        super().__init__()
        self.bands = nn.ModuleList(
            BandMaskEstimator(w, channels, emb_dim, mlp_hidden) for w in band_widths
        )

    def forward(self, lam: torch.Tensor) -> list[torch.Tensor]:
        return [est(lam[:, b]) for b, est in enumerate(self.bands)]


def recombine_masks(spec: BandSpec, bandwise: list[torch.Tensor]) -> torch.Tensor:
    """Full-band mask sum_b W[b] * zero-extended M_b over ``(..., F_b, T)`` masks."""
    if len(bandwise) != spec.n_bands:
        raise ValueError(f"expected {spec.n_bands} bandwise masks, got {len(bandwise)}")
    ref = bandwise[0]
    real_dtype = ref.real.dtype if ref.is_complex() else ref.dtype
    shape = (*ref.shape[:-2], spec.n_bins, ref.shape[-1])
    full = torch.zeros(shape, dtype=ref.dtype, device=ref.device)
    weights = torch.tensor(spec.weights, dtype=real_dtype, device=ref.device)
    for b, (idx, mb) in enumerate(zip(spec.bins, bandwise)):
        if mb.shape[-2] != len(idx):
            raise ValueError(f"band {b} mask has {mb.shape[-2]} bins, expected {len(idx)}")
        idx_t = torch.as_tensor(idx, device=ref.device)
        w = weights[b, idx_t].unsqueeze(-1)
        full = full.index_add(-2, idx_t, w * mb)
    return full


class BandSplitNet(nn.Module):
    """Shared embedding + TF trunk with one detachable mask decoder per stem."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = config.band_spec.band_widths.tolist()
        self.embedding = BandEmbedding(widths, config.channels, config.emb_dim)
        self.tf_model = TFModel(config.emb_dim, config.rnn_hidden, config.rnn_pairs)
        self.decoders = nn.ModuleDict({s: self._new_decoder() for s in config.stems})

    def _new_decoder(self) -> MaskDecoder:
        c = self.config
        return MaskDecoder(c.band_spec.band_widths.tolist(), c.channels, c.emb_dim, c.mlp_hidden)

    @property
    def stems(self) -> tuple[str, ...]:
        return tuple(self.decoders.keys())

    def encoder_parameters(self):
        yield from self.embedding.parameters()
        yield from self.tf_model.parameters()

    def encode(self, X: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(torch.view_as_real(X)).all():
            raise ValueError("non-finite values in input spectrogram")
        subbands = [X[..., torch.as_tensor(idx), :] for idx in self.config.band_spec.bins]
        return self.tf_model(self.embedding(subbands))

    def bandwise_masks(self, lam: torch.Tensor, stem: str) -> list[torch.Tensor]:
        if stem not in self.decoders:
            raise KeyError(f"unknown stem {stem!r}; model has {list(self.decoders)}")
        return self.decoders[stem](lam)

    def masks(self, X: torch.Tensor, stems=None) -> dict[str, torch.Tensor]:
        lam = self.encode(X)
        stems = self.stems if stems is None else stems
        return {s: recombine_masks(self.config.band_spec, self.bandwise_masks(lam, s))
                for s in stems}

    def forward(self, x: torch.Tensor, stems=None):
        """Separate ``(batch, C, N)`` mixtures.

        Returns ``(waveforms, spectrograms)``, each a dict keyed by stem.
        """
        cfg = self.config.stft
        X = stft(x, cfg)
        spec_est = {s: X * m for s, m in self.masks(X, stems).items()}
        wave_est = {s: istft(S, cfg, x.shape[-1]) for s, S in spec_est.items()}
        return wave_est, spec_est

    @torch.no_grad()
    def separate(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Numpy convenience wrapper for a single ``(C, N)`` or ``(N,)`` signal."""
        squeeze = x.ndim == 1
        xt = torch.as_tensor(np.atleast_2d(x), dtype=next(self.parameters()).dtype)[None]
        waves, _ = self(xt)
        return {s: (w[0, 0] if squeeze else w[0]).numpy().astype(x.dtype) for s, w in waves.items()}

    def attach_decoder(self, stem: str, seed: int | None = None) -> None:
        """Add a freshly initialised decoder; encoder tensors are untouched."""
        if stem in self.decoders:
            raise ValueError(f"decoder for stem {stem!r} already attached")
        with torch.random.fork_rng(devices=[]):
            if seed is not None:
                torch.manual_seed(seed)
            decoder = self._new_decoder()
        ref = next(self.parameters())
        self.decoders[stem] = decoder.to(dtype=ref.dtype, device=ref.device)
        self.config = self.config.with_stems(self.stems)

    def detach_decoder(self, stem: str) -> MaskDecoder:
        if stem not in self.decoders:
            raise KeyError(f"no decoder for stem {stem!r}")
        decoder = self.decoders.pop(stem)
        self.config = self.config.with_stems(self.stems)
        return decoder


def set_constant_masks(model: BandSplitNet, value: complex = 1.0) -> None:
    """Force every decoder to emit ``value`` for all inputs (debugging aid).

    Output weights are zeroed and the GLU gates saturated, so the mask is
    exact in float32 and float64.
    """
    with torch.no_grad():
        for decoder in model.decoders.values():
            for est in decoder.bands:
                n = est.channels * est.width
                est.out.weight.zero_()
                bias = est.out.bias
                bias[:n] = complex(value).real
                bias[n:2 * n] = complex(value).imag
                bias[2 * n:] = 40.0


def _numel(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def count_params(model: BandSplitNet, per_module: bool = True):
    """Exact parameter counts; ``decoders`` sums over all attached stems."""
    counts = {
        "embedding": _numel(model.embedding),
        "tf_model": _numel(model.tf_model),
        "decoders": _numel(model.decoders),
    }
    counts.update({f"decoder.{s}": _numel(d) for s, d in model.decoders.items()})
    counts["total"] = _numel(model)
    return counts if per_module else counts["total"]


def expected_param_counts(config: ModelConfig) -> dict[str, int]:
    """Closed-form parameter counts for a configuration."""
    d, h, m, c = config.emb_dim, config.rnn_hidden, config.mlp_hidden, config.channels
    widths = config.band_spec.band_widths
    emb = int(sum(2 * (2 * c * w) + 2 * c * w * d + d for w in widths))
    gru_dir = 3 * (h * d + h * h + 2 * h)
    block = 2 * d + 2 * gru_dir + 2 * h * d + d
    tf = 2 * config.rnn_pairs * block
    per_stem = int(sum(2 * d + d * m + m + m * 4 * c * w + 4 * c * w for w in widths))
    dec = per_stem * len(config.stems)
    return {"embedding": emb, "tf_model": tf, "decoders": dec, "decoder_per_stem": per_stem,
            "total": emb + tf + dec}
