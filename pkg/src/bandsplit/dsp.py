"""STFT/iSTFT and chunked overlap-add inference.

The STFT is Hann-windowed, centred (reflect padding) and scaled so that the
one-sided spectrogram carries the same energy as the time signal. That keeps
waveform and spectrogram loss terms on a comparable scale.

Functions accept numpy arrays or torch tensors and return the same kind.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import torch


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 2048
    hop: int = 512
    fs: float = 44100.0
    window: str = "hann"

    def __post_init__(self):
        if self.n_fft % 2:
            raise ValueError(f"n_fft must be even, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ValueError(f"hop must be in (0, n_fft], got {self.hop}")
        if self.window != "hann":
            raise ValueError(f"only the Hann window is supported, got {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return n_samples // self.hop + 1

    @property
    def scale(self) -> float:
        # Parseval: full-spectrum energy is n_fft * sum(w^2) / hop times the
        # signal energy; the one-sided half holds ~1/2 of it.
        w = torch.hann_window(self.n_fft, periodic=True, dtype=torch.float64)
        return math.sqrt(2.0 * self.hop / (self.n_fft * float((w**2).sum())))


def _window(cfg: StftConfig, ref: torch.Tensor) -> torch.Tensor:
    dtype = ref.real.dtype if ref.is_complex() else ref.dtype
    return torch.hann_window(cfg.n_fft, periodic=True, dtype=dtype, device=ref.device)


def _to_torch(x):
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.from_numpy(np.ascontiguousarray(x)), True


def stft(x, cfg: StftConfig):
    """Spectrogram of shape ``(..., F, T)`` for signals of shape ``(..., N)``."""
    xt, was_numpy = _to_torch(x)
    n = xt.shape[-1]
    if n < cfg.n_fft:
        raise ValueError(f"signal of {n} samples is shorter than one frame ({cfg.n_fft})")
    lead = xt.shape[:-1]
    spec = torch.stft(
        xt.reshape(-1, n), cfg.n_fft, cfg.hop, window=_window(cfg, xt),
        center=True, pad_mode="reflect", normalized=False, return_complex=True,
    )
    spec = spec.reshape(*lead, *spec.shape[-2:]) * cfg.scale
    return spec.numpy() if was_numpy else spec


def istft(S, cfg: StftConfig, length: int):
    """Least-squares overlap-add inverse of :func:`stft`."""
    st, was_numpy = _to_torch(S)
    if st.shape[-2] != cfg.n_bins:
        raise ValueError(f"spectrogram has {st.shape[-2]} bins, config expects {cfg.n_bins}")
    n_frames = st.shape[-1]
    if length > (n_frames - 1) * cfg.hop + cfg.n_fft // 2 or length < 1:
        raise ValueError(f"{n_frames} frames cannot cover {length} output samples")
    lead = st.shape[:-2]
    flat = st.reshape(-1, *st.shape[-2:]) / cfg.scale
    y = torch.istft(flat, cfg.n_fft, cfg.hop, window=_window(cfg, st),
                    center=True, normalized=False, length=length)
    y = y.reshape(*lead, length)
    return y.numpy() if was_numpy else y


class ChunkMode(str, enum.Enum):
    TRAIN_RANDOM = "train_random"
    VALID_EXHAUSTIVE = "valid_exhaustive"
    TEST_OVERLAP_ADD = "test_overlap_add"


@dataclass(frozen=True)
class ChunkPlan:
    chunk_len: float = 6.0
    hop_len: float = 1.0
    mode: ChunkMode = ChunkMode.VALID_EXHAUSTIVE

    def __post_init__(self):
        object.__setattr__(self, "mode", ChunkMode(self.mode))
        if self.chunk_len <= 0 or self.hop_len <= 0:
            raise ValueError("chunk and hop lengths must be positive")
        if self.hop_len > self.chunk_len:
            raise ValueError("hop_len must not exceed chunk_len")
        if self.mode is ChunkMode.TEST_OVERLAP_ADD and self.hop_len >= self.chunk_len:
            raise ValueError("overlap-add needs hop_len < chunk_len")

    @classmethod
    def train(cls, chunk_len: float = 6.0) -> "ChunkPlan":
        return cls(chunk_len, chunk_len, ChunkMode.TRAIN_RANDOM)

    @classmethod
    def valid(cls, chunk_len: float = 6.0, hop_len: float = 1.0) -> "ChunkPlan":
        return cls(chunk_len, hop_len, ChunkMode.VALID_EXHAUSTIVE)

    @classmethod
    def test(cls, chunk_len: float = 6.0, hop_len: float = 0.5) -> "ChunkPlan":
        return cls(chunk_len, hop_len, ChunkMode.TEST_OVERLAP_ADD)

    def samples(self, fs: float) -> tuple[int, int]:
        return int(round(self.chunk_len * fs)), int(round(self.hop_len * fs))


def chunk_offsets(n_samples: int, chunk: int, hop: int, pad_tail: bool) -> list[int]:
    if n_samples < chunk:
        raise ValueError(f"track of {n_samples} samples is shorter than a chunk ({chunk})")
    offsets = list(range(0, n_samples - chunk + 1, hop))
    if pad_tail and offsets[-1] + chunk < n_samples:
        offsets.append(offsets[-1] + hop)
    return offsets


def chunk(x: np.ndarray, plan: ChunkPlan, fs: float,
          rng: np.random.Generator | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(offset, segment)`` pairs along the last axis of ``x``.

    Random mode yields indefinitely; overlap-add mode zero-pads the last
    partial chunk.
    """
    n = x.shape[-1]
    size, hop = plan.samples(fs)
    if n < size:
        raise ValueError(f"track of {n} samples is shorter than a chunk ({size})")
    if plan.mode is ChunkMode.TRAIN_RANDOM:
        rng = rng if rng is not None else np.random.default_rng()
        while True:
            off = int(rng.integers(0, n - size + 1))
            yield off, x[..., off:off + size]
        return
    pad_tail = plan.mode is ChunkMode.TEST_OVERLAP_ADD
    for off in chunk_offsets(n, size, hop, pad_tail):
        seg = x[..., off:off + size]
        if seg.shape[-1] < size:
            pad = [(0, 0)] * (x.ndim - 1) + [(0, size - seg.shape[-1])]
            seg = np.pad(seg, pad)
        yield off, seg


def overlap_add(chunks: list[tuple[int, np.ndarray]], total_len: int) -> np.ndarray:
    """Hann-weighted overlap-add with window-sum compensation.

    The first half of the first chunk and the last half of the last chunk use
    a flat window so the signal edges are not attenuated.
    """
    if not chunks:
        raise ValueError("no chunks to recombine")
    chunks = sorted(chunks, key=lambda c: c[0])
    size = chunks[0][1].shape[-1]
    lead = chunks[0][1].shape[:-1]
    out = np.zeros((*lead, total_len), dtype=np.float64)
    wsum = np.zeros(total_len, dtype=np.float64)
    covered = np.zeros(total_len, dtype=bool)
    base = np.hanning(size)
    half = size // 2
    for k, (off, seg) in enumerate(chunks):
        if seg.shape[-1] != size:
            raise ValueError("all chunks must have the same length")
        w = base.copy()
        if k == 0:
            w[:half] = 1.0
        if k == len(chunks) - 1:
            w[half:] = 1.0
        stop = min(off + size, total_len)
        n = stop - off
        out[..., off:stop] += seg[..., :n] * w[:n]
        wsum[off:stop] += w[:n]
        covered[off:stop] = True
    if not covered.all():
        gap = int(np.flatnonzero(~covered)[0])
        raise ValueError(f"chunks leave sample {gap} uncovered")
    return out / np.maximum(wsum, 1e-8)


def separate_chunked(separator: Callable[[np.ndarray], dict[str, np.ndarray]],
                     x: np.ndarray, fs: float, plan: ChunkPlan,
                     workers: int = 1) -> dict[str, np.ndarray]:
    """Run ``separator`` on overlapping chunks of ``x`` and recombine per stem.

    Chunks may be processed concurrently; recombination order is fixed by
    chunk offset, so the result does not depend on ``workers``.
    """
    if plan.mode is not ChunkMode.TEST_OVERLAP_ADD:
        plan = ChunkPlan(plan.chunk_len, plan.hop_len, ChunkMode.TEST_OVERLAP_ADD)
    n = x.shape[-1]
    size, _ = plan.samples(fs)
    if n <= size:
        padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, size - n)])
        return {k: v[..., :n] for k, v in separator(padded).items()}
    pieces = list(chunk(x, plan, fs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outputs = list(pool.map(lambda p: separator(p[1]), pieces))
    else:
        outputs = [separator(seg) for _, seg in pieces]
    stems = outputs[0].keys()
    return {
        name: overlap_add([(off, out[name]) for (off, _), out in zip(pieces, outputs)], n)
        for name in stems
    }
