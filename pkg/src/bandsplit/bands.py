"""Overlapping band definitions built from psychoacoustic filterbanks.

A :class:`BandSpec` holds a column-normalised weight matrix ``W`` (bands x
bins). Band membership is the binarisation ``W[b] > 0``; the same weights are
used to recombine bandwise masks into a full-band mask.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .scales import FrequencyScale, ScaleKind, center_frequencies, hz_to_scale, scale_to_hz

COLUMN_SUM_TOL = 1e-4


class BandKind(str, enum.Enum):
    MEL = "mel"
    TRIBARK = "tribark"
    BARK = "bark"
    ERB = "erb"
    MUSICAL = "musical"
    CUSTOM = "custom"


_SCALE_OF = {
    BandKind.MEL: ScaleKind.MEL,
    BandKind.TRIBARK: ScaleKind.BARK,
    BandKind.BARK: ScaleKind.BARK,
    BandKind.ERB: ScaleKind.ERB,
    BandKind.MUSICAL: ScaleKind.MUSICAL,
}


class BandSpecError(ValueError):
    """Invalid band configuration or band-spec document."""


@dataclass(frozen=True, eq=False)
class BandSpec:
    kind: BandKind
    fs: float
    n_fft: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", BandKind(self.kind))
        w = np.array(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        _validate(self)

    @property
    def n_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]

    @cached_property
    def bins(self) -> list[np.ndarray]:
        """Sorted bin indices of each band (``W[b] > 0``)."""
        return [np.flatnonzero(row > 0) for row in self.weights]

    @property
    def band_widths(self) -> np.ndarray:
        return np.array([len(b) for b in self.bins])

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.fs / self.n_fft

    def band_table(self) -> list[tuple[int, float, float, int]]:
        """Rows of (band, f_lo_hz, f_hi_hz, width_bins)."""
        freqs = self.bin_frequencies()
        return [(b, float(freqs[idx[0]]), float(freqs[idx[-1]]), len(idx))
                for b, idx in enumerate(self.bins)]


def _validate(spec: BandSpec) -> None:
    w = spec.weights
    if w.ndim != 2:
        raise BandSpecError(f"weights must be 2-D, got shape {w.shape}")
    if spec.n_fft % 2:
        raise BandSpecError(f"n_fft must be even, got {spec.n_fft}")
    if w.shape[1] != spec.n_fft // 2 + 1:
        raise BandSpecError(
            f"weights have {w.shape[1]} bins, expected n_fft/2+1 = {spec.n_fft // 2 + 1}"
        )
    if not np.all(np.isfinite(w)) or w.min() < 0 or w.max() > 1:
        raise BandSpecError("weights must be finite and lie in [0, 1]")
    empty = np.flatnonzero(~(w > 0).any(axis=1))
    if empty.size:
        raise BandSpecError(f"band {int(empty[0])} contains no frequency bins")
    colsum = w.sum(axis=0)
    uncovered = np.flatnonzero(colsum == 0)
    if uncovered.size:
        raise BandSpecError(f"uncovered bin {int(uncovered[0])}: no band has positive weight")
    bad = np.flatnonzero(np.abs(colsum - 1.0) > COLUMN_SUM_TOL)
    if bad.size:
        f = int(bad[0])
        raise BandSpecError(f"column sum at bin {f} is {colsum[f]:.6g}, expected 1")


def _triangles(edges_hz: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    lo, mid, hi = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def _bark_masking(z_bins: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # critical-band masking curve: flat +-0.5 Bark, 25 dB/Bark lower and
    # upper skirts ending at -2.5 / +1.3 Bark from the centre
    d = z_bins[None, :] - centers[:, None]
    w = np.zeros_like(d)
    lower = (d >= -2.5) & (d <= -0.5)
    upper = (d >= 0.5) & (d <= 1.3)
    w[lower] = 10.0 ** (2.5 * (d[lower] + 0.5))
    w[(d > -0.5) & (d < 0.5)] = 1.0
    w[upper] = 10.0 ** (-2.5 * (d[upper] - 0.5))
    return w


def _rectangles(edges_hz: np.ndarray, bin_hz: float, n_bins: int) -> np.ndarray:
    n_bands = len(edges_hz) - 2
    w = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo = int(np.floor(edges_hz[b] / bin_hz + 1e-9))
        hi = int(np.ceil(edges_hz[b + 2] / bin_hz - 1e-9))
        if b == 0:
            lo = 0
        if b == n_bands - 1:
            hi = n_bins - 1
        w[b, lo:hi + 1] = 1.0
    return w


def build_band_spec(kind, fs: float, n_fft: int, n_bands: int) -> BandSpec:
    """Construct, rescue, normalise and binarise a built-in filterbank."""
    kind = BandKind(kind)
    if kind is BandKind.CUSTOM:
        raise BandSpecError("custom band specs are loaded from file, not built")
    if n_bands < 2:
        raise BandSpecError(f"need at least 2 bands, got {n_bands}")
    if n_fft % 2 or n_fft <= 0:
        raise BandSpecError(f"n_fft must be positive and even, got {n_fft}")
    if fs <= 0:
        raise BandSpecError(f"fs must be positive, got {fs}")

    scale = FrequencyScale(_SCALE_OF[kind], fs, n_fft)
    n_bins = n_fft // 2 + 1
    freqs = np.arange(n_bins) * fs / n_fft
    zeta = center_frequencies(scale, n_bands)
    z_bins = hz_to_scale(scale, freqs)

    if kind is BandKind.BARK:
        raw = _bark_masking(z_bins, zeta[1:-1])
    elif kind is BandKind.MUSICAL:
        raw = _rectangles(scale_to_hz(scale, zeta), fs / n_fft, n_bins)
    else:
        raw = _triangles(scale_to_hz(scale, zeta), freqs)

    empty = np.flatnonzero(~(raw > 0).any(axis=1))
    if empty.size:
        b = int(empty[0])
        raise BandSpecError(
            f"band {b} contains no FFT bins ({kind.value}, B={n_bands}, "
            f"fs={fs}, n_fft={n_fft}); reduce the band count"
        )

    for f in np.flatnonzero(raw.sum(axis=0) == 0):
        raw[np.argmin(np.abs(zeta[1:-1] - z_bins[f])), f] = 1.0

    weights = raw / raw.sum(axis=0, keepdims=True)
    return BandSpec(kind, fs, n_fft, weights)


def custom_band_spec(bands: list[range | list[int]], fs: float, n_fft: int) -> BandSpec:
    """Spec from explicit bin sets; shared bins are split evenly between bands."""
    n_bins = n_fft // 2 + 1
    raw = np.zeros((len(bands), n_bins))
    for b, idx in enumerate(bands):
        raw[b, list(idx)] = 1.0
    colsum = raw.sum(axis=0, keepdims=True)
    if np.any(colsum == 0):
        raise BandSpecError(f"uncovered bin {int(np.flatnonzero(colsum[0] == 0)[0])}")
    return BandSpec(BandKind.CUSTOM, fs, n_fft, raw / colsum)


def split(spec: BandSpec, X):
    """Slice a spectrogram ``(..., F, T)`` into per-band views ``(..., F_b, T)``."""
    if X.shape[-2] != spec.n_bins:
        raise ValueError(f"spectrogram has {X.shape[-2]} bins, band spec expects {spec.n_bins}")
    return [X[..., idx, :] for idx in spec.bins]


def to_dict(spec: BandSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "fs": spec.fs,
        "n_fft": spec.n_fft,
        "B": spec.n_bands,
        "weights": spec.weights.tolist(),
    }


def from_dict(doc: dict) -> BandSpec:
    missing = {"kind", "fs", "n_fft", "B", "weights"} - doc.keys()
    if missing:
        raise BandSpecError(f"band spec missing keys: {sorted(missing)}")
    n_fft = int(doc["n_fft"])
    w = np.asarray(doc["weights"], dtype=np.float64)
    if w.ndim == 1:
        w = w.reshape(int(doc["B"]), n_fft // 2 + 1)
    if w.shape[0] != int(doc["B"]):
        raise BandSpecError(f"B={doc['B']} but weights have {w.shape[0]} rows")
    try:
        kind = BandKind(doc["kind"])
    except ValueError as exc:
        raise BandSpecError(f"unknown band kind {doc['kind']!r}") from exc
    return BandSpec(kind, float(doc["fs"]), n_fft, w)


def save_band_spec(spec: BandSpec, path) -> None:
    Path(path).write_text(json.dumps(to_dict(spec)))


def load_band_spec(path) -> BandSpec:
    return from_dict(json.loads(Path(path).read_text()))


def band_table_csv(spec: BandSpec) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["band", "f_lo_hz", "f_hi_hz", "width_bins"])
    writer.writerows(spec.band_table())
    return buf.getvalue()
