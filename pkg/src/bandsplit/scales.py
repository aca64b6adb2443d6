"""Closed-form frequency scales (Hz <-> scale units) and the band-center grid."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_ERB_A = 4.37e-3
_ERB_B = 24.7 * _ERB_A


class ScaleKind(str, enum.Enum):
    MEL = "mel"
    BARK = "bark"
    ERB = "erb"
    MUSICAL = "musical"


def _mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_inv(z):
    return 700.0 * (10.0 ** (z / 2595.0) - 1.0)


def _bark(f):
    return 6.0 * np.arcsinh(f / 600.0)


def _bark_inv(z):
    return 600.0 * np.sinh(z / 6.0)


def _erb(f):
    return np.log1p(_ERB_A * f) / _ERB_B


def _erb_inv(z):
    return np.expm1(z * _ERB_B) / _ERB_A


def midi_number(f, f_ref: float = 440.0):
    """Unrounded MIDI note number (no clamp)."""
    with np.errstate(divide="ignore"):
        return 69.0 + 12.0 * np.log2(np.asarray(f, dtype=np.float64) / f_ref)


def _midi_inv(z, f_ref: float = 440.0):
    return f_ref * 2.0 ** ((z - 69.0) / 12.0)


_FORWARD = {ScaleKind.MEL: _mel, ScaleKind.BARK: _bark, ScaleKind.ERB: _erb}
_INVERSE = {ScaleKind.MEL: _mel_inv, ScaleKind.BARK: _bark_inv, ScaleKind.ERB: _erb_inv}


@dataclass(frozen=True)
class FrequencyScale:
    """A frequency scale bound to a sampling rate and FFT size.

    ``z_min`` is 0 for mel/Bark/ERB; for the musical scale it is the MIDI
    number of the first non-DC FFT bin, and all lower frequencies clamp to it.
    """

    kind: ScaleKind
    fs: float
    n_fft: int
    f_ref: float = 440.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScaleKind(self.kind))
        if self.fs <= 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.n_fft < 2:
            raise ValueError(f"n_fft must be >= 2, got {self.n_fft}")

    @property
    def nyquist(self) -> float:
        return 0.5 * self.fs

    @property
    def z_min(self) -> float:
        if self.kind is ScaleKind.MUSICAL:
            return float(midi_number(self.fs / self.n_fft, self.f_ref))
        return 0.0

    @property
    def z_max(self) -> float:
        return float(self._raw(self.nyquist))

    def _raw(self, f):
        if self.kind is ScaleKind.MUSICAL:
            return np.maximum(self.z_min, midi_number(f, self.f_ref))
        return _FORWARD[self.kind](f)


def hz_to_scale(scale: FrequencyScale, f):
    """Map frequencies in Hz (0 <= f <= fs/2) to scale units."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0) or np.any(f_arr > scale.nyquist):
        raise ValueError(
            f"frequency outside [0, {scale.nyquist}] Hz for {scale.kind.value} scale"
        )
    z = scale._raw(f_arr)
    return float(z) if np.ndim(z) == 0 else z


def scale_to_hz(scale: FrequencyScale, z):
    """Inverse map on the unclamped branch; ``z`` must lie in [z_min, z_max]."""
    z_arr = np.asarray(z, dtype=np.float64)
    tol = 1e-9 * max(1.0, abs(scale.z_max))
    if np.any(z_arr < scale.z_min - tol) or np.any(z_arr > scale.z_max + tol):
        raise ValueError(
            f"scale value outside [{scale.z_min}, {scale.z_max}] "
            f"for {scale.kind.value} scale"
        )
    if scale.kind is ScaleKind.MUSICAL:
        f = _midi_inv(z_arr, scale.f_ref)
    else:
        f = _INVERSE[scale.kind](z_arr)
    return float(f) if np.ndim(f) == 0 else f


def center_frequencies(scale: FrequencyScale, n_bands: int) -> np.ndarray:
    """Band centres in scale units for indices -1..n_bands (n_bands + 2 values).

    Entry ``n + 1`` is the centre of band ``n``; entries 0 and -1 are the
    outer edge anchors. The grid is linear between ``z_min`` and ``z_max``.
    """
    if n_bands < 1:
        raise ValueError(f"need at least one band, got {n_bands}")
    n = np.arange(-1, n_bands + 1)
    return scale.z_min + (scale.z_max - scale.z_min) * (n + 1) / (n_bands + 2)
