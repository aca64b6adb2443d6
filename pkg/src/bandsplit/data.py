"""Stems, the linear mixing model, corpus indexing and a synthetic 3-stem corpus."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .wavio import load_wav, save_wav, wav_info

log = logging.getLogger(__name__)

DEFAULT_STEM_FILES = {"dialogue": "speech.wav", "music": "music.wav", "effects": "sfx.wav"}
DEFAULT_MIX_FILE = "mix.wav"


@dataclass
class StemSet:
    """Named signals of shape (C, N) sharing channel count, length and rate."""

    fs: int
    stems: dict[str, np.ndarray]

    def __post_init__(self):
        shapes = {k: np.shape(v) for k, v in self.stems.items()}
        if len(set(shapes.values())) > 1:
            raise ValueError(f"stems differ in shape: {shapes}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.stems[name]

    @property
    def names(self) -> list[str]:
        return list(self.stems)

    def sum(self) -> np.ndarray:
        return np.sum(list(self.stems.values()), axis=0)


# --- mixing model -----------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    def __call__(self, u: np.ndarray) -> np.ndarray:
        return u


@dataclass(frozen=True)
class Gain:
    g: float

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.g * u


@dataclass(frozen=True)
class Fir:
    """Causal FIR filter; output truncated to the input length."""

    h: tuple[float, ...]

    def __post_init__(self):
        if len(self.h) < 1:
            raise ValueError("FIR needs at least one coefficient")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        h = np.asarray(self.h, dtype=np.float64)
        return sps.lfilter(h, [1.0], u, axis=-1).astype(u.dtype, copy=False)


@dataclass
class MixSpec:
    """Per-source transforms and the grouping of sources into targets.

    Sources absent from ``groups`` are treated as noise: they enter the
    mixture but no target.
    """

    transforms: dict = field(default_factory=dict)
    groups: dict[str, str] = field(default_factory=dict)


def mix(sources: dict[str, np.ndarray], spec: MixSpec, fs: int | None = None,
        rates: dict[str, int] | None = None) -> tuple[np.ndarray, StemSet]:
    """Apply per-source transforms, sum into a mixture and group into targets."""
    if rates is not None and len(set(rates.values())) > 1:
        raise ValueError(f"sample-rate mismatch across sources: {rates}")
    transformed = {k: spec.transforms.get(k, Identity())(np.asarray(u)) for k, u in sources.items()}
    shapes = {k: v.shape for k, v in transformed.items()}
    if len(set(shapes.values())) > 1:
        raise ValueError(f"length mismatch after transforms: {shapes}")
    unknown = set(spec.groups) - set(sources)
    if unknown:
        raise ValueError(f"grouping names unknown sources: {sorted(unknown)}")
    x = np.sum(list(transformed.values()), axis=0)
    targets: dict[str, np.ndarray] = {}
    for src, tgt in spec.groups.items():
        targets[tgt] = targets[tgt] + transformed[src] if tgt in targets else transformed[src].copy()
    if fs is None:
        fs = next(iter(rates.values())) if rates else 0
    return x, StemSet(fs, targets)


# --- corpus -----------------------------------------------------------------

@dataclass(frozen=True)
class CorpusLayout:
    stems: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_STEM_FILES))
    mix: str = DEFAULT_MIX_FILE


@dataclass(frozen=True)
class Track:
    name: str
    path: Path
    fs: int
    n_samples: int
    channels: int
    stem_files: dict[str, Path]
    mix_file: Path | None

    def load(self) -> tuple[np.ndarray, StemSet]:
        """Return ``(mixture, stems)``; the mixture is the stem sum if no mix file exists."""
        stems = {k: load_wav(p)[0] for k, p in self.stem_files.items()}
        stem_set = StemSet(self.fs, stems)
        if self.mix_file is not None:
            mixture = load_wav(self.mix_file)[0]
        else:
            mixture = stem_set.sum().astype(np.float32)
        return mixture, stem_set


class CorpusError(ValueError):
    pass


def scan_corpus(root, layout: CorpusLayout | None = None, strict: bool = False) -> list[Track]:
    """Index track directories under ``root`` in lexicographic order.

    Tracks with a missing stem file are skipped with a warning (or raise
    :class:`CorpusError` when ``strict``); stems that disagree in length,
    rate or channel count raise :class:`CorpusError`.
    """
    layout = layout or CorpusLayout()
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} is not a directory")
    tracks = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        files = {k: d / f for k, f in layout.stems.items()}
        missing = [f.name for f in files.values() if not f.exists()]
        if missing and strict:
            raise CorpusError(f"track {d.name}: missing {', '.join(missing)}")
        if missing:
            log.warning("skipping track %s: missing %s", d.name, ", ".join(missing))
            continue
        mix_file = d / layout.mix if (d / layout.mix).exists() else None
        infos = {k: wav_info(p) for k, p in files.items()}
        if mix_file is not None:
            infos["<mix>"] = wav_info(mix_file)
        sig = {k: (i.fs, i.n_frames, i.channels) for k, i in infos.items()}
        if len(set(sig.values())) > 1:
            raise CorpusError(f"track {d.name}: inconsistent stems (fs, frames, channels): {sig}")
        fs, n, ch = next(iter(sig.values()))
        tracks.append(Track(d.name, d, fs, n, ch, files, mix_file))
    return tracks


# --- synthetic corpus -------------------------------------------------------

# stem power relative to dialogue, in dB
TOY_LEVELS_DB = {"dialogue": 0.0, "music": -5.1, "effects": -3.2}
TOY_LEVEL_JITTER_DB = 1.5
TOY_DIALOGUE_RMS = 0.08


def _envelope(n: int, attack: int, release: int) -> np.ndarray:
    env = np.ones(n)
    a, r = min(attack, n // 2), min(release, n // 2)
    if a:
        env[:a] = np.linspace(0.0, 1.0, a, endpoint=False)
    if r:
        env[n - r:] = np.linspace(1.0, 0.0, r)
    return env


def _dialogue(rng, duration: float, fs: int) -> np.ndarray:
    n = int(round(duration * fs))
    out = np.zeros(n)
    top = min(3800.0, 0.45 * fs)
    t = rng.uniform(0.0, 0.3)
    f0_base = rng.uniform(100.0, 300.0)
    formants = rng.uniform([300.0, 900.0], [900.0, 2500.0])
    while t < duration:
        dur = rng.uniform(0.15, 0.45)
        start, stop = int(t * fs), min(int((t + dur) * fs), n)
        m = stop - start
        if m > 8:
            tt = np.arange(m) / fs
            f0 = f0_base * (1.0 + rng.uniform(-0.08, 0.08)) * (1.0 + rng.uniform(-0.1, 0.1) * tt / dur)
            phase = 2 * np.pi * np.cumsum(f0) / fs
            formants = np.clip(formants * rng.uniform(0.85, 1.15, 2), 200.0, top)
            word = np.zeros(m)
            for k in range(1, int(top // f0.max()) + 1):
                fk = k * f0.mean()
                gain = sum(np.exp(-0.5 * ((fk - fc) / 180.0) ** 2) for fc in formants) + 0.05 / k
                word += gain * np.sin(k * phase)
            am = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * tt)
            out[start:stop] += word * am * np.hanning(m)
        t += dur + rng.uniform(0.05, 0.35)
    return out


def _music(rng, duration: float, fs: int) -> np.ndarray:
    n = int(round(duration * fs))
    out = np.zeros(n)
    t = 0.0
    while t < duration:
        dur = rng.uniform(0.8, 2.0)
        start, stop = int(t * fs), min(int((t + dur + 0.3) * fs), n)
        m = stop - start
        if m > 8:
            tt = np.arange(m) / fs
            root = rng.integers(45, 70)
            third = 3 if rng.random() < 0.5 else 4
            chord = np.zeros(m)
            for note in (root, root + third, root + 7):
                f = 440.0 * 2.0 ** ((note - 69) / 12.0)
                phases = rng.uniform(0, 2 * np.pi, 5)
                for k in range(1, 6):
                    if k * f < 0.45 * fs:
                        chord += np.sin(2 * np.pi * k * f * tt + phases[k - 1]) / k
            chord *= _envelope(m, int(0.15 * fs), int(0.4 * fs))
            out[start:stop] += chord
        t += dur
    return out


def _effects(rng, duration: float, fs: int) -> np.ndarray:
    n = int(round(duration * fs))
    out = np.zeros(n)
    t = rng.uniform(0.0, 0.4)
    # every event draws the same parameters whatever fs is, so tracks rendered
    # at different rates share their event structure
    while t < duration:
        start = int(t * fs)
        if rng.random() < 0.6:
            dur = rng.uniform(0.1, 0.6)
            lo = rng.uniform(200.0, 2400.0)
            ratio, decay = rng.uniform(1.5, 4.0), rng.uniform(0.05, 0.3)
            noise_rng = np.random.default_rng(rng.integers(2**63))
            m = min(int(dur * fs), n - start)
            if m > 8:
                hi = min(lo * ratio, 0.45 * fs)
                sos = sps.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
                burst = sps.sosfilt(sos, noise_rng.standard_normal(m))
                burst *= np.exp(-np.arange(m) / (decay * fs))
                out[start:start + m] += 3.0 * burst / (np.abs(burst).max() + 1e-12)
        else:
            dur = rng.uniform(0.2, 1.0)
            f_a, f_b = rng.uniform(150.0, 3200.0, 2)
            m = min(int(dur * fs), n - start)
            if m > 8:
                tt = np.arange(m) / fs
                chirp = sps.chirp(tt, f_a, tt[-1], f_b, method="logarithmic")
                out[start:start + m] += chirp * _envelope(m, int(0.02 * fs), int(0.05 * fs))
        t += rng.uniform(0.2, 0.8)
    return out


_STEM_MAKERS = {"dialogue": _dialogue, "music": _music, "effects": _effects}


def synth_track(seed: int, index: int, duration: float, fs: int) -> dict[str, np.ndarray]:
    """Float32 mono stems for one synthetic track."""
    rng = np.random.default_rng([seed, index])
    raw = {}
    for name, maker in _STEM_MAKERS.items():
        raw[name] = maker(np.random.default_rng(rng.integers(2**63)), duration, fs)
    ref = TOY_DIALOGUE_RMS
    jitter = rng.uniform(-TOY_LEVEL_JITTER_DB, TOY_LEVEL_JITTER_DB, len(raw))
    stems = {}
    for (name, x), j in zip(raw.items(), jitter):
        rms = np.sqrt(np.mean(x**2)) + 1e-12
        target = ref * 10.0 ** ((TOY_LEVELS_DB[name] + j) / 20.0)
        stems[name] = (x * target / rms).astype(np.float32)[None, :]
    return stems


def generate_toy_corpus(root, n_tracks: int, duration: float, fs: int, seed: int,
                        layout: CorpusLayout | None = None) -> list[Path]:
    """Write ``n_tracks`` synthetic dialogue/music/effects tracks under ``root``."""
    if fs < 8000:
        raise ValueError(f"fs must be at least 8000 Hz, got {fs}")
    layout = layout or CorpusLayout()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_tracks):
        stems = synth_track(seed, i, duration, fs)
        d = root / f"track_{i:04d}"
        d.mkdir(exist_ok=True)
        for name, x in stems.items():
            save_wav(d / layout.stems[name], x, fs)
        mixture = np.sum([x.astype(np.float64) for x in stems.values()], axis=0).astype(np.float32)
        save_wav(d / layout.mix, mixture, fs)
        paths.append(d)
    return paths
