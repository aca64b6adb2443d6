"""SNR / SI-SNR metrics, oracle separators and corpus evaluation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import StemSet, Track
from .dsp import ChunkPlan, StftConfig, chunk_offsets, istft, overlap_add, stft

MASK_EPS = 1e-8
# residual energy this far below the signal counts as an exact match
_EXACT_RATIO = 1e-20


class UndefinedReferenceError(ValueError):
    pass


def _ratio_db(signal_energy: float, error_energy: float) -> float:
    if error_energy <= _EXACT_RATIO * signal_energy:
        return math.inf
    if signal_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(signal_energy / error_energy)


def snr(s_hat, s) -> float:
    """10 log10(||s||^2 / ||s_hat - s||^2); +inf for an exact match."""
    s_hat = np.asarray(s_hat, dtype=np.float64).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    if s_hat.shape != s.shape:
        raise ValueError(f"length mismatch {s_hat.shape} vs {s.shape}")
    sig = float(np.dot(s, s))
    if sig == 0.0:
        raise UndefinedReferenceError("SNR is undefined for an all-zero reference")
    err = s_hat - s
    return _ratio_db(sig, float(np.dot(err, err)))


def si_snr(s_hat, s, zero_mean: bool = False) -> float:
    """Scale-invariant SNR; -inf when s_hat is orthogonal to s.

    No mean removal unless ``zero_mean`` is set.
    """
    s_hat = np.asarray(s_hat, dtype=np.float64).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    if s_hat.shape != s.shape:
        raise ValueError(f"length mismatch {s_hat.shape} vs {s.shape}")
    if zero_mean:
        s_hat, s = s_hat - s_hat.mean(), s - s.mean()
    ref = float(np.dot(s, s))
    if ref == 0.0:
        raise UndefinedReferenceError("SI-SNR is undefined for an all-zero reference")
    target = (np.dot(s_hat, s) / ref) * s
    e = s_hat - target
    return _ratio_db(float(np.dot(target, target)), float(np.dot(e, e)))


# --- separators ---------------------------------------------------------------

Separator = Callable[..., dict]


@dataclass
class PassThrough:
    """Every stem estimate is the mixture itself."""

    stems: tuple[str, ...]
    needs_targets: bool = False

    def __call__(self, mixture, targets=None):
        return {s: np.array(mixture, copy=True) for s in self.stems}


def irm_masks(X: np.ndarray, S: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    mags = {k: np.abs(v) for k, v in S.items()}
    denom = np.sum(list(mags.values()), axis=0) + MASK_EPS
    return {k: m / denom for k, m in mags.items()}


def psf_masks(X: np.ndarray, S: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    mag_x, ang_x = np.abs(X), np.angle(X)
    return {k: np.clip(np.abs(v) / (mag_x + MASK_EPS) * np.cos(np.angle(v) - ang_x), 0.0, 1.0)
            for k, v in S.items()}


@dataclass
class _OracleMask:
    cfg: StftConfig
    needs_targets: bool = field(default=True, init=False)
    mask_fn = None

    def __call__(self, mixture, targets):
        mixture = np.asarray(mixture, dtype=np.float64)
        X = stft(mixture, self.cfg)
        S = {k: stft(np.asarray(v, dtype=np.float64), self.cfg) for k, v in targets.items()}
        masks = type(self).mask_fn(X, S)
        return {k: istft(X * m, self.cfg, mixture.shape[-1]) for k, m in masks.items()}


class OracleIRM(_OracleMask):
    """Ideal ratio mask |S_i| / sum_j |S_j| applied to the mixture."""

    mask_fn = staticmethod(irm_masks)


class OraclePSF(_OracleMask):
    """Phase-sensitive filter |S|/|X| cos(angle difference), clipped to [0, 1]."""

    mask_fn = staticmethod(psf_masks)


def oracle_irm(mixture, targets: StemSet, cfg: StftConfig) -> StemSet:
    return StemSet(targets.fs, OracleIRM(cfg)(mixture, targets.stems))


def oracle_psf(mixture, targets: StemSet, cfg: StftConfig) -> StemSet:
    return StemSet(targets.fs, OraclePSF(cfg)(mixture, targets.stems))


# --- reports ----------------------------------------------------------------

@dataclass
class EvalReport:
    """Per-track, per-stem metrics with corpus means.

    Infinite values are excluded from the means and counted in ``n_infinite``.
    """

    tracks: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)

    METRICS = ("snr_db", "si_snr_db")

    def add(self, track: str, stem: str, snr_db: float, si_snr_db: float) -> None:
        self.tracks.setdefault(track, {})[stem] = {"snr_db": snr_db, "si_snr_db": si_snr_db}

    @property
    def stems(self) -> list[str]:
        seen: dict[str, None] = {}
        for per in self.tracks.values():
            seen.update(dict.fromkeys(per))
        return list(seen)

    def values(self, stem: str, metric: str) -> list[float]:
        return [per[stem][metric] for per in self.tracks.values() if stem in per]

    def stem_means(self) -> dict[str, dict[str, float]]:
        out = {}
        for stem in self.stems:
            out[stem] = {}
            for metric in self.METRICS:
                vals = [v for v in self.values(stem, metric) if math.isfinite(v)]
                out[stem][metric] = float(np.mean(vals)) if vals else math.nan
        return out

    def averages(self) -> dict[str, float]:
        means = self.stem_means()
        return {m: float(np.mean([means[s][m] for s in means])) for m in self.METRICS}

    def n_infinite(self) -> int:
        return sum(not math.isfinite(v) for s in self.stems for m in self.METRICS
                   for v in self.values(s, m))

    def to_dict(self) -> dict:
        def enc(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
        return {
            "tracks": {t: {s: {m: enc(v) for m, v in d.items()} for s, d in per.items()}
                       for t, per in self.tracks.items()},
            "stem_means": self.stem_means(),
            "averages": self.averages(),
            "n_infinite": self.n_infinite(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["track", "stem", "snr_db", "si_snr_db"])
        for t, per in self.tracks.items():
            for s, d in per.items():
                w.writerow([t, s, repr(d["snr_db"]), repr(d["si_snr_db"])])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        report = cls()
        for t, per in doc["tracks"].items():
            for s, d in per.items():
                report.add(t, s, float(d["snr_db"]), float(d["si_snr_db"]))
        return report


def separate_track(separator, mixture: np.ndarray, targets: dict[str, np.ndarray] | None,
                   fs: float, plan: ChunkPlan | None) -> dict[str, np.ndarray]:
    """Chunk the mixture (and targets), separate each chunk, overlap-add per stem."""
    needs_targets = getattr(separator, "needs_targets", False)
    n = mixture.shape[-1]
    if plan is None:
        return separator(mixture, targets) if needs_targets else separator(mixture)
    size, hop = plan.samples(fs)
    if n <= size:
        return separator(mixture, targets) if needs_targets else separator(mixture)
    outputs = []
    offsets = chunk_offsets(n, size, hop, pad_tail=True)

    def cut(a, off):
        seg = a[..., off:off + size]
        if seg.shape[-1] < size:
            seg = np.pad(seg, [(0, 0)] * (a.ndim - 1) + [(0, size - seg.shape[-1])])
        return seg

    for off in offsets:
        m = cut(mixture, off)
        if needs_targets:
            outputs.append(separator(m, {k: cut(v, off) for k, v in targets.items()}))
        else:
            outputs.append(separator(m))
    return {s: overlap_add([(off, o[s]) for off, o in zip(offsets, outputs)], n)
            for s in outputs[0]}


def evaluate_corpus(separator, tracks: list[Track], plan: ChunkPlan | None,
                    stems: list[str] | None = None,
                    composites: dict[str, list[str]] | None = None) -> EvalReport:
    """Separate each full track and score every requested stem.

    ``composites`` maps a target name to the stems it sums, e.g.
    ``{"music_and_effects": ["music", "effects"]}``.
    """
    report = EvalReport()
    for track in tracks:
        mixture, stem_set = track.load()
        est = separate_track(separator, mixture, stem_set.stems, track.fs, plan)
        targets = dict(stem_set.stems)
        for name, parts in (composites or {}).items():
            targets[name] = np.sum([targets[p] for p in parts], axis=0)
            if name not in est and all(p in est for p in parts):
                est[name] = np.sum([est[p] for p in parts], axis=0)
        for stem in stems or list(est):
            report.add(track.name, stem, snr(est[stem], targets[stem]), si_snr(est[stem], targets[stem]))
    return report
