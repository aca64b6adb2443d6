"""Run configuration: one JSON document with stft/bands/model/train/loss/data/eval sections."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .bands import BandSpec, build_band_spec, load_band_spec
from .data import CorpusLayout
from .dsp import ChunkPlan, StftConfig
from .losses import LossConfig
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StftSection:
    n_fft: int = 2048
    hop: int = 512
    fs: int = 44100


@dataclass(frozen=True)
class BandsSection:
    kind: str = "mel"
    num_bands: int = 64
    file: str | None = None


@dataclass(frozen=True)
class ModelSection:
    emb_dim: int = 128
    rnn_pairs: int = 8
    mlp_hidden: int | None = None
    channels: int = 1
    stems: tuple[str, ...] = ("dialogue", "music", "effects")


@dataclass(frozen=True)
class TrainSection:
    lr: float = 1e-3
    decay: float = 0.98
    decay_every: int = 2
    clip_norm: float = 5.0
    epochs: int = 100
    samples_per_epoch: int = 20000
    batch_size: int = 2
    chunk_len: float = 6.0
    seed: int = 0
    freeze_encoder: bool = False
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8


@dataclass(frozen=True)
class LossSection:
    kind: str = "l1snr"
    epsilon: float = 1e-3
    term_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class DataSection:
    stem_files: dict = field(default_factory=lambda: dict(CorpusLayout().stems))
    mix_file: str = "mix.wav"
    toy_tracks: int = 200
    toy_duration: float = 4.0
    toy_seed: int = 0
    composites: dict = field(default_factory=lambda: {"music_and_effects": ["music", "effects"]})


@dataclass(frozen=True)
class EvalSection:
    chunk_len: float = 6.0
    hop_len: float = 0.5
    valid_chunk_len: float = 6.0
    valid_hop_len: float = 1.0
    si_snr_zero_mean: bool = False


_SECTIONS = {
    "stft": StftSection, "bands": BandsSection, "model": ModelSection, "train": TrainSection,
    "loss": LossSection, "data": DataSection, "eval": EvalSection,
}


def _section(cls, doc, name: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {sorted(unknown)}")
    kwargs = {}
    for k, v in doc.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return cls(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    stft: StftSection = field(default_factory=StftSection)
    bands: BandsSection = field(default_factory=BandsSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    loss: LossSection = field(default_factory=LossSection)
    data: DataSection = field(default_factory=DataSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(doc) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {sorted(unknown)}")
        cfg = cls(**{k: _section(_SECTIONS[k], v, k) for k, v in doc.items()})
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        text = resources.files("bandsplit.presets").joinpath(f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        try:
            self.stft_config()
            self.loss_config()
            self.train_config()
            ChunkPlan.test(self.eval.chunk_len, self.eval.hop_len)
            ChunkPlan.valid(self.eval.valid_chunk_len, self.eval.valid_hop_len)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.model.emb_dim < 1 or self.model.rnn_pairs < 0 or not self.model.stems:
            raise ConfigError("model needs emb_dim >= 1, rnn_pairs >= 0 and at least one stem")
        if self.bands.file is None and self.bands.num_bands < 2:
            raise ConfigError("bands.num_bands must be at least 2")

    def stft_config(self) -> StftConfig:
        return StftConfig(self.stft.n_fft, self.stft.hop, self.stft.fs)

    def band_spec(self) -> BandSpec:
        if self.bands.file:
            spec = load_band_spec(self.bands.file)
            if spec.n_fft != self.stft.n_fft or spec.fs != self.stft.fs:
                raise ConfigError("band file does not match stft.n_fft / stft.fs")
            return spec
        return build_band_spec(self.bands.kind, self.stft.fs, self.stft.n_fft, self.bands.num_bands)

    def model_config(self) -> ModelConfig:
        m = self.model
        return ModelConfig(self.band_spec(), m.stems, self.stft.hop, m.emb_dim, m.rnn_pairs,
                           m.mlp_hidden, m.channels)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.loss.kind, self.loss.epsilon, self.loss.term_weights)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(t.lr, t.decay, t.decay_every, t.clip_norm, t.epochs, t.samples_per_epoch,
                           t.batch_size, t.chunk_len, t.seed, t.freeze_encoder, t.betas, t.adam_eps,
                           self.loss_config())

    def layout(self) -> CorpusLayout:
        return CorpusLayout(dict(self.data.stem_files), self.data.mix_file)

    def test_plan(self) -> ChunkPlan:
        return ChunkPlan.test(self.eval.chunk_len, self.eval.hop_len)

    def valid_plan(self) -> ChunkPlan:
        return ChunkPlan.valid(self.eval.valid_chunk_len, self.eval.valid_hop_len)
