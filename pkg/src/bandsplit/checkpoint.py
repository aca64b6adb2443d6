"""Checkpoints: safetensors archive of float32 tensors with embedded configs.

The header metadata holds one JSON document (key ``bandsplit``) with the
format tag, the model configuration and the band definition. Tensor
names are the module paths of :class:`~bandsplit.model.BandSplitNet`,
e.g. ``embedding.fcs.3.weight``, ``tf_model.time_rnns.0.rnn.weight_hh_l0``
or ``decoders.music.bands.7.out.bias``. Optimizer and loop state, when
present, live next to the archive in ``<name>.state.pt``.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from safetensors import safe_open
from safetensors.torch import save_file

from . import bands
from .model import BandSplitNet, ModelConfig
from .train import TrainState

FORMAT = "bandsplit-checkpoint/1"
META_KEY = "bandsplit"


class CheckpointError(ValueError):
    pass


def _config_doc(cfg: ModelConfig) -> dict:
    return {"stems": list(cfg.stems), "hop": cfg.hop, "emb_dim": cfg.emb_dim,
            "rnn_pairs": cfg.rnn_pairs, "mlp_hidden": cfg.mlp_hidden, "channels": cfg.channels}


def state_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".state.pt")


def save_checkpoint(path, model: BandSplitNet, state: TrainState | None = None,
                    optimizer: torch.optim.Optimizer | None = None) -> None:
    tensors = {k: v.detach().to(torch.float32).contiguous() for k, v in model.state_dict().items()}
    # a single key keeps the header byte-stable (multi-key metadata is hash-ordered)
    doc = {"format": FORMAT, "model_config": _config_doc(model.config),
           "band_spec": bands.to_dict(model.config.band_spec)}
    save_file(tensors, str(path), metadata={META_KEY: json.dumps(doc, sort_keys=True)})
    if state is not None:
        torch.save({
            "step": state.step, "epoch": state.epoch, "trace": state.trace,
            "rng_state": state.rng_state,
            "optimizer": optimizer.state_dict() if optimizer is not None else None,
        }, state_path(path))


def load_checkpoint(path, dtype=torch.float32) -> BandSplitNet:
    try:
        with safe_open(str(path), framework="pt") as fh:
            meta = json.loads((fh.metadata() or {}).get(META_KEY, "{}"))
            if meta.get("format") != FORMAT:
                raise CheckpointError(f"{path}: not a {FORMAT} file")
            tensors = {k: fh.get_tensor(k) for k in fh.keys()}
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    spec = bands.from_dict(meta["band_spec"])
    doc = meta["model_config"]
    cfg = ModelConfig(spec, tuple(doc["stems"]), doc["hop"], doc["emb_dim"], doc["rnn_pairs"],
                      doc["mlp_hidden"], doc["channels"])
    model = BandSplitNet(cfg).to(dtype)
    try:
        model.load_state_dict({k: v.to(dtype) for k, v in tensors.items()})
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint tensors do not match its config: {exc}") from exc
    return model


def load_state(path) -> tuple[TrainState, dict | None] | None:
    sp = state_path(path)
    if not sp.exists():
        return None
    doc = torch.load(sp, weights_only=False)
    return TrainState(doc["step"], doc["epoch"], doc["trace"], doc["rng_state"]), doc["optimizer"]
