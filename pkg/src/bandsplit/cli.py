"""Command-line entry point: ``bandsplit <command> ...``.

Exit codes: 0 success, 2 configuration/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import bands as bandlib
from .checkpoint import CheckpointError, load_checkpoint, load_state, save_checkpoint
from .config import ConfigError, RunConfig
from .data import CorpusError, generate_toy_corpus, scan_corpus
from .dsp import ChunkPlan, separate_chunked
from .eval import OracleIRM, OraclePSF, PassThrough, evaluate_corpus
from .model import BandSplitNet, count_params
from .train import ModelSeparator, NumericalError, Trainer, TrackBank, write_trace
from .wavio import WavError, load_wav, save_wav

log = logging.getLogger("bandsplit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load_config(arg: str | None) -> RunConfig:
    if arg is None:
        return RunConfig()
    if Path(arg).exists():
        return RunConfig.load(arg)
    try:
        return RunConfig.preset(arg)
    except FileNotFoundError as exc:
        raise ConfigError(f"no config file or preset named {arg!r}") from exc


def cmd_bands(args) -> int:
    spec = bandlib.build_band_spec(args.kind, args.fs, args.n_fft, args.num_bands)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bandlib.save_band_spec(spec, out)
    out.with_suffix(".csv").write_text(bandlib.band_table_csv(spec))
    widths = spec.band_widths
    print(f"{spec.kind.value}: {spec.n_bands} bands over {spec.n_bins} bins, "
          f"widths {widths.min()}-{widths.max()} bins -> {out}")
    return EXIT_OK


def cmd_synth_data(args) -> int:
    paths = generate_toy_corpus(args.out, args.tracks, args.duration, args.fs, args.seed)
    print(f"wrote {len(paths)} tracks to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config()
    composites = dict(cfg.data.composites)

    state = optimizer_state = None
    stems = None
    if args.attach_stem:
        if not args.resume:
            raise ConfigError("--attach-stem requires --resume")
        model = load_checkpoint(args.resume)
        model.attach_decoder(args.attach_stem, seed=tcfg.seed)
        freeze = not args.no_freeze
        stems = (args.attach_stem,)
    elif args.resume:
        model = load_checkpoint(args.resume)
        loaded = load_state(args.resume)
        if loaded is not None:
            state, optimizer_state = loaded
        freeze = args.freeze_encoder or tcfg.freeze_encoder
    else:
        torch.manual_seed(tcfg.seed)
        model = BandSplitNet(cfg.model_config())
        freeze = args.freeze_encoder or tcfg.freeze_encoder
    tcfg = dataclasses.replace(tcfg, freeze_encoder=freeze)

    tracks = scan_corpus(args.data, cfg.layout())
    if not tracks:
        raise ConfigError(f"no usable tracks under {args.data}")
    if tracks[0].fs != model.config.band_spec.fs:
        raise ConfigError(f"corpus fs {tracks[0].fs} differs from model fs {model.config.band_spec.fs}")
    bank = TrackBank(tracks, stems or model.stems, composites)
    trainer = Trainer(model, bank, tcfg, stems, state, optimizer_state)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    def checkpoint(tr: Trainer) -> None:
        path = out / f"epoch_{tr.state.epoch - 1:03d}.safetensors"
        save_checkpoint(path, tr.model, tr.state, tr.optimizer)
        save_checkpoint(out / "last.safetensors", tr.model, tr.state, tr.optimizer)
        write_trace(out / "loss.csv", tr.state.trace)

    trainer.fit(on_epoch=checkpoint)
    trace = trainer.state.trace
    if trace:
        print(f"trained to step {trainer.state.step} (epoch {trainer.state.epoch}); "
              f"final loss {trace[-1]['loss']:.4f}")
    return EXIT_OK


def cmd_separate(args) -> int:
    model = load_checkpoint(args.ckpt)
    x, fs = load_wav(args.input)
    if fs != model.config.band_spec.fs:
        raise ConfigError(f"input is {fs} Hz but the model expects {model.config.band_spec.fs} Hz")
    plan = ChunkPlan.test(args.chunk_len, args.chunk_hop)
    est = separate_chunked(ModelSeparator(model), x.astype(np.float64), fs, plan, workers=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stem, y in est.items():
        save_wav(out / f"{stem}.wav", y.astype(np.float32), fs)
    print(f"wrote {len(est)} stems ({x.shape[-1]} samples each) to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    tracks = scan_corpus(args.data, cfg.layout(), strict=True)
    if not tracks:
        raise CorpusError(f"no tracks under {args.data}")
    fs = tracks[0].fs
    stems = list(cfg.layout().stems)
    if args.ckpt:
        model = load_checkpoint(args.ckpt)
        if model.config.band_spec.fs != fs:
            raise ConfigError(f"checkpoint fs {model.config.band_spec.fs} differs from corpus fs {fs}")
        separator = ModelSeparator(model)
        stems = list(model.stems)
    else:
        stft_cfg = cfg.stft_config()
        if stft_cfg.fs != fs:
            raise ConfigError(f"config fs {stft_cfg.fs} differs from corpus fs {fs}")
        separator = {"mix": PassThrough(tuple(stems)), "irm": OracleIRM(stft_cfg),
                     "psf": OraclePSF(stft_cfg)}[args.oracle]
    plan = None if args.oracle else cfg.test_plan()
    report = evaluate_corpus(separator, tracks, plan, stems, dict(cfg.data.composites))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_text(report.to_json())
    out.with_suffix(".csv").write_text(report.to_csv())
    for stem, m in report.stem_means().items():
        print(f"{stem:>20s}  SNR {m['snr_db']:7.2f} dB  SI-SNR {m['si_snr_db']:7.2f} dB")
    avg = report.averages()
    print(f"{'average':>20s}  SNR {avg['snr_db']:7.2f} dB  SI-SNR {avg['si_snr_db']:7.2f} dB")
    return EXIT_OK


def cmd_params(args) -> int:
    if args.ckpt:
        model = load_checkpoint(args.ckpt)
    else:
        model = BandSplitNet(_load_config(args.config).model_config())
    counts = count_params(model)
    print(json.dumps(counts, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bandsplit", description=__doc__)
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bands", help="build a band definition (JSON + CSV table)")
    b.add_argument("--kind", required=True, choices=[k.value for k in bandlib.BandKind if k.value != "custom"])
    b.add_argument("--fs", type=float, required=True)
    b.add_argument("--n-fft", type=int, required=True)
    b.add_argument("--num-bands", type=int, required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bands)

    s = sub.add_parser("synth-data", help="generate a synthetic dialogue/music/effects corpus")
    s.add_argument("--tracks", type=int, required=True)
    s.add_argument("--duration", type=float, required=True)
    s.add_argument("--fs", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_data)

    t = sub.add_parser("train", help="train (or fine-tune) a model")
    t.add_argument("--config", help="run config JSON or preset name (desk, full)")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--resume")
    t.add_argument("--freeze-encoder", action="store_true")
    t.add_argument("--attach-stem")
    t.add_argument("--no-freeze", action="store_true", help="train the encoder when attaching a stem")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("separate", help="separate a WAV file into stems")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--chunk-len", type=float, default=6.0)
    r.add_argument("--chunk-hop", type=float, default=0.5)
    r.set_defaults(func=cmd_separate)

    e = sub.add_parser("evaluate", help="score a checkpoint or an oracle on a corpus")
    who = e.add_mutually_exclusive_group(required=True)
    who.add_argument("--ckpt")
    who.add_argument("--oracle", choices=["irm", "psf", "mix"])
    e.add_argument("--data", required=True)
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("params", help="count parameters per module")
    who = c.add_mutually_exclusive_group(required=True)
    who.add_argument("--config")
    who.add_argument("--ckpt")
    c.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CorpusError, CheckpointError, WavError, bandlib.BandSpecError,
            ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
