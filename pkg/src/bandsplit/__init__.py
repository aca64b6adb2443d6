"""Bandsplit source separation with overlapping psychoacoustic bands."""

from .bands import (BandKind, BandSpec, BandSpecError, build_band_spec, custom_band_spec,
                    load_band_spec, save_band_spec, split)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .data import (CorpusLayout, MixSpec, StemSet, Track, generate_toy_corpus, mix, scan_corpus,
                   synth_track)
from .dsp import ChunkPlan, StftConfig, chunk, istft, overlap_add, separate_chunked, stft
from .eval import (EvalReport, OracleIRM, OraclePSF, PassThrough, evaluate_corpus, oracle_irm,
                   oracle_psf, si_snr, snr)
from .losses import LossConfig, LossKind, dist_p, loss_gradient, stem_loss, total_loss
from .model import BandSplitNet, ModelConfig, count_params, recombine_masks
from .scales import FrequencyScale, ScaleKind, center_frequencies, hz_to_scale, scale_to_hz
from .train import (ModelSeparator, NumericalError, TrackBank, TrainConfig, Trainer, train,
                    validate)
from .wavio import load_wav, save_wav

__version__ = "0.1.0"
