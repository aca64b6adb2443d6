"""Upper bounds for mask-based separation on the synthetic corpus.

Run:  python demos/03_oracle_masks.py [out_dir]

Oracle masks are computed from the true stems, so they show how far a perfect
magnitude (IRM) or phase-aware (PSF) mask could go. Leaving the mixture
untouched gives the floor every separator has to beat.
"""

import sys
import tempfile
from pathlib import Path

from bandsplit import (OracleIRM, OraclePSF, PassThrough, StftConfig, evaluate_corpus,
                       generate_toy_corpus, scan_corpus)

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "toy"
generate_toy_corpus(out, n_tracks=8, duration=6.0, fs=8000, seed=2)
tracks = scan_corpus(out)
cfg = StftConfig(512, 128, 8000)
stems = ("dialogue", "music", "effects")

print(f"{len(tracks)} tracks in {out}\n")
print(f"{'separator':>10}  " + "  ".join(f"{s:>9}" for s in stems) + "   (mean SNR, dB)")
for name, sep in (("mixture", PassThrough(stems)), ("IRM", OracleIRM(cfg)), ("PSF", OraclePSF(cfg))):
    means = evaluate_corpus(sep, tracks, None).stem_means()
    print(f"{name:>10}  " + "  ".join(f"{means[s]['snr_db']:9.2f}" for s in stems))
