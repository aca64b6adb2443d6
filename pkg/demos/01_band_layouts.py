"""Compare how the built-in band layouts carve up a 2048-point spectrum.

Run:  python demos/01_band_layouts.py [num_bands]

Each layout starts from a perceptual frequency scale, places band centres on an
even grid in that scale, and turns them into a weight matrix over FFT bins.
The printout shows where the bands sit and how wide they get.
"""

import sys

import numpy as np

from bandsplit import build_band_spec

FS, N_FFT = 44100, 2048
n_bands = int(sys.argv[1]) if len(sys.argv) > 1 else 48

print(f"{n_bands} bands over {N_FFT // 2 + 1} bins at {FS} Hz\n")
print(f"{'layout':>8}  {'narrowest':>9}  {'widest':>6}  {'bins used':>9}  {'band 0 (Hz)':>15}  {'last band (Hz)':>17}")
for kind in ("mel", "tribark", "bark", "erb", "musical"):
    spec = build_band_spec(kind, FS, N_FFT, n_bands)
    rows = spec.band_table()
    widths = spec.band_widths
    lo0, hi0 = rows[0][1], rows[0][2]
    lo1, hi1 = rows[-1][1], rows[-1][2]
    print(f"{kind:>8}  {widths.min():9d}  {widths.max():6d}  {widths.sum():9d}  "
          f"{lo0:6.0f}-{hi0:<8.0f}  {lo1:8.0f}-{hi1:<8.0f}")

# "bins used" counts each bin once per band it belongs to; anything above
# 1025 is overlap between neighbouring bands.
print("\nBand membership for the musical layout (one row per 8th band, '#' = member bin):")
spec = build_band_spec("musical", FS, N_FFT, n_bands)
cols = 96
edges = np.linspace(0, spec.n_bins, cols + 1).astype(int)
for b in range(0, n_bands, 8):
    member = spec.weights[b] > 0
    line = "".join("#" if member[edges[i]:edges[i + 1]].any() else "." for i in range(cols))
    print(f"{b:3d} {line}")
print("    (horizontal axis: linear frequency, 0 Hz to Nyquist)")
