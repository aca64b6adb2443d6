"""WAV I/O for PCM16 and IEEE float32.

Sample data goes through :mod:`scipy.io.wavfile`. A small header walker runs
first so malformed files fail with the byte offset of the problem, and so a
corpus can be indexed without reading any audio.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

PCM = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class WavInfo:
    fmt: int
    channels: int
    fs: int
    bits: int
    n_frames: int
    data_offset: int


def _parse(buf: bytes) -> WavInfo:
    if len(buf) < 12:
        raise WavError("file too short for a RIFF header", 0)
    if buf[0:4] != b"RIFF":
        raise WavError(f"expected 'RIFF', found {buf[0:4]!r}", 0)
    if buf[8:12] != b"WAVE":
        raise WavError(f"expected 'WAVE', found {buf[8:12]!r}", 8)
    pos, fmt_info = 12, None
    while pos + 8 <= len(buf):
        cid = buf[pos:pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(buf):
                raise WavError(f"truncated fmt chunk of size {size}", pos)
            tag, ch, fs, _, _, bits = struct.unpack_from("<HHIIHH", buf, body)
            if tag == EXTENSIBLE:
                if size < 40:
                    raise WavError("extensible fmt chunk too short", pos)
                (tag,) = struct.unpack_from("<H", buf, body + 24)
            if (tag, bits) not in ((PCM, 16), (IEEE_FLOAT, 32)):
                raise WavError(f"unsupported codec: format tag {tag}, {bits} bits", body)
            if ch not in (1, 2):
                raise WavError(f"unsupported channel count {ch}", body + 2)
            fmt_info = (tag, ch, fs, bits)
        elif cid == b"data":
            if fmt_info is None:
                raise WavError("data chunk before fmt chunk", pos)
            tag, ch, fs, bits = fmt_info
            frame = ch * bits // 8
            avail = min(size, len(buf) - body)
            if avail % frame:
                raise WavError(f"data size {avail} is not a multiple of frame size {frame}", pos + 4)
            return WavInfo(tag, ch, fs, bits, avail // frame, body)
        pos = body + size + (size & 1)
    if fmt_info is None:
        raise WavError("missing fmt chunk", pos)
    raise WavError("missing data chunk", pos)


def wav_info(path) -> WavInfo:
    return _parse(Path(path).read_bytes())


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float32 of shape (channels, frames) plus sample rate."""
    _parse(Path(path).read_bytes())
    fs, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / np.float32(32768.0)
    data = np.asarray(data, dtype=np.float32).reshape(len(data), -1)
    return data.T.copy(), int(fs)


def save_wav(path, signal: np.ndarray, fs: int, fmt: str = "float32") -> None:
    """Write (channels, frames) or (frames,) audio as ``float32`` or ``pcm16``."""
    x = np.atleast_2d(np.asarray(signal))
    if x.shape[0] not in (1, 2):
        raise ValueError(f"expected 1 or 2 channels, got {x.shape[0]}")
    if fmt == "float32":
        data = x.T.astype("<f4")
    elif fmt == "pcm16":
        q = np.clip(np.round(x.T.astype(np.float64) * 32768.0), -32768, 32767)
        data = q.astype("<i2")
    else:
        raise ValueError(f"unknown sample format {fmt!r}")
    wavfile.write(path, int(fs), np.ascontiguousarray(data))
