"""Binary file formats: token files, mel files, and PCM WAV audio.

Token files ("SOLT"): magic, version u16, token_rate_mHz u32, count u64,
then u16 little-endian token indices.
Mel files ("SOLM"): magic, version u16, mel_bins u16, rate_mHz u32,
frame count u64, then f32 little-endian row-major frames.
Audio: mono 16-bit PCM WAV; 16 kHz in, 24 kHz out.
"""

import struct
import wave

import numpy as np

from .errors import FormatError

TOKEN_MAGIC = b"SOLT"
MEL_MAGIC = b"SOLM"
VERSION = 1

TOKEN_RATE_MHZ = 12500      # 12.5 Hz in millihertz
MEL_RATE_MHZ = 93750        # 93.75 Hz
INPUT_SAMPLE_RATE = 16000
OUTPUT_SAMPLE_RATE = 24000


def save_tokens(path, tokens, rate_mhz=TOKEN_RATE_MHZ):
    tokens = np.asarray(tokens)
    if tokens.ndim != 1:
        raise FormatError(f"token array must be 1-d, got shape {tokens.shape}")
    if tokens.size and (tokens.min() < 0 or tokens.max() > 0xFFFF):
        raise FormatError("token index outside u16 range")
    with open(path, "wb") as f:
        f.write(TOKEN_MAGIC)
        f.write(struct.pack("<HIQ", VERSION, rate_mhz, tokens.size))
        f.write(tokens.astype("<u2").tobytes())


def load_tokens(path):
    """Returns (tokens: int64 array, rate_mhz)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != TOKEN_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {TOKEN_MAGIC!r}")
    version, rate_mhz, count = struct.unpack_from("<HIQ", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported token file version {version}")
    body = data[18:]
    if len(body) != 2 * count:
        raise FormatError(f"{path}: expected {2 * count} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<u2").astype(np.int64), rate_mhz


def save_mel(path, frames, rate_mhz=MEL_RATE_MHZ):
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise FormatError(f"mel array must be 2-d [frames, bins], got shape {frames.shape}")
    n, bins = frames.shape
    with open(path, "wb") as f:
        f.write(MEL_MAGIC)
        f.write(struct.pack("<HHIQ", VERSION, bins, rate_mhz, n))
        f.write(frames.astype("<f4", copy=False).tobytes())


def load_mel(path):
    """Returns (frames: float32 [n, bins], rate_mhz)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MEL_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MEL_MAGIC!r}")
    version, bins, rate_mhz, n = struct.unpack_from("<HHIQ", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported mel file version {version}")
    body = data[20:]
    if len(body) != 4 * n * bins:
        raise FormatError(f"{path}: expected {4 * n * bins} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(n, bins).copy(), rate_mhz


def read_wav(path, expect_rate=INPUT_SAMPLE_RATE):
    """Read a mono 16-bit PCM WAV into float32 in [-1, 1]."""
    try:
        wf = wave.open(path, "rb")
    except (wave.Error, EOFError) as e:
        raise FormatError(f"{path}: not a valid WAV file ({e})") from e
    with wf:
        if wf.getnchannels() != 1:
            raise FormatError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise FormatError(f"{path}: expected 16-bit samples, got {8 * wf.getsampwidth()}-bit")
        if wf.getframerate() != expect_rate:
            raise FormatError(
                f"{path}: expected {expect_rate} Hz, got {wf.getframerate()} Hz")
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return pcm.astype(np.float32) / 32768.0


def write_wav(path, samples, rate=OUTPUT_SAMPLE_RATE):
    """Write float samples (clipped to [-1, 1]) as mono 16-bit PCM."""
    samples = np.asarray(samples, dtype=np.float32).reshape(-1)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())
