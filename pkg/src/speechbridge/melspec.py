"""Mel spectrogram front end and classical phase reconstruction.

24 kHz audio, 1024-point Hann window, hop 256 -> 93.75 Hz frames.
Analysis produces magnitude mels; log compression is applied by callers
that train on log-mels. Reconstruction inverts the filterbank by
pseudo-inverse and runs Griffin-Lim with zero-phase init, so it is
deterministic with no seed.
"""

import numpy as np

SAMPLE_RATE = 24000
N_FFT = 1024
HOP = 256
N_MELS = 80
FMIN = 0.0
FMAX = SAMPLE_RATE / 2
LOG_FLOOR = 1e-5


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, n_fft=N_FFT, sr=SAMPLE_RATE, fmin=FMIN, fmax=FMAX):
    """Triangular mel filters [n_mels, n_fft//2 + 1]."""
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sr)
    fb = np.zeros((n_mels, len(bins)), dtype=np.float64)
    for i in range(n_mels):
        lo, mid, hi = pts[i], pts[i + 1], pts[i + 2]
        up = (bins - lo) / max(mid - lo, 1e-9)
        down = (hi - bins) / max(hi - mid, 1e-9)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb.astype(np.float32)


def _window(n_fft=N_FFT):
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def n_frames_for(samples: int, hop=HOP) -> int:
    return max(1, -(-samples // hop))       # ceil


def stft(x, n_fft=N_FFT, hop=HOP):
    """Complex spectrogram [frames, n_fft//2+1]; frame count = ceil(T/hop)."""
    x = np.asarray(x, dtype=np.float64)
    frames = n_frames_for(len(x), hop)
    pad = n_fft // 2
    xp = np.pad(x, (pad, pad + n_fft))
    win = _window(n_fft)
    starts = np.arange(frames) * hop
    mat = np.stack([xp[s:s + n_fft] for s in starts]) * win
    return np.fft.rfft(mat, axis=-1)


def istft(spec, hop=HOP, length=None):
    """Weighted overlap-add inverse of ``stft``."""
    frames, nbins = spec.shape
    n_fft = (nbins - 1) * 2
    win = _window(n_fft)
    total = frames * hop + n_fft
    out = np.zeros(total)
    norm = np.zeros(total)
    chunks = np.fft.irfft(spec, n=n_fft, axis=-1)
    for i in range(frames):
        s = i * hop
        out[s:s + n_fft] += chunks[i] * win
        norm[s:s + n_fft] += win ** 2
    pad = n_fft // 2
    out = out[pad:] / np.maximum(norm[pad:], 1e-8)
    if length is None:
        length = frames * hop
    return out[:length]


def mel_magnitude(wave, fb=None):
    """Waveform -> magnitude mel frames [ceil(T/hop), n_mels]."""
    if fb is None:
        fb = mel_filterbank()
    mag = np.abs(stft(wave))
    return (mag @ fb.T.astype(np.float64)).astype(np.float32)


def log_mel(wave, fb=None):
    return np.log(mel_magnitude(wave, fb) + LOG_FLOOR)


def log_to_magnitude(logmel):
    return np.maximum(np.exp(np.asarray(logmel, dtype=np.float64)) - LOG_FLOOR, 0.0)


def griffin_lim(mel, n_iter=32, fb=None):
    """Magnitude mel frames [F, n_mels] -> waveform at 24 kHz.

    Zero-phase init and a fixed iteration count make the output a pure
    function of the input.
    """
    mel = np.asarray(mel, dtype=np.float64)
    if not np.isfinite(mel).all():
        raise ValueError("non-finite mel input")
    if fb is None:
        fb = mel_filterbank()
    inv = np.linalg.pinv(fb.astype(np.float64))
    mag = np.clip(mel @ inv.T, 0.0, None)        # [F, n_fft//2+1]
    length = mel.shape[0] * HOP
    spec = mag.astype(np.complex128)
    x = istft(spec, length=length)
    for _ in range(n_iter):
        phase = np.exp(1j * np.angle(stft(x)[:mag.shape[0]]))
        x = istft(mag * phase, length=length)
    return x.astype(np.float32)
