"""Mel analysis and Griffin-Lim reconstruction."""

import numpy as np
import pytest

from speechbridge.melspec import (
    HOP,
    LOG_FLOOR,
    N_FFT,
    N_MELS,
    griffin_lim,
    hz_to_mel,
    istft,
    log_mel,
    log_to_magnitude,
    mel_filterbank,
    mel_magnitude,
    mel_to_hz,
    n_frames_for,
    stft,
)


def test_mel_scale_roundtrip():
    f = np.array([0.0, 100.0, 1000.0, 8000.0, 12000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-10)


def test_filterbank_shape_and_coverage():
    fb = mel_filterbank()
    assert fb.shape == (N_MELS, N_FFT // 2 + 1)
    assert fb.dtype == np.float32
    assert (fb >= 0).all()
    assert (fb.sum(axis=1) > 0).all()       # every filter has support
    # interior bins are covered by at least one filter
    assert (fb.sum(axis=0)[1:-1] > 0).all()


def test_frame_count_ceils():
    assert n_frames_for(256) == 1
    assert n_frames_for(257) == 2
    assert n_frames_for(24000) == 94        # 1 s at 93.75 Hz
    assert n_frames_for(1) == 1


def test_stft_istft_roundtrip():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4 * HOP * 8) * 0.3
    spec = stft(x)
    assert spec.shape == (n_frames_for(len(x)), N_FFT // 2 + 1)
    y = istft(spec, length=len(x))
    np.testing.assert_allclose(y, x, atol=1e-8)


def test_mel_magnitude_shape_and_sign():
    rng = np.random.default_rng(1)
    wave = rng.standard_normal(24000).astype(np.float64) * 0.1
    mel = mel_magnitude(wave)
    assert mel.shape == (94, N_MELS)
    assert mel.dtype == np.float32
    assert (mel >= 0).all()


def test_log_compression_inverse():
    rng = np.random.default_rng(2)
    mag = np.abs(rng.standard_normal((10, N_MELS))).astype(np.float32)
    back = log_to_magnitude(np.log(mag + LOG_FLOOR))
    np.testing.assert_allclose(back, mag, atol=1e-6)
    assert (log_to_magnitude(np.full((2, 2), -50.0)) >= 0).all()


def test_griffin_lim_deterministic_and_sized():
    t = np.arange(24000) / 24000.0
    wave = (0.4 * np.sin(2 * np.pi * 330 * t)).astype(np.float64)
    mel = mel_magnitude(wave)
    a = griffin_lim(mel, n_iter=8)
    b = griffin_lim(mel, n_iter=8)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (mel.shape[0] * HOP,)
    assert a.dtype == np.float32
    assert np.isfinite(a).all()


def test_griffin_lim_recovers_tone():
    # a pure tone's dominant frequency survives the mel round trip
    t = np.arange(2 * 24000) / 24000.0
    wave = 0.5 * np.sin(2 * np.pi * 440 * t)
    rec = griffin_lim(mel_magnitude(wave), n_iter=24).astype(np.float64)
    spec = np.abs(np.fft.rfft(rec))
    freqs = np.fft.rfftfreq(len(rec), d=1 / 24000.0)
    assert abs(freqs[int(spec.argmax())] - 440.0) < 15.0


def test_griffin_lim_rejects_non_finite():
    bad = np.full((4, N_MELS), np.nan)
    with pytest.raises(ValueError, match="non-finite"):
        griffin_lim(bad)
