"""Frame-level band-energy features, statistics pooling and energy VAD."""

from __future__ import annotations

import numpy as np

from .foa import FrameGrid

LOG_FLOOR = 1e-10
N_BANDS = 24


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_bands: int, n_fft: int, sample_rate: int,
                   fmin: float = 60.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel-spaced filterbank, shape (n_bands, n_fft // 2 + 1)."""
    if fmax is None:
        fmax = sample_rate / 2.0
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_bands, bin_freqs.size))
    for b in range(n_bands):
        lo, mid, hi = hz_pts[b], hz_pts[b + 1], hz_pts[b + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        fb[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def features(mono, sample_rate: int, n_bands: int = N_BANDS,
             frame_ms: float = 32.0, hop_ms: float = 16.0,
             floor: float = LOG_FLOOR) -> np.ndarray:
    """Log band energies, shape (n_frames, n_bands).

    Frames are Hann-windowed, 32 ms long with a 16 ms hop;
    n_frames = (samples - frame) // hop + 1. Band energies are floored at
    `floor` before the log, so an all-zero input maps every band to
    log(floor).
    """
    s = np.asarray(mono, dtype=np.float64)
    frame_n = int(round(frame_ms * sample_rate / 1000.0))
    hop_n = int(round(hop_ms * sample_rate / 1000.0))
    if s.ndim != 1 or s.size < frame_n:
        raise ValueError(f"signal shorter than one frame ({frame_n} samples)")
    n_frames = (s.size - frame_n) // hop_n + 1
    frames = np.lib.stride_tricks.sliding_window_view(s, frame_n)[:: hop_n][:n_frames]
    window = np.hanning(frame_n)
    spec = np.fft.rfft(frames * window, axis=1)
    power = (spec.real**2 + spec.imag**2) / frame_n
    fb = mel_filterbank(n_bands, frame_n, sample_rate)
    energies = power @ fb.T
    return np.log(np.maximum(energies, floor))


def stats_pool(frame_features: np.ndarray) -> np.ndarray:
    """Concatenated per-band mean and population standard deviation (2F)."""
    f = np.asarray(frame_features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("statistics pooling needs at least 2 frames")
    return np.concatenate([f.mean(axis=0), f.std(axis=0)])


def vad_mask(mono, sample_rate: int, grid: FrameGrid | None = None) -> np.ndarray:
    """Energy VAD on the non-overlapping frame grid.

    A frame is active when its energy exceeds the noise-floor estimate
    (20th percentile of frame energies) by more than 6 dB. A constant
    signal therefore yields an all-inactive mask.
    """
    s = np.asarray(mono, dtype=np.float64)
    if grid is None:
        grid = FrameGrid(sample_rate=sample_rate)
    n_frames = grid.frame_count(s.size)
    if n_frames == 0:
        return np.zeros(0, dtype=bool)
    frames = s[: n_frames * grid.frame_samples].reshape(n_frames, grid.frame_samples)
    energy_db = 10.0 * np.log10(np.mean(frames**2, axis=1) + 1e-20)
    noise_floor = np.percentile(energy_db, 20.0)
    return energy_db > noise_floor + 6.0
