"""Steered first-order beamformer following a per-frame trajectory.

The output for steering unit vector u is

    b = pattern * W + (1 - pattern) * (ux*X + uy*Y + uz*Z)

which recovers a plane wave from the steering direction exactly and, at
``pattern=0.5`` (cardioid), nulls the antipodal direction. Steering
vectors are cross-faded linearly over the first 8 ms of each frame to
avoid clicks at direction jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .foa import FoaSignal, FrameGrid
from .tracks import Track

CROSSFADE_MS = 8.0
DEFAULT_PATTERN = 0.5


@dataclass(frozen=True)
class SteeringTrajectory:
    """Per-frame steering directions with an activity mask."""

    azimuth: np.ndarray
    elevation: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        az = np.asarray(self.azimuth, dtype=np.float64)
        el = np.asarray(self.elevation, dtype=np.float64)
        act = np.asarray(self.active, dtype=bool)
        if not (az.shape == el.shape == act.shape) or az.ndim != 1:
            raise ValueError("trajectory arrays must be 1-D and equally long")
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "active", act)

    @property
    def n_frames(self) -> int:
        return self.azimuth.shape[0]

    @classmethod
    def from_track(cls, track: Track) -> "SteeringTrajectory":
        return cls(track.azimuth, track.elevation, track.active)

    @classmethod
    def constant(cls, direction, n_frames: int) -> "SteeringTrajectory":
        return cls(
            np.full(n_frames, direction.azimuth),
            np.full(n_frames, direction.elevation),
            np.ones(n_frames, dtype=bool),
        )

    def unit_vectors(self) -> np.ndarray:
        ce = np.cos(self.elevation)
        return np.stack(
            [np.cos(self.azimuth) * ce, np.sin(self.azimuth) * ce, np.sin(self.elevation)],
            axis=1,
        )


def _held_unit_vectors(traj: SteeringTrajectory) -> np.ndarray:
    """Steering vectors with inactive frames holding the last active one."""
    if not traj.active.any():
        raise ValueError("trajectory has no active frame to steer at")
    u = traj.unit_vectors()
    active_idx = np.nonzero(traj.active)[0]
    # index of the most recent active frame; frames before the first
    # active one fall back to it
    last = np.searchsorted(active_idx, np.arange(traj.n_frames), side="right") - 1
    last = np.clip(last, 0, active_idx.size - 1)
    return u[active_idx[last]]


def _per_sample_steering(u_frames: np.ndarray, n_samples: int, grid: FrameGrid) -> np.ndarray:
    fs = grid.frame_samples
    n_frames = u_frames.shape[0]
    fade = min(int(round(CROSSFADE_MS * grid.sample_rate / 1000.0)), fs)
    u = np.repeat(u_frames, fs, axis=0)
    if u.shape[0] < n_samples:
        # tail shorter than one frame keeps the final steering vector
        tail = np.repeat(u_frames[-1:], n_samples - u.shape[0], axis=0)
        u = np.concatenate([u, tail], axis=0)
    u = u[:n_samples]
    if fade > 0:
        alpha = (np.arange(fade) + 1.0) / fade
        for f in range(1, n_frames):
            start = f * fs
            if start >= n_samples:
                break
            stop = min(start + fade, n_samples)
            a = alpha[: stop - start, None]
            u[start:stop] = (1.0 - a) * u_frames[f - 1] + a * u_frames[f]
    return u


def beamform(signal: FoaSignal, traj: SteeringTrajectory,
             pattern: float = DEFAULT_PATTERN, grid: FrameGrid | None = None) -> np.ndarray:
    """Beamform the full signal along the trajectory, returning mono samples."""
    if not (0.0 <= pattern <= 1.0):
        raise ValueError("pattern must be in [0, 1]")
    if grid is None:
        grid = FrameGrid(sample_rate=signal.sample_rate)
    n_frames = grid.frame_count(signal.n_samples)
    if traj.n_frames != n_frames:
        raise ValueError(
            f"trajectory length {traj.n_frames} does not match signal frame count {n_frames}"
        )
    u = _per_sample_steering(_held_unit_vectors(traj), signal.n_samples, grid)
    velocity = u[:, 0] * signal.x + u[:, 1] * signal.y + u[:, 2] * signal.z
    return pattern * signal.w + (1.0 - pattern) * velocity


def beamform_crop(signal: FoaSignal, traj: SteeringTrajectory, pattern: float,
                  start_ms: float, dur_ms: float, grid: FrameGrid | None = None) -> np.ndarray:
    """Beamform restricted to [start_ms, start_ms + dur_ms)."""
    if grid is None:
        grid = FrameGrid(sample_rate=signal.sample_rate)
    sr = signal.sample_rate
    start = int(round(start_ms * sr / 1000.0))
    length = int(round(dur_ms * sr / 1000.0))
    if start < 0 or length < 0 or start + length > signal.n_samples:
        raise ValueError(
            f"crop [{start_ms}, {start_ms + dur_ms}) ms outside signal bounds"
        )
    return beamform(signal, traj, pattern, grid)[start:start + length]
