"""Core first-order-ambisonics types, plane-wave encoding, framing and WAV I/O.

Conventions used throughout the package:

* SN3D normalization, so the first-order gains are plain direction cosines.
* In memory the channel order is (W, X, Y, Z); on disk it is ACN
  (W, Y, Z, X), float32 RIFF WAV.
* Azimuth is measured counter-clockwise from the +X axis in (-pi, pi],
  elevation from the horizontal plane in [-pi/2, pi/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000

# internal (W, X, Y, Z) -> ACN file order (W, Y, Z, X)
_ACN_FROM_INTERNAL = (0, 2, 3, 1)
_INTERNAL_FROM_ACN = (0, 3, 1, 2)


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere (azimuth, elevation) in radians.

    The azimuth is wrapped into (-pi, pi] on construction; the elevation
    must already lie in [-pi/2, pi/2].
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        az = float(self.azimuth)
        el = float(self.elevation)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise ValueError("direction angles must be finite")
        az = math.remainder(az, 2.0 * math.pi)
        if az <= -math.pi:
            az += 2.0 * math.pi
        tol = 1e-9
        if el > math.pi / 2 + tol or el < -math.pi / 2 - tol:
            raise ValueError(f"elevation {el} outside [-pi/2, pi/2]")
        el = min(max(el, -math.pi / 2), math.pi / 2)
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float) -> "Direction":
        return cls(math.radians(azimuth_deg), math.radians(elevation_deg))

    @classmethod
    def from_unit_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        n = float(np.linalg.norm(v))
        if n < 1e-12:
            raise ValueError("zero-length vector has no direction")
        v = v / n
        return cls(math.atan2(v[1], v[0]), math.asin(min(max(v[2], -1.0), 1.0)))

    def unit_vector(self) -> np.ndarray:
        """Cartesian unit vector (x, y, z)."""
        ce = math.cos(self.elevation)
        return np.array(
            [
                math.cos(self.azimuth) * ce,
                math.sin(self.azimuth) * ce,
                math.sin(self.elevation),
            ]
        )

    def angle_to(self, other: "Direction") -> float:
        """Great-circle angle to another direction, in radians."""
        d = float(np.dot(self.unit_vector(), other.unit_vector()))
        return math.acos(min(max(d, -1.0), 1.0))

    def antipode(self) -> "Direction":
        return Direction.from_unit_vector(-self.unit_vector())


@dataclass(frozen=True)
class FoaSignal:
    """A 4-channel FOA buffer, channels ordered (W, X, Y, Z).

    The channel array is copied and frozen on construction, so instances
    can be shared freely across workers.
    """

    channels: np.ndarray
    sample_rate: int

    def __post_init__(self):
        ch = np.array(self.channels, dtype=np.float64, copy=True)
        if ch.ndim != 2 or ch.shape[0] != 4:
            raise ValueError(f"expected 4 channels, got shape {ch.shape}")
        if not np.all(np.isfinite(ch)):
            raise ValueError("FOA samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        ch.flags.writeable = False
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def w(self) -> np.ndarray:
        return self.channels[0]

    @property
    def x(self) -> np.ndarray:
        return self.channels[1]

    @property
    def y(self) -> np.ndarray:
        return self.channels[2]

    @property
    def z(self) -> np.ndarray:
        return self.channels[3]

    def slice_samples(self, start: int, stop: int) -> "FoaSignal":
        if start < 0 or stop > self.n_samples or stop < start:
            raise ValueError(f"slice [{start}, {stop}) outside signal bounds")
        return FoaSignal(self.channels[:, start:stop], self.sample_rate)


@dataclass(frozen=True)
class FrameGrid:
    """Non-overlapping frame grid: frame length equals hop."""

    frame_len_ms: float = 32.0
    sample_rate: int = DEFAULT_SAMPLE_RATE

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_len_ms * self.sample_rate / 1000.0))

    @property
    def frame_len_s(self) -> float:
        return self.frame_len_ms / 1000.0

    def frame_count(self, n_samples: int) -> int:
        return n_samples // self.frame_samples

    def frame_slice(self, frame: int) -> slice:
        n = self.frame_samples
        return slice(frame * n, (frame + 1) * n)

    def frame_of_time(self, t_s: float) -> int:
        return int(t_s / self.frame_len_s)

    def frame_centers_s(self, n_frames: int) -> np.ndarray:
        return (np.arange(n_frames) + 0.5) * self.frame_len_s

    def frames_for_ms(self, dur_ms: float) -> int:
        return int(round(dur_ms / self.frame_len_ms))


def encode_plane_wave(mono, direction: Direction, sample_rate: int = DEFAULT_SAMPLE_RATE) -> FoaSignal:
    """Encode a mono signal as an SN3D plane wave arriving from `direction`.

    W carries the signal itself; X, Y, Z are scaled by the direction
    cosines, so X^2 + Y^2 + Z^2 == W^2 holds per sample.
    """
    s = np.asarray(mono, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("mono input must be one-dimensional")
    if not np.all(np.isfinite(s)):
        raise ValueError("mono input contains non-finite samples")
    ux, uy, uz = direction.unit_vector()
    return FoaSignal(np.stack([s, s * ux, s * uy, s * uz]), sample_rate)


def mix(signals: list[FoaSignal]) -> FoaSignal:
    """Sample-wise sum of FOA signals sharing rate and length."""
    if not signals:
        raise ValueError("cannot mix an empty list of signals")
    first = signals[0]
    for s in signals[1:]:
        if s.sample_rate != first.sample_rate:
            raise ValueError("sample-rate mismatch between signals")
        if s.n_samples != first.n_samples:
            raise ValueError("length mismatch between signals")
    total = np.zeros_like(first.channels)
    for s in signals:
        total = total + s.channels
    return FoaSignal(total, first.sample_rate)


def write_wav(path, signal: FoaSignal) -> None:
    """Write a FOA signal as a 4-channel float32 WAV in ACN channel order."""
    data = signal.channels[list(_ACN_FROM_INTERNAL), :].T.astype(np.float32)
    wavfile.write(str(path), signal.sample_rate, data)


def read_wav(path) -> FoaSignal:
    """Read a 4-channel float32 ACN WAV into internal (W, X, Y, Z) order."""
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise ValueError(f"unreadable or truncated WAV file {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 4:
        got = 1 if data.ndim == 1 else data.shape[1]
        raise ValueError(f"expected 4 channels, got {got}")
    if data.dtype != np.float32:
        raise ValueError(f"unsupported encoding {data.dtype}, expected float32")
    return FoaSignal(data.T[list(_INTERNAL_FROM_ACN), :], rate)


def write_wav_mono(path, mono, sample_rate: int) -> None:
    """Write a mono float32 WAV (used by the beamformer debug command)."""
    s = np.asarray(mono, dtype=np.float32)
    if s.ndim != 1:
        raise ValueError("mono output must be one-dimensional")
    wavfile.write(str(path), int(sample_rate), s)
