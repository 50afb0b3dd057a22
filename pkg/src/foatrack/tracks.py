"""Track containers and their CSV serialization.

A track is one tracker branch (or one ground-truth speaker): per-frame
azimuth/elevation plus an activity flag, on the shared 32 ms frame grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .foa import Direction

TRACK_CSV_COLUMNS = ("frame_index", "track_id", "azimuth_deg", "elevation_deg", "active")


@dataclass(frozen=True)
class Track:
    """Per-frame direction and activity of one track identity."""

    track_id: int
    azimuth: np.ndarray
    elevation: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        az = np.asarray(self.azimuth, dtype=np.float64)
        el = np.asarray(self.elevation, dtype=np.float64)
        act = np.asarray(self.active, dtype=bool)
        if not (az.shape == el.shape == act.shape) or az.ndim != 1:
            raise ValueError("track arrays must be 1-D and equally long")
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "active", act)

    @property
    def n_frames(self) -> int:
        return self.azimuth.shape[0]

    def direction_at(self, frame: int) -> Direction:
        return Direction(float(self.azimuth[frame]), float(self.elevation[frame]))

    def unit_vectors(self) -> np.ndarray:
        """Per-frame Cartesian unit vectors, shape (n_frames, 3)."""
        ce = np.cos(self.elevation)
        return np.stack(
            [np.cos(self.azimuth) * ce, np.sin(self.azimuth) * ce, np.sin(self.elevation)],
            axis=1,
        )

    def active_frames(self) -> np.ndarray:
        return np.nonzero(self.active)[0]


def write_tracks(path, tracks: list[Track]) -> None:
    """Write tracks as CSV, one row per (track, frame), frames ascending."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_CSV_COLUMNS)
        for track in tracks:
            az_deg = np.degrees(track.azimuth)
            el_deg = np.degrees(track.elevation)
            for f in range(track.n_frames):
                writer.writerow(
                    [
                        f,
                        track.track_id,
                        f"{az_deg[f]:.6f}",
                        f"{el_deg[f]:.6f}",
                        int(track.active[f]),
                    ]
                )


def read_tracks(path) -> list[Track]:
    """Read a track CSV written by :func:`write_tracks`.

    An empty file (or a bare header) yields an empty list. Rows must be
    grouped per track with frame indices increasing by one from zero.
    """
    rows: dict[int, list[tuple[int, float, float, bool]]] = {}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        missing = [c for c in TRACK_CSV_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"missing column '{missing[0]}' in {path}")
        col = {name: header.index(name) for name in TRACK_CSV_COLUMNS}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                frame = int(row[col["frame_index"]])
                tid = int(row[col["track_id"]])
                az = float(row[col["azimuth_deg"]])
                el = float(row[col["elevation_deg"]])
                act = bool(int(row[col["active"]]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"malformed row {line_no} in {path}: {row}") from exc
            rows.setdefault(tid, []).append((frame, az, el, act))

    tracks = []
    for tid in sorted(rows):
        entries = rows[tid]
        frames = [e[0] for e in entries]
        if frames != list(range(len(frames))):
            raise ValueError(f"non-monotone frame indices for track {tid}")
        tracks.append(
            Track(
                track_id=tid,
                azimuth=np.radians([e[1] for e in entries]),
                elevation=np.radians([e[2] for e in entries]),
                active=np.array([e[3] for e in entries], dtype=bool),
            )
        )
    return tracks
