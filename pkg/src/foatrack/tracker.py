"""Tracker output simulation: ground truth plus injected failure modes.

A neural tracker running block by block keeps its output branches
coherent only within a block; across blocks the branch order may flip.
This module replays ground-truth tracks onto two output branches and
injects exactly that failure (block-level branch permutations), plus
per-frame angular jitter and missed detections, so the reassignment
engines can be stress-tested without a neural tracker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenes import GroundTruth
from .tracks import Track

N_BRANCHES = 2


@dataclass(frozen=True)
class ErrorModel:
    """Error injection parameters; all rates zero reproduces ground truth."""

    perm_block_frames: int = 25
    perm_lambda: float = 0.004
    angle_noise_deg: float = 5.0
    miss_prob: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.perm_block_frames < 1:
            raise ValueError("perm_block_frames must be >= 1")
        if not (0.0 <= self.miss_prob <= 1.0):
            raise ValueError("miss_prob must be in [0, 1]")
        if self.perm_lambda < 0.0 or self.angle_noise_deg < 0.0:
            raise ValueError("error rates must be non-negative")

    def perm_prob(self, block_frames: int) -> float:
        """Probability that a block of this length comes out permuted."""
        return 1.0 - math.exp(-self.perm_lambda * block_frames)


ERROR_FREE = ErrorModel(perm_lambda=0.0, angle_noise_deg=0.0, miss_prob=0.0)


@dataclass(frozen=True)
class SimulationLog:
    """What was injected: per permutation block, whether it was swapped."""

    block_bounds: tuple[tuple[int, int], ...]
    swapped: tuple[bool, ...]

    def swap_count(self) -> int:
        return sum(self.swapped)

    def transition_count(self) -> int:
        """Block boundaries where the branch mapping changes."""
        flips = 0
        prev = False
        for s in self.swapped:
            if s != prev:
                flips += 1
            prev = s
        return flips


def _jitter_directions(az: np.ndarray, el: np.ndarray, active: np.ndarray,
                       sigma_deg: float, rng: np.random.Generator):
    """Rotate each active direction by ~N(0, sigma) along a random tangent."""
    if sigma_deg <= 0.0 or not active.any():
        return az.copy(), el.copy()
    idx = np.nonzero(active)[0]
    ce = np.cos(el[idx])
    v = np.stack([np.cos(az[idx]) * ce, np.sin(az[idx]) * ce, np.sin(el[idx])], axis=1)
    # random unit tangents: project a random vector onto the tangent plane
    raw = rng.standard_normal((idx.size, 3))
    raw -= v * np.sum(raw * v, axis=1, keepdims=True)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    tangent = raw / norms
    alpha = np.radians(sigma_deg) * rng.standard_normal(idx.size)
    v_new = np.cos(alpha)[:, None] * v + np.sin(alpha)[:, None] * tangent
    az_out, el_out = az.copy(), el.copy()
    az_out[idx] = np.arctan2(v_new[:, 1], v_new[:, 0])
    el_out[idx] = np.arcsin(np.clip(v_new[:, 2], -1.0, 1.0))
    return az_out, el_out


def simulate_tracker_detailed(gt: GroundTruth, em: ErrorModel) -> tuple[list[Track], SimulationLog]:
    """Simulate predicted tracks and return the injection log."""
    n_speakers = len(gt.tracks)
    if n_speakers > N_BRANCHES:
        raise ValueError(f"{n_speakers} speakers exceed the {N_BRANCHES} tracker branches")
    n_frames = gt.n_frames
    rng = np.random.default_rng(em.seed)

    bounds = []
    start = 0
    while start < n_frames:
        stop = min(start + em.perm_block_frames, n_frames)
        bounds.append((start, stop))
        start = stop
    swapped = tuple(bool(rng.random() < em.perm_prob(stop - start))
                    for start, stop in bounds)

    branch_az = np.zeros((N_BRANCHES, n_frames))
    branch_el = np.zeros((N_BRANCHES, n_frames))
    branch_act = np.zeros((N_BRANCHES, n_frames), dtype=bool)
    for (b_start, b_stop), swap in zip(bounds, swapped):
        for k, track in enumerate(gt.tracks):
            branch = (N_BRANCHES - 1 - k) if swap else k
            branch_az[branch, b_start:b_stop] = track.azimuth[b_start:b_stop]
            branch_el[branch, b_start:b_stop] = track.elevation[b_start:b_stop]
            branch_act[branch, b_start:b_stop] = track.active[b_start:b_stop]

    tracks = []
    for b in range(N_BRANCHES):
        az, el = _jitter_directions(branch_az[b], branch_el[b], branch_act[b],
                                    em.angle_noise_deg, rng)
        act = branch_act[b].copy()
        if em.miss_prob > 0.0:
            act &= rng.random(n_frames) >= em.miss_prob
        tracks.append(Track(track_id=b, azimuth=az, elevation=el, active=act))
    return tracks, SimulationLog(block_bounds=tuple(bounds), swapped=swapped)


def simulate_tracker(gt: GroundTruth, em: ErrorModel) -> list[Track]:
    return simulate_tracker_detailed(gt, em)[0]
