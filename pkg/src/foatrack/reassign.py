"""Identity reassignment over predicted tracks.

Two engines share the same decision rule (cosine similarity against a
pool of enrollment embeddings):

* fragment-level: tracks are segmented into maximal activity runs and one
  decision labels each whole fragment;
* blockwise: fixed-size blocks are processed strictly in stream order,
  one decision per track portion per block, so latency is bounded by the
  block size and a wrong decision never leaks outside its block (except
  through the inherit rule for near-silent portions).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .beamform import DEFAULT_PATTERN, SteeringTrajectory, beamform, beamform_crop
from .embeddings import normalize_embedding
from .foa import FoaSignal, FrameGrid
from .scenes import GroundTruth
from .tracks import Track

MIN_REASSIGN_CONTEXT_MS = 250.0
MIN_BLOCK_FRAMES = 8
DEFAULT_GAP_TOLERANCE = 8
DEFAULT_MIN_ACTIVE_FRACTION = 0.25
TIMELINE_CSV_COLUMNS = ("frame_index", "source_track_id", "identity_label", "similarity")


@dataclass(frozen=True)
class Fragment:
    """A maximal activity run of one track (gaps up to the tolerance merged)."""

    track_id: int
    start_frame: int
    end_frame: int

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame


def fragment_tracks(tracks: list[Track], gap_tolerance_frames: int = DEFAULT_GAP_TOLERANCE) -> list[Fragment]:
    """Split tracks into fragments, ordered globally by start frame."""
    fragments = []
    for track in tracks:
        idx = track.active_frames()
        if idx.size == 0:
            continue
        run_start = int(idx[0])
        run_end = int(idx[0]) + 1
        for f in idx[1:]:
            f = int(f)
            if f - run_end <= gap_tolerance_frames:
                run_end = f + 1
            else:
                fragments.append(Fragment(track.track_id, run_start, run_end))
                run_start, run_end = f, f + 1
        fragments.append(Fragment(track.track_id, run_start, run_end))
    fragments.sort(key=lambda fr: (fr.start_frame, fr.track_id))
    return fragments


@dataclass(frozen=True)
class EnrollmentPool:
    """Ordered (label, unit embedding) entries; earlier entries win ties."""

    labels: tuple
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.labels):
            raise ValueError("one embedding per label required")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("enrollment labels must be unique")
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("enrollment embeddings must be unit-norm")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "vectors", vecs)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector_for(self, label) -> np.ndarray:
        return self.vectors[self.labels.index(label)]


def decide(embedding: np.ndarray, pool: EnrollmentPool) -> tuple[object, float]:
    """Label of the most similar enrollment; earliest entry wins ties."""
    if pool.size == 0:
        raise ValueError("enrollment pool is empty")
    e = normalize_embedding(embedding)
    sims = pool.vectors @ e
    best = int(np.argmax(sims))
    return pool.labels[best], float(sims[best])


def write_pool(path, pool: EnrollmentPool) -> None:
    payload = {
        "version": 1,
        "dimension": pool.dim,
        "entries": [{"label": str(l), "vector": v.tolist()}
                    for l, v in zip(pool.labels, pool.vectors)],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def read_pool(path) -> EnrollmentPool:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported pool version {payload.get('version')}")
    labels = tuple(e["label"] for e in payload["entries"])
    vectors = np.array([e["vector"] for e in payload["entries"]], dtype=np.float64)
    return EnrollmentPool(labels=labels, vectors=vectors)


def build_enrollments(mixture: FoaSignal, gt: GroundTruth, extractor,
                      min_dur_ms: float = 2000.0,
                      pattern: float = DEFAULT_PATTERN) -> EnrollmentPool:
    """One embedding per speaker from its longest non-overlapped active span.

    The mixture is beamformed along the speaker's own ground-truth
    trajectory over that span, then embedded.
    """
    grid = gt.grid
    min_frames = int(np.ceil(min_dur_ms / grid.frame_len_ms))
    labels = []
    vectors = []
    for k, (track, sid) in enumerate(zip(gt.tracks, gt.speaker_ids)):
        others = np.zeros(gt.n_frames, dtype=bool)
        for j, other in enumerate(gt.tracks):
            if j != k:
                others |= other.active
        solo = track.active & ~others
        span = _longest_run(solo)
        if span is None or span[1] - span[0] < min_frames:
            raise ValueError(
                f"no non-overlapped span >= {min_dur_ms:.0f} ms for speaker {sid}"
            )
        start_ms = span[0] * grid.frame_len_ms
        dur_ms = (span[1] - span[0]) * grid.frame_len_ms
        mono = beamform_crop(mixture, SteeringTrajectory.from_track(track),
                             pattern, start_ms, dur_ms, grid)
        labels.append(sid)
        vectors.append(extractor.embed(mono, mixture.sample_rate))
    return EnrollmentPool(labels=tuple(labels), vectors=np.stack(vectors))


def _longest_run(mask: np.ndarray):
    best = None
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            if best is None or i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    if start is not None and (best is None or mask.size - start > best[1] - best[0]):
        best = (start, mask.size)
    return best


@dataclass(frozen=True)
class PortionInfo:
    """Side information about the frames a portion embedding covers."""

    track_id: int
    frames: np.ndarray
    azimuth: np.ndarray
    elevation: np.ndarray


def oracle_pool(gt: GroundTruth, dim: int = 16) -> EnrollmentPool:
    """Canonical one-hot enrollments, one per ground-truth speaker."""
    if dim < len(gt.speaker_ids):
        raise ValueError("oracle pool dimension smaller than speaker count")
    vectors = np.eye(dim)[: len(gt.speaker_ids)]
    return EnrollmentPool(labels=tuple(gt.speaker_ids), vectors=vectors)


class OracleExtractor:
    """Perfect-information extractor for ceiling experiments.

    Ignores the audio and returns the enrollment of the speaker whose
    ground-truth direction agrees with the portion's directions on most
    of its active frames.
    """

    def __init__(self, gt: GroundTruth, pool: EnrollmentPool):
        self.gt = gt
        self.pool = pool
        self.min_context_ms = 0.0

    def embed(self, mono, sample_rate: int) -> np.ndarray:
        raise RuntimeError("oracle extractor needs portion information")

    def embed_portion(self, mono, sample_rate: int, info: PortionInfo) -> np.ndarray:
        if info is None or info.frames.size == 0:
            raise ValueError("oracle extractor needs a portion with active frames")
        ce = np.cos(info.elevation)
        pv = np.stack([np.cos(info.azimuth) * ce, np.sin(info.azimuth) * ce,
                       np.sin(info.elevation)], axis=1)
        votes = np.zeros(len(self.gt.tracks))
        for k, track in enumerate(self.gt.tracks):
            gv = track.unit_vectors()[info.frames]
            act = track.active[info.frames]
            agree = (np.sum(pv * gv, axis=1) > np.cos(np.radians(45.0))) & act
            votes[k] = np.count_nonzero(agree)
        winner = int(np.argmax(votes))
        return self.pool.vector_for(self.gt.speaker_ids[winner])


class ReassignedTimeline:
    """Per-frame, per-source-track identity labels over predicted tracks.

    Positions and activity are those of the input tracks; reassignment
    only attaches labels to active frames.
    """

    def __init__(self, tracks: list[Track], n_frames: int | None = None):
        self.tracks = tuple(tracks)
        self.n_frames = n_frames if n_frames is not None else (
            self.tracks[0].n_frames if self.tracks else 0
        )
        for tr in self.tracks:
            if tr.n_frames != self.n_frames:
                raise ValueError("all tracks must share the frame grid")
        self._index = {tr.track_id: i for i, tr in enumerate(self.tracks)}
        self._labels = [np.full(self.n_frames, None, dtype=object) for _ in self.tracks]
        self._sims = [np.full(self.n_frames, np.nan) for _ in self.tracks]

    def track_by_id(self, track_id: int) -> Track:
        return self.tracks[self._index[track_id]]

    def assign(self, track_id: int, frames, label, similarity: float) -> None:
        frames = np.asarray(frames, dtype=int)
        track = self.track_by_id(track_id)
        if frames.size and not track.active[frames].all():
            raise ValueError("labels may only be assigned to active frames")
        i = self._index[track_id]
        self._labels[i][frames] = label
        self._sims[i][frames] = similarity

    def label_at(self, track_index: int, frame: int):
        return self._labels[track_index][frame]

    def label_for(self, track_id: int, frame: int):
        return self._labels[self._index[track_id]][frame]

    def similarity_for(self, track_id: int, frame: int) -> float:
        return float(self._sims[self._index[track_id]][frame])

    def labeled_frames(self, track_id: int) -> np.ndarray:
        i = self._index[track_id]
        return np.nonzero(self._labels[i] != None)[0]  # noqa: E711


def baseline_timeline(tracks: list[Track]) -> ReassignedTimeline:
    """No reassignment: each branch keeps its own index as identity."""
    timeline = ReassignedTimeline(tracks)
    for track in tracks:
        timeline.assign(track.track_id, track.active_frames(), f"branch{track.track_id}", 1.0)
    return timeline


def write_timeline(path, timeline: ReassignedTimeline) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMELINE_CSV_COLUMNS)
        for track in timeline.tracks:
            for f in timeline.labeled_frames(track.track_id):
                writer.writerow([
                    int(f), track.track_id,
                    str(timeline.label_for(track.track_id, int(f))),
                    f"{timeline.similarity_for(track.track_id, int(f)):.6f}",
                ])


def read_timeline(path, tracks: list[Track]) -> ReassignedTimeline:
    timeline = ReassignedTimeline(tracks)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            timeline.assign(int(row["source_track_id"]), [int(row["frame_index"])],
                            row["identity_label"], float(row["similarity"]))
    return timeline


def _pad_to_min(mono: np.ndarray, min_ms: float, sample_rate: int) -> np.ndarray:
    need = int(np.ceil(min_ms * sample_rate / 1000.0))
    if mono.size >= need:
        return mono
    return np.concatenate([mono, np.zeros(need - mono.size)])


def _portion_info(track: Track, start_frame: int, end_frame: int) -> PortionInfo:
    frames = start_frame + np.nonzero(track.active[start_frame:end_frame])[0]
    return PortionInfo(track_id=track.track_id, frames=frames,
                       azimuth=track.azimuth[frames], elevation=track.elevation[frames])


def reassign_fragments(mixture: FoaSignal, tracks: list[Track], pool: EnrollmentPool,
                       extractor, context_ms: float | None = None,
                       start_policy: str = "beginning", rng=None,
                       fragments: list[Fragment] | None = None,
                       gap_tolerance_frames: int = DEFAULT_GAP_TOLERANCE,
                       pattern: float = DEFAULT_PATTERN,
                       grid: FrameGrid | None = None) -> ReassignedTimeline:
    """Fragment-level reassignment, fragments in temporal order.

    ``context_ms=None`` embeds the whole fragment; otherwise a window of
    that length starting at the fragment beginning (or at a random start
    for ``start_policy="random"``, which needs ``rng``).
    """
    if context_ms is not None and context_ms < MIN_REASSIGN_CONTEXT_MS:
        raise ValueError(f"context shorter than extractor minimum "
                         f"({MIN_REASSIGN_CONTEXT_MS:.0f} ms)")
    if start_policy not in ("beginning", "random"):
        raise ValueError(f"unknown start policy '{start_policy}'")
    if start_policy == "random":
        if rng is None:
            raise ValueError("random start policy needs an rng")
        rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
    if grid is None:
        grid = FrameGrid(sample_rate=mixture.sample_rate)
    if fragments is None:
        fragments = fragment_tracks(tracks, gap_tolerance_frames)

    timeline = ReassignedTimeline(tracks, grid.frame_count(mixture.n_samples))
    for frag in fragments:
        track = timeline.track_by_id(frag.track_id)
        frag_start_ms = frag.start_frame * grid.frame_len_ms
        frag_end_ms = frag.end_frame * grid.frame_len_ms
        if context_ms is None:
            w_start, w_end = frag_start_ms, frag_end_ms
        else:
            if start_policy == "random":
                latest = max(frag_start_ms, frag_end_ms - context_ms)
                w_start = float(rng.uniform(frag_start_ms, latest)) if latest > frag_start_ms \
                    else frag_start_ms
            else:
                w_start = frag_start_ms
            w_end = min(w_start + context_ms, frag_end_ms)
        mono = beamform_crop(mixture, SteeringTrajectory.from_track(track), pattern,
                             w_start, w_end - w_start, grid)
        mono = _pad_to_min(mono, extractor.min_context_ms, mixture.sample_rate)
        info = _portion_info(track, frag.start_frame, frag.end_frame)
        label, sim = decide(
            extractor.embed_portion(mono, mixture.sample_rate, info), pool
        )
        timeline.assign(frag.track_id, info.frames, label, sim)
    return timeline


def iter_signal_blocks(signal: FoaSignal, block_frames: int,
                       grid: FrameGrid | None = None):
    """Split a signal into consecutive block-sized chunks (last one may be
    shorter; trailing samples beyond the last full frame ride with it)."""
    if grid is None:
        grid = FrameGrid(sample_rate=signal.sample_rate)
    n_frames = grid.frame_count(signal.n_samples)
    fs = grid.frame_samples
    n_blocks = int(np.ceil(n_frames / block_frames)) if n_frames else 0
    for k in range(n_blocks):
        start = k * block_frames * fs
        stop = min((k + 1) * block_frames * fs, signal.n_samples)
        if k == n_blocks - 1:
            stop = signal.n_samples
        yield signal.slice_samples(start, stop)


@dataclass(frozen=True)
class BlockDecisions:
    """Assignments emitted for one block: (track_id, frames, label, sim)."""

    block_index: int
    start_frame: int
    end_frame: int
    assignments: tuple


def reassign_blockwise_stream(blocks, tracks: list[Track], pool: EnrollmentPool,
                              extractor, block_frames: int,
                              min_active_fraction: float = DEFAULT_MIN_ACTIVE_FRACTION,
                              pattern: float = DEFAULT_PATTERN,
                              grid: FrameGrid | None = None,
                              sample_rate: int | None = None):
    """Streaming engine: yields each block's decisions before pulling the
    next block of audio from `blocks`.

    Portions (per-track activity inside a block) are processed by first
    active frame. A portion whose active fraction reaches
    `min_active_fraction` gets a fresh decision from its own beamformed
    audio; below that it inherits the track's previous decision, or is
    decided from the available audio anyway when there is none to inherit.
    """
    if block_frames < MIN_BLOCK_FRAMES:
        raise ValueError(f"block size below extractor minimum ({MIN_BLOCK_FRAMES} frames)")
    previous: dict[int, tuple[object, float]] = {}
    cursor = 0
    for k, block_sig in enumerate(blocks):
        if grid is None:
            grid = FrameGrid(sample_rate=block_sig.sample_rate)
        n_local = grid.frame_count(block_sig.n_samples)
        start_f, end_f = cursor, cursor + n_local

        portions = []
        for track in tracks:
            local_active = track.active[start_f:end_f]
            if local_active.any():
                first = int(np.nonzero(local_active)[0][0])
                portions.append((first, track.track_id, track))
        portions.sort(key=lambda p: (p[0], p[1]))

        assignments = []
        for _, tid, track in portions:
            info = _portion_info(track, start_f, end_f)
            frac = info.frames.size / n_local if n_local else 0.0
            if frac >= min_active_fraction or tid not in previous:
                span_lo = int(info.frames[0]) - start_f
                span_hi = int(info.frames[-1]) - start_f + 1
                local_traj = SteeringTrajectory(
                    track.azimuth[start_f:end_f], track.elevation[start_f:end_f],
                    track.active[start_f:end_f],
                )
                mono = beamform(block_sig, local_traj, pattern, grid)
                fs = grid.frame_samples
                mono = mono[span_lo * fs:span_hi * fs]
                mono = _pad_to_min(mono, extractor.min_context_ms, block_sig.sample_rate)
                label, sim = decide(
                    extractor.embed_portion(mono, block_sig.sample_rate, info), pool
                )
                previous[tid] = (label, sim)
            else:
                label, sim = previous[tid]
            assignments.append((tid, info.frames, label, sim))
        yield BlockDecisions(block_index=k, start_frame=start_f, end_frame=end_f,
                             assignments=tuple(assignments))
        cursor = end_f


def reassign_blockwise(mixture, tracks: list[Track], pool: EnrollmentPool,
                       extractor, block_frames: int,
                       min_active_fraction: float = DEFAULT_MIN_ACTIVE_FRACTION,
                       pattern: float = DEFAULT_PATTERN,
                       grid: FrameGrid | None = None) -> ReassignedTimeline:
    """Blockwise reassignment of a full in-memory scene."""
    if grid is None:
        grid = FrameGrid(sample_rate=mixture.sample_rate)
    blocks = iter_signal_blocks(mixture, block_frames, grid)
    timeline = ReassignedTimeline(tracks, grid.frame_count(mixture.n_samples))
    for decision in reassign_blockwise_stream(blocks, tracks, pool, extractor,
                                              block_frames, min_active_fraction,
                                              pattern, grid):
        for tid, frames, label, sim in decision.assignments:
            timeline.assign(tid, frames, label, sim)
    return timeline
