"""Identity-sensitive tracking evaluation.

Per frame, active ground-truth points are matched one-to-one against
labeled predicted points by angular distance (optimal assignment under a
gating threshold). The association accuracy (AssA) then scores, for every
true-positive match c = (gt id, predicted label), how consistently that
pairing holds across the whole scene:

    A(c) = TPA / (TPA + FNA + FPA),   AssA = mean over TPs of A(c)

where TPA counts TPs with the same pairing, FNA the gt points of c's
speaker not matched to c's label, and FPA the predicted points of c's
label not matched to c's speaker.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

_GATE_COST = 1e6


@dataclass(frozen=True)
class MatchConfig:
    angle_threshold_deg: float = 10.0

    def __post_init__(self):
        if self.angle_threshold_deg <= 0.0:
            raise ValueError("angle threshold must be positive")


@dataclass(frozen=True)
class FrameMatches:
    """Outcome of per-frame bipartite matching over a scene."""

    n_frames: int
    pairs_per_frame: tuple[tuple[tuple[object, object], ...], ...]
    gt_point_counts: dict
    pred_point_counts: dict

    def all_pairs(self):
        for frame_pairs in self.pairs_per_frame:
            yield from frame_pairs


def _angular_distances(gt_vecs: np.ndarray, pred_vecs: np.ndarray) -> np.ndarray:
    dots = np.clip(gt_vecs @ pred_vecs.T, -1.0, 1.0)
    return np.arccos(dots)


def match_frames(gt, timeline, cfg: MatchConfig | None = None) -> FrameMatches:
    """Match active gt points to labeled predicted points, frame by frame."""
    if cfg is None:
        cfg = MatchConfig()
    if timeline.n_frames != gt.n_frames:
        raise ValueError(
            f"frame-grid mismatch: timeline has {timeline.n_frames} frames, "
            f"ground truth {gt.n_frames}"
        )
    threshold = math.radians(cfg.angle_threshold_deg)

    gt_vecs = [tr.unit_vectors() for tr in gt.tracks]
    pred_vecs = [tr.unit_vectors() for tr in timeline.tracks]

    gt_counts: Counter = Counter()
    pred_counts: Counter = Counter()
    pairs_per_frame = []
    for f in range(gt.n_frames):
        gts = [(sid, gt_vecs[k][f])
               for k, (tr, sid) in enumerate(zip(gt.tracks, gt.speaker_ids))
               if tr.active[f]]
        preds = []
        for k, tr in enumerate(timeline.tracks):
            label = timeline.label_at(k, f)
            if tr.active[f] and label is not None:
                preds.append((label, pred_vecs[k][f]))
        for sid, _ in gts:
            gt_counts[sid] += 1
        for label, _ in preds:
            pred_counts[label] += 1
        if not gts or not preds:
            pairs_per_frame.append(())
            continue
        cost = _angular_distances(np.stack([v for _, v in gts]),
                                  np.stack([v for _, v in preds]))
        gated = np.where(cost <= threshold, cost, _GATE_COST)
        rows, cols = linear_sum_assignment(gated)
        frame_pairs = tuple(
            (gts[i][0], preds[j][0])
            for i, j in zip(rows, cols)
            if cost[i, j] <= threshold
        )
        pairs_per_frame.append(frame_pairs)

    return FrameMatches(
        n_frames=gt.n_frames,
        pairs_per_frame=tuple(pairs_per_frame),
        gt_point_counts=dict(gt_counts),
        pred_point_counts=dict(pred_counts),
    )


@dataclass(frozen=True)
class AssAReport:
    assa: float
    tp_count: int
    pair_table: tuple[tuple[object, object, int, int, int], ...]


def assa(matches: FrameMatches) -> AssAReport:
    """Association accuracy over the matched scene; 0.0 when no TPs."""
    tp_counts: Counter = Counter(matches.all_pairs())
    total_tp = sum(tp_counts.values())
    if total_tp == 0:
        return AssAReport(assa=0.0, tp_count=0, pair_table=())

    table = []
    weighted = 0.0
    for (g, p), tpa in sorted(tp_counts.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
        fna = matches.gt_point_counts[g] - tpa
        fpa = matches.pred_point_counts[p] - tpa
        weighted += tpa * (tpa / (tpa + fna + fpa))
        table.append((g, p, tpa, fna, fpa))
    return AssAReport(assa=weighted / total_tp, tp_count=total_tp, pair_table=tuple(table))


def bootstrap_assa(scene_scores, fraction: float = 0.8, iterations: int = 100,
                   seed: int = 0) -> tuple[float, float]:
    """Mean/std of the mean score over repeated 80% subsamples (no replacement)."""
    scores = np.asarray(list(scene_scores), dtype=np.float64)
    if scores.size < 5:
        raise ValueError(f"bootstrap needs at least 5 scenes, got {scores.size}")
    rng = np.random.default_rng(seed)
    k = max(1, int(round(fraction * scores.size)))
    means = np.array([
        scores[rng.choice(scores.size, size=k, replace=False)].mean()
        for _ in range(iterations)
    ])
    return float(means.mean()), float(means.std())


def count_swaps(timeline, gt, cfg: MatchConfig | None = None) -> int:
    """Frames where a speaker's matched identity label changes.

    For each ground-truth speaker, the sequence of labels it is matched to
    (skipping frames with no match) is scanned; every change counts one.
    """
    matches = match_frames(gt, timeline, cfg)
    last_label: dict = {}
    swaps = 0
    for frame_pairs in matches.pairs_per_frame:
        for g, p in frame_pairs:
            if g in last_label and last_label[g] != p:
                swaps += 1
            last_label[g] = p
    return swaps
