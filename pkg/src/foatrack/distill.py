"""Teacher-to-student distillation on random beamformed crops.

Each rendered scene yields one training item per speaker: the frozen
teacher embeds the speaker's full wet W channel as the target, while the
student sees a short random crop of the mixture beamformed along that
speaker's ground-truth trajectory. Gradients are computed by explicit
backpropagation through normalization, the affine layers and tanh, with
the pooled features treated as a fixed input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .beamform import DEFAULT_PATTERN, SteeringTrajectory, beamform
from .embeddings import (
    StudentModel,
    TeacherExtractor,
    init_student,
    student_forward_pooled,
)
from .features import features, stats_pool
from .foa import FrameGrid
from .scenes import RenderedScene

CROP_DURATIONS_MS = (250.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0, 8000.0)


@dataclass(frozen=True)
class CropSpec:
    durations_ms: tuple[float, ...] = CROP_DURATIONS_MS
    min_active_fraction: float = 0.5
    max_attempts: int = 100


def crop_active_fraction(activity: np.ndarray, start_ms: float, dur_ms: float,
                         grid: FrameGrid) -> float:
    """Fraction of active frames among frames whose center lies in the crop."""
    n_frames = activity.shape[0]
    centers_ms = grid.frame_centers_s(n_frames) * 1000.0
    inside = (centers_ms >= start_ms) & (centers_ms < start_ms + dur_ms)
    if not inside.any():
        return 0.0
    return float(np.count_nonzero(activity & inside)) / float(np.count_nonzero(inside))


def sample_crop(n_samples: int, sample_rate: int, activity: np.ndarray,
                rng: np.random.Generator, spec: CropSpec | None = None,
                grid: FrameGrid | None = None) -> tuple[float, float]:
    """Rejection-sample a (start_ms, dur_ms) crop with enough activity."""
    if spec is None:
        spec = CropSpec()
    if grid is None:
        grid = FrameGrid(sample_rate=sample_rate)
    total_ms = n_samples * 1000.0 / sample_rate
    feasible = [d for d in spec.durations_ms if d <= total_ms]
    if not feasible:
        raise ValueError("signal shorter than the shortest crop duration")
    for _ in range(spec.max_attempts):
        dur = feasible[rng.integers(len(feasible))]
        start = rng.uniform(0.0, total_ms - dur)
        if crop_active_fraction(activity, start, dur, grid) >= spec.min_active_fraction:
            return start, dur
    raise RuntimeError(
        f"no crop with active fraction >= {spec.min_active_fraction} "
        f"found in {spec.max_attempts} attempts"
    )


def kd_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error between two embeddings."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"dimension mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]


def kd_grad_pooled(model: StudentModel, pooled: np.ndarray,
                   target: np.ndarray) -> tuple[float, Gradients]:
    """Loss and parameter gradients for one pooled feature vector."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (model.dim,):
        raise ValueError(f"dimension mismatch: target {target.shape}, model dim {model.dim}")
    _, a, z2, emb = student_forward_pooled(model, pooled)
    d = emb.shape[0]
    loss = float(np.mean((emb - target) ** 2))

    g_emb = 2.0 * (emb - target) / d
    # through the L2 normalization: J = (I - e e^T) / ||z2||
    r = float(np.linalg.norm(z2))
    g_z2 = (g_emb - emb * float(np.dot(emb, g_emb))) / r
    g_w2 = np.outer(a, g_z2)
    g_b2 = g_z2
    g_a = model.w2 @ g_z2
    g_z1 = (1.0 - a**2) * g_a
    g_w1 = np.outer(pooled, g_z1)
    g_b1 = g_z1
    return loss, Gradients(g_w1, g_b1, g_w2, g_b2)


def kd_grad(model: StudentModel, mono, sample_rate: int,
            target: np.ndarray) -> tuple[float, Gradients]:
    """Gradients for one audio crop (pooling treated as a fixed input)."""
    pooled = stats_pool(features(mono, sample_rate, n_bands=model.n_bands))
    return kd_grad_pooled(model, pooled, target)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_model(cls, model: StudentModel) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in model.params()],
            v=[np.zeros_like(p) for p in model.params()],
        )


def adam_step(model: StudentModel, grads: Gradients, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place Adam update of the model parameters."""
    state.t += 1
    for p, g, m, v in zip(model.params(), grads.params(), state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**state.t)
        v_hat = v / (1.0 - beta2**state.t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch: int = 16
    seed: int = 0
    pattern: float = DEFAULT_PATTERN
    hidden: int = 64
    dim: int = 16
    crop: CropSpec = field(default_factory=CropSpec)


@dataclass(frozen=True)
class TrainItem:
    """Cached per-(scene, target speaker) training material."""

    beamformed: np.ndarray
    activity: np.ndarray
    target: np.ndarray
    sample_rate: int


def prepare_items(scenes, teacher: TeacherExtractor,
                  pattern: float = DEFAULT_PATTERN) -> list[TrainItem]:
    items = []
    for scene in scenes:
        gt = scene.ground_truth
        sr = scene.mixture.sample_rate
        for k, track in enumerate(gt.tracks):
            target = teacher.embed(scene.wet[k].w, sr)
            bf = beamform(scene.mixture, SteeringTrajectory.from_track(track),
                          pattern, gt.grid)
            items.append(TrainItem(beamformed=bf, activity=track.active.copy(),
                                   target=target, sample_rate=sr))
    return items


def train_student(scenes, config: TrainConfig | None = None,
                  teacher: TeacherExtractor | None = None,
                  loss_log_path=None) -> tuple[StudentModel, list[dict]]:
    """Distill the student from the teacher over the given rendered scenes.

    Returns the trained model and the per-step loss history
    ``[{"epoch": e, "step": s, "loss": l}, ...]``; per-epoch mean rows use
    step -1. Deterministic for a fixed config seed.
    """
    if config is None:
        config = TrainConfig()
    if teacher is None:
        teacher = TeacherExtractor(dim=config.dim)

    items = prepare_items(scenes, teacher, config.pattern)
    if not items:
        raise ValueError("no training scenes provided")

    rng = np.random.default_rng(config.seed)
    model = init_student(seed=config.seed, hidden=config.hidden, dim=config.dim)
    state = AdamState.for_model(model)
    grid = FrameGrid(sample_rate=items[0].sample_rate)

    history: list[dict] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        epoch_losses = []
        for lo in range(0, len(order), config.batch):
            batch_idx = order[lo:lo + config.batch]
            acc = Gradients(*(np.zeros_like(p) for p in model.params()))
            batch_loss = 0.0
            for i in batch_idx:
                item = items[i]
                start_ms, dur_ms = sample_crop(
                    item.beamformed.size, item.sample_rate, item.activity,
                    rng, config.crop, grid,
                )
                sr = item.sample_rate
                i0 = int(round(start_ms * sr / 1000.0))
                i1 = i0 + int(round(dur_ms * sr / 1000.0))
                loss, grads = kd_grad(model, item.beamformed[i0:i1], sr, item.target)
                batch_loss += loss
                for g_acc, g in zip(acc.params(), grads.params()):
                    g_acc += g
            n = len(batch_idx)
            for g_acc in acc.params():
                g_acc /= n
            adam_step(model, acc, state, config.lr)
            batch_loss /= n
            epoch_losses.append(batch_loss)
            history.append({"epoch": epoch, "step": step, "loss": batch_loss})
            step += 1
        history.append({"epoch": epoch, "step": -1, "loss": float(np.mean(epoch_losses))})

    if loss_log_path is not None:
        write_loss_log(loss_log_path, history)
    return model, history


def epoch_mean_losses(history: list[dict]) -> list[float]:
    return [row["loss"] for row in history if row["step"] == -1]


def write_loss_log(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss"])
        for row in history:
            writer.writerow([row["epoch"], row["step"], f"{row['loss']:.10f}"])
