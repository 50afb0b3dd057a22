"""Speaker-embedding extractors: frozen teacher, trainable student.

Both extractors share the same pipeline head (band-energy features and
statistics pooling) and both return unit-norm vectors, so cosine scoring
works interchangeably across them. The teacher is a fixed seeded linear
projection of the pooled statistics; the student is a small two-layer
network trained to match the teacher (see :mod:`foatrack.distill`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .features import N_BANDS, features, stats_pool

EMBEDDING_DIM = 16
HIDDEN_WIDTH = 64
TEACHER_SEED = 90210
TEACHER_MIN_CONTEXT_MS = 500.0
STUDENT_MIN_CONTEXT_MS = 250.0
MODEL_FORMAT_VERSION = 1


def normalize_embedding(v: np.ndarray) -> np.ndarray:
    """L2-normalize, rejecting vectors too small to carry a direction."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise ValueError("degenerate pre-normalization vector")
    return v / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def _require_min_context(mono, sample_rate: int, min_ms: float, who: str) -> np.ndarray:
    s = np.asarray(mono, dtype=np.float64)
    if s.size * 1000.0 < min_ms * sample_rate:
        raise ValueError(
            f"{who} needs at least {min_ms:.0f} ms of audio, "
            f"got {s.size * 1000.0 / sample_rate:.1f} ms"
        )
    return s


class TeacherExtractor:
    """Frozen long-context extractor: pooled stats through a seeded projection.

    The projection has orthonormal columns, built orthogonal to the
    direction a uniform log-energy offset moves the pooled vector in, so
    embeddings are nearly invariant to input amplitude scaling.
    """

    def __init__(self, dim: int = EMBEDDING_DIM, n_bands: int = N_BANDS,
                 seed: int = TEACHER_SEED):
        self.dim = dim
        self.n_bands = n_bands
        self.min_context_ms = TEACHER_MIN_CONTEXT_MS
        rng = np.random.default_rng(seed)
        in_dim = 2 * n_bands
        raw = rng.standard_normal((in_dim, dim))
        gain_dir = np.zeros(in_dim)
        gain_dir[:n_bands] = 1.0 / np.sqrt(n_bands)
        raw -= np.outer(gain_dir, gain_dir @ raw)
        q, _ = np.linalg.qr(raw)
        self.projection = q[:, :dim]

    def embed(self, mono, sample_rate: int) -> np.ndarray:
        s = _require_min_context(mono, sample_rate, self.min_context_ms, "teacher extractor")
        pooled = stats_pool(features(s, sample_rate, n_bands=self.n_bands))
        return normalize_embedding(pooled @ self.projection)

    def embed_portion(self, mono, sample_rate: int, info=None) -> np.ndarray:
        return self.embed(mono, sample_rate)


@dataclass
class StudentModel:
    """Parameters of the student network: affine -> tanh -> affine."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    n_bands: int = N_BANDS

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {name}")
            setattr(self, name, arr)
        in_dim, hidden = self.w1.shape
        if in_dim != 2 * self.n_bands:
            raise ValueError("w1 input dimension must be 2 * n_bands")
        if self.b1.shape != (hidden,):
            raise ValueError("b1 shape inconsistent with w1")
        if self.w2.shape[0] != hidden or self.b2.shape != (self.w2.shape[1],):
            raise ValueError("second-layer shapes inconsistent")

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "StudentModel":
        return StudentModel(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.n_bands
        )

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]


def init_student(seed: int = 0, n_bands: int = N_BANDS, hidden: int = HIDDEN_WIDTH,
                 dim: int = EMBEDDING_DIM) -> StudentModel:
    """Seeded initialization, small enough to keep tanh unsaturated."""
    rng = np.random.default_rng(seed)
    in_dim = 2 * n_bands
    return StudentModel(
        w1=0.01 * rng.standard_normal((in_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.standard_normal((hidden, dim)) / np.sqrt(hidden),
        b2=np.zeros(dim),
        n_bands=n_bands,
    )


def student_forward_pooled(model: StudentModel, pooled: np.ndarray):
    """Forward pass from a pooled feature vector; returns intermediates."""
    z1 = pooled @ model.w1 + model.b1
    a = np.tanh(z1)
    z2 = a @ model.w2 + model.b2
    emb = normalize_embedding(z2)
    return z1, a, z2, emb


def student_extract(model: StudentModel, mono, sample_rate: int) -> np.ndarray:
    s = _require_min_context(mono, sample_rate, STUDENT_MIN_CONTEXT_MS, "student extractor")
    pooled = stats_pool(features(s, sample_rate, n_bands=model.n_bands))
    return student_forward_pooled(model, pooled)[3]


class StudentExtractor:
    """Extractor-interface wrapper around a StudentModel."""

    def __init__(self, model: StudentModel):
        self.model = model
        self.min_context_ms = STUDENT_MIN_CONTEXT_MS
        self.dim = model.dim

    def embed(self, mono, sample_rate: int) -> np.ndarray:
        return student_extract(self.model, mono, sample_rate)

    def embed_portion(self, mono, sample_rate: int, info=None) -> np.ndarray:
        return self.embed(mono, sample_rate)


def save_student(path, model: StudentModel) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "n_bands": model.n_bands,
        "hidden": model.hidden,
        "dim": model.dim,
        "w1": model.w1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.ravel().tolist(),
        "b2": model.b2.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_student(path) -> StudentModel:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    n_bands = int(payload["n_bands"])
    hidden = int(payload["hidden"])
    dim = int(payload["dim"])
    return StudentModel(
        w1=np.array(payload["w1"], dtype=np.float64).reshape(2 * n_bands, hidden),
        b1=np.array(payload["b1"], dtype=np.float64),
        w2=np.array(payload["w2"], dtype=np.float64).reshape(hidden, dim),
        b2=np.array(payload["b2"], dtype=np.float64),
        n_bands=n_bands,
    )
