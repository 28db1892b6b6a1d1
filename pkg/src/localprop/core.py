"""Feature tensors, episodes, method configuration and elementary math."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class FeatureTensor:
    """A ``w x h x d`` embedding of one image.

    Positions are enumerated in raster order over ``[w] x [h]``, so
    ``positions()[x * h + y]`` is the feature vector at ``(x, y)``.
    Tensors are immutable, so derived features may be memoized on them.
    """

    data: np.ndarray
    # derived features keyed by the settings that produced them
    _derived: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"feature tensor must be w x h x d, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature tensor contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def positions(self) -> np.ndarray:
        """Return the ``(w*h, d)`` matrix of position vectors."""
        return self.data.reshape(-1, self.depth)

    @classmethod
    def from_positions(cls, vectors, width: int, height: int) -> "FeatureTensor":
        vectors = np.asarray(vectors, dtype=np.float64)
        return cls(vectors.reshape(width, height, -1))


@dataclass(frozen=True)
class Episode:
    """A c-way s-shot task.

    Labels are 0-based class indices into the episode's classes.
    ``query_labels`` holds ground truth when known (evaluation); inference
    never reads it.
    """

    ways: int
    shots: int
    support: tuple
    support_labels: tuple
    query: tuple
    query_labels: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "support_labels", tuple(int(l) for l in self.support_labels))
        object.__setattr__(self, "query", tuple(self.query))
        if self.query_labels is not None:
            object.__setattr__(self, "query_labels", tuple(int(l) for l in self.query_labels))

        if self.ways < 1 or self.shots < 1:
            raise ValueError("ways and shots must be positive")
        if len(self.support) != self.ways * self.shots:
            raise ValueError(
                f"expected {self.ways * self.shots} support tensors, got {len(self.support)}"
            )
        if len(self.support_labels) != len(self.support):
            raise ValueError("one label per support tensor is required")
        in_range = all(0 <= l < self.ways for l in self.support_labels)
        if not in_range or np.any(np.bincount(self.support_labels, minlength=self.ways) != self.shots):
            raise ValueError(f"every label in [0, {self.ways}) needs exactly {self.shots} supports")
        if self.query_labels is not None and len(self.query_labels) != len(self.query):
            raise ValueError("query_labels must match query length")
        shapes = {t.shape for t in self.support} | {t.shape for t in self.query}
        if len(shapes) != 1:
            raise ValueError(f"all tensors must share one shape, got {sorted(shapes)}")

    @property
    def num_queries(self) -> int:
        return len(self.query)

    def singletons(self) -> list:
        """Split into one episode per query (the non-transductive setting)."""
        out = []
        for i, tensor in enumerate(self.query):
            labels = None if self.query_labels is None else (self.query_labels[i],)
            out.append(
                Episode(self.ways, self.shots, self.support, self.support_labels, (tensor,), labels)
            )
        return out


@dataclass(frozen=True)
class MethodConfig:
    """Inference parameters shared by every method.

    ``pool_kernel`` is the local spatial pooling window applied to stored
    tensors before anything else; 1 means the store already holds pooled
    features. ``nbnn_knn`` is the neighbor count of the NBNN baseline,
    separate from the propagation graph's ``knn``. ``direct_solve_max`` is the largest graph solved densely.
    """

    tau: float = 0.3
    clusters: int = 60
    knn: int = 50
    nbnn_knn: int = 1
    gamma: float = 4.0
    alpha_feature: float = 0.9
    alpha_label: float = 0.9
    rho: float = 10.0
    use_attention: bool = True
    use_pooling: bool = True
    use_feature_propagation: bool = True
    transductive: bool = False
    seed: int = 0
    pool_kernel: int = 1
    direct_solve_max: int = 4096

    def __post_init__(self):
        for name in ("tau", "gamma", "alpha_feature", "alpha_label", "rho"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if min(self.clusters, self.knn, self.nbnn_knn, self.pool_kernel) < 1:
            raise ValueError("clusters, knn, nbnn_knn and pool_kernel must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        for name in ("alpha_feature", "alpha_label"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class Predictions:
    """Per-query class scores (``q x c``) and predicted labels."""

    scores: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        self.scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        if self.labels is None:
            self.labels = np.array([predict(row) for row in self.scores], dtype=np.int64)


def cosine(u, v) -> float:
    """Cosine similarity; 0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Unit-normalize rows; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def cosine_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarities between rows of ``a`` and rows of ``b``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return np.clip(normalize_rows(a) @ normalize_rows(b).T, -1.0, 1.0)


def softmax(a, rho: float = 1.0) -> np.ndarray:
    """Softmax of ``rho * a`` along the last axis."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    z = rho * a
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(p: Sequence[float]) -> int:
    """Index of the largest entry; ties go to the smallest index."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise ValueError("cannot predict from an empty vector")
    return int(np.argmax(p))
