"""Feature pooling: k-means centroids of an image's attended features."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Hashable, Optional

import numpy as np

from .attention import select_features

MAX_ITER = 100
REL_TOL = 1e-4


@dataclass(frozen=True)
class PooledImage:
    centroids: np.ndarray
    source: Optional[Hashable] = None

    @property
    def size(self) -> int:
        return len(self.centroids)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: list  # one value per assignment step


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


def content_seed(vectors: np.ndarray, seed: int) -> int:
    """Derive a 64-bit seed from array contents so an image pools identically in any episode.

    Contents are hashed after dividing by the largest row norm and rounding,
    so a positively rescaled image gets the same seed.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    scale = np.linalg.norm(vectors, axis=-1).max() if vectors.size else 0.0
    shape = vectors / scale if scale > 0 else vectors
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little"))
    h.update(np.ascontiguousarray(np.round(shape, 6) + 0.0).tobytes())
    return int.from_bytes(h.digest(), "little")


def global_average_pool(vectors) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError("global average pooling needs a nonempty (n, d) array")
    return vectors.mean(axis=0)


def _distinct_rows(x: np.ndarray) -> np.ndarray:
    _, first = np.unique(x, axis=0, return_index=True)
    return x[np.sort(first)]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_plusplus(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding.

    Stops early once every row coincides with a chosen center, so at most
    the number of distinct rows is returned.
    """
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, m):
        cum = np.cumsum(d2)
        if cum[-1] <= 0:
            break
        idx = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(x, m: int, rng: np.random.Generator, max_iter: int = MAX_ITER, tol: float = REL_TOL) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Clusters that lose all their points are dropped, so fewer than ``m``
    centroids may come back. When ``m`` reaches the number of distinct
    rows, the distinct rows themselves are returned.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("k-means needs a nonempty (n, d) array")
    if m < 1:
        raise ValueError("m must be positive")

    if m >= len(x):
        distinct = _distinct_rows(x)
        labels = _sq_dists(x, distinct).argmin(axis=1)
        return KMeansResult(distinct, labels, [0.0])

    centroids = kmeans_plusplus(x, m, rng)
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(x, centroids)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(len(x)), labels].sum())
        history.append(inertia)

        counts = np.bincount(labels, minlength=len(centroids))
        used = np.flatnonzero(counts)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        centroids = sums[used] / counts[used, None]
        labels = np.searchsorted(used, labels)

        if len(history) > 1:
            prev = history[-2]
            if prev == 0 or (prev - inertia) < tol * prev:
                break
    return KMeansResult(centroids, labels, history)


def feature_pool(vectors, m: int, seed: int = 0, source: Optional[Hashable] = None) -> PooledImage:
    """Pool a feature set into at most ``m`` k-means centroids.

    ``m == 1`` is exactly global average pooling.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError("feature pooling needs a nonempty (n, d) array")
    if m == 1:
        return PooledImage(global_average_pool(vectors)[None, :], source)
    result = kmeans(vectors, m, make_rng(seed))
    return PooledImage(result.centroids, source)


def local_features(tensor, config) -> np.ndarray:
    """Attended local vectors of one image, k-means pooled when enabled.

    The k-means seed mixes ``config.seed`` with the image contents, so an
    image pools to the same centroids in every episode it appears in.
    """
    key = ("local", config.pool_kernel, config.use_attention, config.tau,
           config.use_pooling, config.clusters, config.seed)
    cached = tensor._derived.get(key)
    if cached is not None:
        return cached
    vectors = select_features(tensor, config)
    if config.use_pooling:
        vectors = feature_pool(vectors, config.clusters, content_seed(vectors, config.seed)).centroids
    vectors.setflags(write=False)
    tensor._derived[key] = vectors
    return vectors
