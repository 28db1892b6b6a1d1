"""Reciprocal k-nearest-neighbor graphs over feature vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import cosine, cosine_matrix

DEGREE_EPS = 1e-12


@dataclass(frozen=True)
class Graph:
    """Adjacency ``W`` and its symmetric normalization ``D^-1/2 W D^-1/2``.

    Both are kept as dense arrays; graphs here are at most a few thousand
    nodes and the dense form feeds the direct solver. ``sparse()`` gives
    the CSR form of the normalized matrix for iterative solves.
    """

    adjacency: np.ndarray
    normalized: np.ndarray

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(self.adjacency)) // 2

    def sparse(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(self.normalized)


def pair_similarity(u, v, gamma: float) -> float:
    return max(cosine(u, v), 0.0) ** gamma


def knn_mask(sim: np.ndarray, k: int) -> np.ndarray:
    """Boolean ``t x t`` mask of each row's ``k`` most similar other nodes.

    Self is excluded and equal similarities rank the smaller index first.
    """
    s = np.array(sim, dtype=np.float64)
    np.fill_diagonal(s, -np.inf)
    kth = -np.partition(-s, k - 1, axis=1)[:, k - 1:k]
    above = s > kth
    tied = s == kth
    room = k - above.sum(axis=1, keepdims=True)
    return above | (tied & (np.cumsum(tied, axis=1) <= room))


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    adjacency = np.asarray(adjacency, dtype=np.float64)
    deg = adjacency.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.where(deg > 0, deg, DEGREE_EPS))
    # the outer product is exactly symmetric, so the result is too
    return adjacency * np.outer(inv_sqrt, inv_sqrt)


def build_graph(vectors, k: int, gamma: float) -> Graph:
    """Mutual k-NN graph over the rows of ``vectors``.

    An edge ``(i, j)`` has weight ``max(cos, 0) ** gamma`` and exists only
    if each endpoint is among the other's ``k`` nearest neighbors by cosine.
    ``k`` is clamped to ``t - 1``.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    t = len(vectors)
    if t < 2:
        raise ValueError(f"a graph needs at least 2 nodes, got {t}")
    if k < 1:
        raise ValueError("k must be positive")
    k = min(k, t - 1)

    sim = cosine_matrix(vectors, vectors)
    sim = 0.5 * (sim + sim.T)
    directed = knn_mask(sim, k)
    mutual = directed & directed.T
    np.fill_diagonal(mutual, False)

    adjacency = np.where(mutual, np.maximum(sim, 0.0) ** gamma, 0.0)
    return Graph(adjacency, normalize_adjacency(adjacency))
