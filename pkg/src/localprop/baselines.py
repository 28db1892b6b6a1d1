"""Non-propagation few-shot classifiers: prototypes, matching, local matching and NBNN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import select_features
from .core import Episode, MethodConfig, Predictions, cosine_matrix, softmax
from .pooling import global_average_pool, local_features


@dataclass(frozen=True)
class ClassBank:
    """All local support vectors, grouped by class."""

    vectors: tuple  # one (n_j, d) array per class

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(np.asarray(v, dtype=np.float64) for v in self.vectors))
        if not self.vectors:
            raise ValueError("empty class bank")
        for j, v in enumerate(self.vectors):
            if v.ndim != 2 or len(v) == 0:
                raise ValueError(f"class {j} has no vectors")

    @property
    def ways(self) -> int:
        return len(self.vectors)


def one_hot(labels, ways: int) -> np.ndarray:
    return np.eye(ways)[np.asarray(labels, dtype=np.int64)]


def cosine_classify(x, weights, rho: float) -> np.ndarray:
    """Softmax over scaled cosine similarities to each class weight.

    ``x`` may be a single vector or a batch of row vectors.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if len(weights) == 0:
        raise ValueError("no class weights")
    x = np.asarray(x, dtype=np.float64)
    scores = softmax(cosine_matrix(x, weights), rho)
    return scores[0] if x.ndim == 1 else scores


def class_means(vectors, labels, ways: int) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    means = []
    for j in range(ways):
        members = vectors[labels == j]
        if len(members) == 0:
            raise ValueError(f"class {j} has no support examples")
        means.append(members.mean(axis=0))
    return np.array(means)


def gap_vector(tensor, config: MethodConfig) -> np.ndarray:
    return global_average_pool(select_features(tensor, config))


def prototypes(episode: Episode, pool_mode: str = "gap", config: MethodConfig = None) -> np.ndarray:
    """Per-class mean of support representations.

    ``pool_mode`` is ``"gap"`` (average the attended positions of each
    image) or ``"flatten"`` (concatenate all positions).
    """
    if pool_mode == "gap":
        config = config or MethodConfig(use_attention=False)
        reps = [gap_vector(t, config) for t in episode.support]
    elif pool_mode == "flatten":
        reps = [t.data.ravel() for t in episode.support]
    else:
        raise ValueError(f"unknown pool mode {pool_mode!r}")
    return class_means(reps, episode.support_labels, episode.ways)


def gap_proto_predict(episode: Episode, config: MethodConfig) -> Predictions:
    protos = prototypes(episode, "gap", config)
    queries = np.array([gap_vector(t, config) for t in episode.query])
    return Predictions(cosine_classify(queries, protos, config.rho))


def _match(query_vectors, support_vectors, support_onehot, rho) -> np.ndarray:
    weights = softmax(cosine_matrix(query_vectors, support_vectors), rho)
    return weights @ support_onehot


def matching_predict(episode: Episode, config: MethodConfig) -> Predictions:
    """Attention over GAP support vectors with one-hot label mixing."""
    supports = np.array([gap_vector(t, config) for t in episode.support])
    queries = np.array([gap_vector(t, config) for t in episode.query])
    return Predictions(_match(queries, supports, one_hot(episode.support_labels, episode.ways), config.rho))


def local_match_predict(episode: Episode, config: MethodConfig) -> Predictions:
    """Matching with every local support vector as its own example.

    Scores of a query are averaged over its local vectors.
    """
    blocks, labels = [], []
    for tensor, label in zip(episode.support, episode.support_labels):
        v = local_features(tensor, config)
        blocks.append(v)
        labels.extend([label] * len(v))
    supports = np.vstack(blocks)
    onehot = one_hot(labels, episode.ways)
    rows = [_match(local_features(t, config), supports, onehot, config.rho).mean(axis=0) for t in episode.query]
    return Predictions(np.array(rows).reshape(-1, episode.ways))


def class_bank(episode: Episode, config: MethodConfig) -> ClassBank:
    per_class = [[] for _ in range(episode.ways)]
    for tensor, label in zip(episode.support, episode.support_labels):
        per_class[label].append(local_features(tensor, config))
    return ClassBank([np.vstack(v) for v in per_class])


def nbnn_score(query_vectors, bank: ClassBank, knn: int) -> np.ndarray:
    """Image-to-class scores: for each query vector, the summed cosine to its
    ``knn`` most similar vectors of each class, summed over query vectors."""
    if knn < 1:
        raise ValueError("knn must be positive")
    query_vectors = np.atleast_2d(np.asarray(query_vectors, dtype=np.float64))
    scores = np.empty(bank.ways)
    for j, vectors in enumerate(bank.vectors):
        sim = cosine_matrix(query_vectors, vectors)
        kk = min(knn, sim.shape[1])
        top = -np.sort(-sim, axis=1)[:, :kk]
        scores[j] = top.sum()
    return scores


def nbnn_predict(episode: Episode, config: MethodConfig) -> Predictions:
    bank = class_bank(episode, config)
    rows = [nbnn_score(local_features(t, config), bank, config.nbnn_knn) for t in episode.query]
    return Predictions(np.array(rows).reshape(-1, episode.ways))
