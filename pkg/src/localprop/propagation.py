"""Graph diffusion of features and labels, and the local propagation classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Optional

import numpy as np
import scipy.linalg
from scipy import sparse

from .core import Episode, MethodConfig, Predictions
from .graph import Graph, build_graph
from .pooling import local_features

DIRECT_SOLVE_MAX = 4096
CG_TOL = 1e-6
CG_MAX_ITER = 1000


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class NodeEntry:
    image: Hashable
    role: str  # "support" or "query"
    label: Optional[int]
    size: int


@dataclass(frozen=True)
class NodeLayout:
    """Which graph nodes belong to which image, supports before queries."""

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen_query = False
        for e in self.entries:
            if e.role not in ("support", "query"):
                raise ValueError(f"unknown role {e.role!r}")
            if e.size < 1:
                raise ValueError("every image needs at least one node")
            if e.role == "query":
                seen_query = True
            elif seen_query:
                raise ValueError("support images must precede query images")
            if e.role == "support" and e.label is None:
                raise ValueError("support images need a label")

    @property
    def size(self) -> int:
        return sum(e.size for e in self.entries)

    def spans(self):
        """Yield ``(entry, start, stop)`` column ranges."""
        start = 0
        for e in self.entries:
            yield e, start, start + e.size
            start += e.size


def conjugate_gradient(matrix, rhs: np.ndarray, tol: float = CG_TOL, max_iter: int = CG_MAX_ITER) -> np.ndarray:
    """Solve ``matrix @ X = rhs`` for SPD ``matrix``, all columns at once.

    Each column stops updating once its residual falls below ``tol``
    relative to its right-hand side.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    squeeze = rhs.ndim == 1
    b = rhs[:, None] if squeeze else rhs
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = np.einsum("ij,ij->j", r, r)
    target = (tol * np.linalg.norm(b, axis=0)) ** 2

    for _ in range(max_iter):
        active = rs > target
        if not active.any():
            break
        ap = matrix @ p
        curvature = np.einsum("ij,ij->j", p, ap)
        step = np.where(active, rs / np.where(active, curvature, 1.0), 0.0)
        x += p * step
        r -= ap * step
        rs_new = np.einsum("ij,ij->j", r, r)
        beta = np.where(active, rs_new / np.where(active, rs, 1.0), 0.0)
        p = r + p * beta
        rs = rs_new
    else:
        if np.any(rs > target):
            bnorm = np.linalg.norm(b, axis=0)
            rel = np.sqrt(rs) / np.where(bnorm > 0, bnorm, 1.0)
            raise SolverError(f"conjugate gradient did not converge in {max_iter} iterations", float(rel.max()))
    return x[:, 0] if squeeze else x


def propagate(A, normalized, alpha: float, direct_max: int = DIRECT_SOLVE_MAX, tol: float = CG_TOL) -> np.ndarray:
    """Diffuse the rows of ``A`` (``u x t``) over a graph: ``(1-a) A (I - a W)^-1``.

    Graphs of up to ``direct_max`` nodes use a dense Cholesky solve; larger
    ones use conjugate gradients on the sparse system.
    """
    A = np.asarray(A, dtype=np.float64)
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    t = normalized.shape[0]
    if A.shape[-1] != t:
        raise ValueError(f"matrix has {A.shape[-1]} columns, graph has {t} nodes")
    if alpha == 0:
        return A.copy()

    # the system matrix is symmetric, so A M^-1 = (M^-1 A^T)^T
    if t <= direct_max:
        dense = normalized.toarray() if sparse.issparse(normalized) else np.asarray(normalized)
        system = np.eye(t) - alpha * dense
        factor = scipy.linalg.cho_factor(system, check_finite=False)
        solved = scipy.linalg.cho_solve(factor, A.T, check_finite=False)
    else:
        system = sparse.identity(t, format="csr") - alpha * sparse.csr_matrix(normalized)
        solved = conjugate_gradient(system, A.T, tol=tol)
    return (1 - alpha) * solved.T


def feature_propagate(V, k: int, gamma: float, alpha: float, direct_max: int = DIRECT_SOLVE_MAX):
    """Propagate the ``d x t`` feature matrix on its own graph.

    Returns ``(V_tilde, graph)`` where ``graph`` is built on the input ``V``.
    """
    V = np.asarray(V, dtype=np.float64)
    graph = build_graph(V.T, k, gamma)
    if alpha == 0:
        return V.copy(), graph
    return propagate(V, graph.normalized, alpha, direct_max), graph


def build_label_matrix(layout: NodeLayout, ways: int) -> np.ndarray:
    Y = np.zeros((ways, layout.size))
    for entry, start, stop in layout.spans():
        if entry.role != "support":
            continue
        if not 0 <= entry.label < ways:
            raise ValueError(f"label {entry.label} outside [0, {ways})")
        Y[entry.label, start:stop] = 1.0
    return Y


def label_propagate(Y, V_tilde, k: int, gamma: float, alpha: float,
                    graph: Optional[Graph] = None, direct_max: int = DIRECT_SOLVE_MAX) -> np.ndarray:
    """Propagate labels on the graph of the (propagated) features ``V_tilde``.

    A prebuilt ``graph`` on ``V_tilde`` may be passed to skip construction.
    """
    if graph is None:
        graph = build_graph(np.asarray(V_tilde).T, k, gamma)
    return propagate(Y, graph.normalized, alpha, direct_max)


def infer_queries(Y_tilde, layout: NodeLayout) -> Predictions:
    """Per-query class distributions from propagated label scores.

    Columns are l1-normalized (all-zero columns become uniform) and then
    averaged over each query's nodes.
    """
    Y_tilde = np.maximum(np.asarray(Y_tilde, dtype=np.float64), 0.0)
    ways = Y_tilde.shape[0]
    sums = Y_tilde.sum(axis=0)
    probs = np.full_like(Y_tilde, 1.0 / ways)
    nz = sums > 0
    probs[:, nz] = Y_tilde[:, nz] / sums[nz]

    rows = [probs[:, start:stop].mean(axis=1) for e, start, stop in layout.spans() if e.role == "query"]
    return Predictions(np.array(rows).reshape(-1, ways))


def episode_nodes(episode: Episode, config: MethodConfig):
    """Feature rows and layout for every image of an episode."""
    blocks, entries = [], []
    images = [(t, "support", l) for t, l in zip(episode.support, episode.support_labels)]
    images += [(t, "query", None) for t in episode.query]
    for i, (tensor, role, label) in enumerate(images):
        vectors = local_features(tensor, config)
        blocks.append(vectors)
        entries.append(NodeEntry(i, role, label, len(vectors)))
    return np.vstack(blocks), NodeLayout(entries)


def local_propagation_predict(episode: Episode, config: MethodConfig) -> Predictions:
    """Classify all queries of ``episode`` jointly by local label propagation."""
    rows, layout = episode_nodes(episode, config)
    V = rows.T
    k, gamma, direct = config.knn, config.gamma, config.direct_solve_max

    if config.use_feature_propagation and config.alpha_feature > 0:
        V_tilde, _ = feature_propagate(V, k, gamma, config.alpha_feature, direct)
        graph = build_graph(V_tilde.T, k, gamma)
    else:
        V_tilde = V
        graph = build_graph(V.T, k, gamma)

    Y = build_label_matrix(layout, episode.ways)
    Y_tilde = label_propagate(Y, V_tilde, k, gamma, config.alpha_label, graph=graph, direct_max=direct)
    return infer_queries(Y_tilde, layout)
