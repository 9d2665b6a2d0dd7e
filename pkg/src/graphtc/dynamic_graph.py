"""Dynamic graphs, hierarchical multigraphs and graph Laplacian tensors.

A dynamic graph on ``m`` fixed vertices over ``T`` periods is stored as a
binary, slice-wise symmetric adjacency tensor of shape ``(m, m, T)``.
Aggregating over windows of width ``ss`` (the similarity scale) gives the
hierarchical multigraph; duplicating each aggregated layer ``ss`` times and
taking degree-minus-adjacency per slice gives the Laplacian tensor used by
the smoothness regularizer.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tensor_algebra import Transform, identity_tensor

__all__ = [
    "DynamicGraph",
    "HierarchicalMultigraph",
    "LaplacianTensor",
    "from_edge_events",
    "static_graph",
    "aggregate",
    "laplacian_tensor",
    "smoothness_analytic",
    "smoothness_combinatorial",
    "knn_similarity_graph",
]


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    """Adjacency tensor of a dynamic graph.

    ``weighted=True`` admits non-negative weights instead of 0/1 entries;
    this is experimental and only the Laplacian path is meant to use it.
    """

    adjacency: np.ndarray
    weighted: bool = False

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 3 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must have shape (m, m, T), got {a.shape}")
        if not np.array_equal(a, a.transpose(1, 0, 2)):
            raise ValueError("adjacency slices must be symmetric")
        if np.any(np.einsum("iit->it", a) != 0):
            raise ValueError("adjacency slices must have a zero diagonal")
        if self.weighted:
            if np.any(a < 0):
                raise ValueError("edge weights must be non-negative")
        elif not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def vertex_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def period_count(self) -> int:
        return self.adjacency.shape[2]

    def edge_counts(self) -> np.ndarray:
        """Number of undirected edges in each period."""
        return self.adjacency.sum(axis=(0, 1)) / 2

    def first_period_static(self) -> "DynamicGraph":
        """The graph of period 1 repeated over all periods."""
        a = np.repeat(self.adjacency[:, :, :1], self.period_count, axis=2)
        return DynamicGraph(a, self.weighted)


@dataclass(frozen=True, eq=False)
class HierarchicalMultigraph:
    agg_adjacency: np.ndarray
    window: int

    @property
    def vertex_count(self) -> int:
        return self.agg_adjacency.shape[0]

    @property
    def layer_count(self) -> int:
        return self.agg_adjacency.shape[2]

    def elongated(self) -> np.ndarray:
        """Each layer repeated ``window`` times along the third mode."""
        return np.repeat(self.agg_adjacency, self.window, axis=2)


@dataclass(frozen=True, eq=False)
class LaplacianTensor:
    """Slice-wise Laplacian ``D - A`` of the elongated aggregated adjacency.

    The transform-domain slices of the inverse-transformed Laplacian are the
    Laplacian slices themselves, so the regularization tensor
    ``lambda_g * LAP~ + lambda_1 * I`` is represented lazily through
    :meth:`combined_hat`.
    """

    laplacian: np.ndarray
    window: int

    @property
    def vertex_count(self) -> int:
        return self.laplacian.shape[0]

    @property
    def period_count(self) -> int:
        return self.laplacian.shape[2]

    def combined_hat(self, lambda_g: float, lambda_1: float) -> np.ndarray:
        """Transform-domain slices of the regularization tensor, shape ``(T, m, m)``."""
        lap = np.moveaxis(self.laplacian, 2, 0)
        return lambda_g * lap + lambda_1 * np.eye(self.vertex_count)

    def combined(self, lambda_g: float, lambda_1: float, m: Transform) -> np.ndarray:
        """The regularization tensor in the original domain."""
        lap_tilde = m.to_real_if(m.inverse(self.laplacian), True)
        return lambda_g * lap_tilde + lambda_1 * identity_tensor(self.vertex_count, m)

    @classmethod
    def zeros(cls, m: int, periods: int, window: int = 1) -> "LaplacianTensor":
        return cls(np.zeros((m, m, periods)), window)


def from_edge_events(events: Iterable[tuple[int, int, int]], m: int, periods: int) -> DynamicGraph:
    """Build a dynamic graph from 1-based ``(i, j, t)`` edge events."""
    a = np.zeros((m, m, periods))
    for i, j, t in events:
        if not (1 <= i <= m and 1 <= j <= m and 1 <= t <= periods):
            raise ValueError(f"edge event {(i, j, t)} out of range for m={m}, T={periods}")
        if i == j:
            raise ValueError(f"self-loop {(i, j, t)} is not allowed")
        a[i - 1, j - 1, t - 1] = a[j - 1, i - 1, t - 1] = 1.0
    return DynamicGraph(a)


def static_graph(edges: Iterable[tuple[int, int]], m: int, periods: int) -> DynamicGraph:
    """The same 1-based edge list applied to every period."""
    edges = list(edges)
    return from_edge_events(((i, j, t) for t in range(1, periods + 1) for i, j in edges), m, periods)


def _check_window(periods: int, ss: int):
    if ss < 1 or periods % ss:
        raise ValueError(f"similarity scale {ss} does not divide the number of periods {periods}")


def aggregate(g: DynamicGraph, ss: int) -> HierarchicalMultigraph:
    """Sum the adjacency over consecutive windows of ``ss`` periods."""
    m, _, periods = g.adjacency.shape
    _check_window(periods, ss)
    agg = g.adjacency.reshape(m, m, periods // ss, ss).sum(axis=3)
    return HierarchicalMultigraph(agg, ss)


def laplacian_tensor(g: DynamicGraph, ss: int) -> LaplacianTensor:
    a = aggregate(g, ss).elongated()
    deg = a.sum(axis=1)  # (m, T)
    lap = -a
    idx = np.arange(a.shape[0])
    lap[idx, idx, :] += deg
    return LaplacianTensor(lap, ss)


def smoothness_analytic(lap: LaplacianTensor, w: np.ndarray, m: Transform) -> float:
    """``<LAP~, w *_M w^T>`` evaluated slice by slice in the transform domain.

    Requires a block-diagonal transform whose block width equals the
    Laplacian's similarity scale (a single DFT block when ``ss = T``).
    """
    w = np.asarray(w)
    if w.shape[0] != lap.vertex_count or w.shape[2] != lap.period_count:
        raise ValueError(f"factor shape {w.shape} does not match Laplacian {lap.laplacian.shape}")
    if m.block_size != lap.window:
        raise ValueError(f"transform block size {m.block_size} differs from similarity scale {lap.window}")
    w_hat = np.moveaxis(m.forward(w), 2, 0)
    lw = np.moveaxis(lap.laplacian, 2, 0) @ w_hat
    return float(np.real(np.vdot(w_hat, lw))) / m.scale_c


def smoothness_combinatorial(g_agg: HierarchicalMultigraph, w: np.ndarray) -> float:
    """Weighted sum of squared distances between horizontal subslices.

    ``(1/2) sum_{i,j,k} agg[i, j, k] * ||w[i, :, [k]] - w[j, :, [k]]||_F^2``
    where ``[k]`` is the k-th window of ``ss`` periods.
    """
    w = np.asarray(w)
    ss = g_agg.window
    if w.shape[0] != g_agg.vertex_count or w.shape[2] != ss * g_agg.layer_count:
        raise ValueError(f"factor shape {w.shape} inconsistent with multigraph windows")
    total = 0.0
    for k in range(g_agg.layer_count):
        seg = w[:, :, k * ss:(k + 1) * ss].reshape(w.shape[0], -1)
        diff = seg[:, None, :] - seg[None, :, :]
        total += float(np.sum(g_agg.agg_adjacency[:, :, k] * np.sum(diff * diff, axis=2)))
    return 0.5 * total


def _pairwise(x: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        sq = np.sum(x * x, axis=1)
        d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
        return np.sqrt(np.maximum(d, 0.0))
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1)
        norms[norms == 0] = 1.0
        u = x / norms[:, None]
        return 1.0 - u @ u.T
    raise ValueError(f"unknown metric {metric!r}")


def knn_similarity_graph(features, k: int, metric: str = "euclidean", periods: int | None = None) -> DynamicGraph:
    """k-nearest-neighbour graph per period, symmetrized by union.

    Parameters
    ----------
    features : array_like
        ``(m, f)`` static features, or ``(T, m, f)`` one feature matrix per period.
    k : int
        Neighbours per vertex; must be smaller than ``m``.
    metric : {"euclidean", "cosine"}
    periods : int, optional
        Number of periods when ``features`` is static (default 1).

    Ties in distance go to the lower vertex index. A period whose features
    are all identical has every pair tied and becomes a complete graph (with
    a warning).
    """
    f = np.asarray(features, dtype=float)
    if f.ndim == 2:
        f = np.repeat(f[None], periods or 1, axis=0)
    elif f.ndim != 3:
        raise ValueError("features must be (m, f) or (T, m, f)")
    elif periods is not None and periods != f.shape[0]:
        raise ValueError("periods disagrees with the feature tensor")
    t_count, m, _ = f.shape
    if not 1 <= k < m:
        raise ValueError(f"k must satisfy 1 <= k < m={m}")
    a = np.zeros((m, m, t_count))
    for t in range(t_count):
        x = f[t]
        if np.all(x == x[0]):
            warnings.warn(f"period {t + 1}: all features identical, using the complete graph", stacklevel=2)
            a[:, :, t] = 1.0 - np.eye(m)
            continue
        d = _pairwise(x, metric)
        np.fill_diagonal(d, np.inf)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        rows = np.repeat(np.arange(m), k)
        a[rows, nearest.ravel(), t] = 1.0
        a[:, :, t] = np.maximum(a[:, :, t], a[:, :, t].T)
    return DynamicGraph(a)
