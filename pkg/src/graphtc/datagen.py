"""Synthetic dynamic graphs, graph-smooth low-rank tensors and observations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamic_graph import DynamicGraph, laplacian_tensor
from .solver import ObservedTensor
from .tensor_algebra import Transform, conj_transpose, star_product, t_product

__all__ = [
    "CommunityGraphSpec",
    "ObservationModel",
    "Sample",
    "community_dynamic_graph",
    "lowrank_tensor",
    "inverse_square_filter",
    "spectral_embedding_factor",
    "embed_graph_similarity",
    "perturb_graph",
    "sample_observations",
    "SyntheticInstance",
    "derive_seed",
    "synthetic_instance",
]


@dataclass(frozen=True)
class CommunityGraphSpec:
    """Community graph that is redrawn every ``interval`` periods.

    Each redraw assigns the ``m`` vertices to ``d`` equal communities at
    random and connects pairs with probability ``p_in`` (same community) or
    ``p_out`` (different communities).
    """

    m: int = 50
    d: int = 5
    p_in: float = 0.7
    p_out: float = 0.02
    periods: int = 64
    interval: int = 4
    seed: int = 0

    def validate(self) -> "CommunityGraphSpec":
        if self.d < 1 or self.m % self.d:
            raise ValueError(f"{self.d} communities do not divide {self.m} vertices")
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if self.interval < 1 or self.periods % self.interval:
            raise ValueError(f"interval {self.interval} does not divide {self.periods} periods")
        return self


@dataclass(frozen=True)
class ObservationModel:
    sample_ratio: float | None = 0.1
    n_samples: int | None = None
    sigma: float = 0.0
    noise: str = "gaussian"
    with_replacement: bool = False
    seed: int = 0

    def validate(self) -> "ObservationModel":
        if self.n_samples is None and not (self.sample_ratio is not None and 0 < self.sample_ratio <= 1):
            raise ValueError("sample_ratio must lie in (0, 1]")
        if self.n_samples is not None and self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.noise not in ("gaussian", "none"):
            raise ValueError(f"unknown noise kind {self.noise!r}")
        return self


@dataclass(frozen=True, eq=False)
class Sample:
    """Training observations plus the held-out test entries."""

    train: ObservedTensor
    test_mask: np.ndarray
    n_draws: int

    @property
    def metadata(self) -> dict:
        m, n, t = self.train.shape
        return {"N": self.n_draws, "D": m * n * t, "d": (m + n) * t, "observed": len(self.train)}


def _community_slice(rng, m, d, p_in, p_out):
    labels = rng.permutation(np.repeat(np.arange(d), m // d))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((m, m)) < prob, 1)
    return (upper | upper.T).astype(float), labels


def community_dynamic_graph(spec: CommunityGraphSpec, return_labels: bool = False):
    """Dynamic community graph, constant within each block of ``interval`` periods."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    a = np.zeros((spec.m, spec.m, spec.periods))
    labels = np.zeros((spec.m, spec.periods), dtype=int)
    for start in range(0, spec.periods, spec.interval):
        s, lab = _community_slice(rng, spec.m, spec.d, spec.p_in, spec.p_out)
        a[:, :, start:start + spec.interval] = s[:, :, None]
        labels[:, start:start + spec.interval] = lab[:, None]
    g = DynamicGraph(a)
    return (g, labels) if return_labels else g


def lowrank_tensor(m: int, n: int, periods: int, r: int, transform: Transform | None = None,
                   rng=None) -> np.ndarray:
    """``P *_M Q^T`` with standard normal ``P`` (m x r x T) and ``Q`` (n x r x T)."""
    if r > min(m, n):
        raise ValueError("rank exceeds min(m, n)")
    rng = np.random.default_rng(rng)
    transform = transform or Transform.dft(periods)
    p = rng.standard_normal((m, r, periods))
    q = rng.standard_normal((n, r, periods))
    return t_product(p, conj_transpose(q, transform), transform)


def inverse_square_filter(s: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Low-pass ``g(s) = s^-2`` for ``s > 0`` and ``0`` at (numerically) zero."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > tol
    out[pos] = s[pos] ** -2.0
    return out


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every eigenvector made positive (relabeling-invariant)
    k = np.argmax(np.abs(u), axis=0)
    sgn = np.sign(u[k, np.arange(u.shape[1])])
    sgn[sgn == 0] = 1.0
    return u * sgn


def spectral_embedding_factor(g: DynamicGraph | None, size: int, periods: int, filt=inverse_square_filter) -> np.ndarray:
    """Slice-wise ``U g(S)`` from the eigendecomposition of each Laplacian slice.

    A missing or edgeless graph yields the identity (graph-agnostic convention).
    """
    out = np.zeros((size, size, periods))
    if g is None:
        out[:] = np.eye(size)[:, :, None]
        return out
    lap = laplacian_tensor(g, 1).laplacian
    for t in range(periods):
        slice_t = lap[:, :, t]
        if not np.any(slice_t):
            out[:, :, t] = np.eye(size)
            continue
        s, u = np.linalg.eigh(slice_t)
        tol = 1e-10 * max(1.0, s.max())
        out[:, :, t] = _fix_signs(u) * filt(np.where(s > tol, s, 0.0))[None, :]
    return out


def embed_graph_similarity(z: np.ndarray, g_w: DynamicGraph | None, g_h: DynamicGraph | None,
                           filt=inverse_square_filter) -> np.ndarray:
    """``A * Z * B^T`` slice-wise, with ``A = U_W g(S_W)`` and ``B = U_H g(S_H)``.

    Eigenvalues are ascending; eigenvectors are sign-normalized so that the
    result permutes consistently when the graph's vertices are relabeled.
    """
    m, n, periods = z.shape
    a = spectral_embedding_factor(g_w, m, periods, filt)
    b = spectral_embedding_factor(g_h, n, periods, filt)
    return star_product(star_product(a, z), b.transpose(1, 0, 2))


def perturb_graph(g: DynamicGraph, level: float, seed=None) -> DynamicGraph:
    """Rewire a ``level`` fraction of each slice's edges.

    The chosen edges are removed and the same number of edges is added
    uniformly among the vertex pairs that are then unconnected (a removed
    edge may be drawn again), so edge counts and symmetry are preserved.
    """
    if not 0 <= level <= 1:
        raise ValueError("level must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    a = g.adjacency.copy()
    m = g.vertex_count
    iu, ju = np.triu_indices(m, 1)
    for t in range(g.period_count):
        present = a[iu, ju, t] > 0
        edges = np.flatnonzero(present)
        k = int(round(level * edges.size))
        if k == 0:
            continue
        drop = rng.choice(edges, size=k, replace=False)
        present[drop] = False
        add = rng.choice(np.flatnonzero(~present), size=k, replace=False)
        present[add] = True
        s = np.zeros((m, m))
        s[iu[present], ju[present]] = 1.0
        a[:, :, t] = s + s.T
    return DynamicGraph(a)


def sample_observations(x: np.ndarray, model: ObservationModel) -> Sample:
    """Uniformly sample entries of ``x`` and add noise ``sigma * xi``.

    Without replacement, ``floor(ratio * D)`` distinct entries are drawn.
    With replacement (the i.i.d. design of the error analysis), repeated
    draws of one entry are collapsed to the mean of their noisy values.
    Entries never drawn form the test set.
    """
    model.validate()
    rng = np.random.default_rng(model.seed)
    total = x.size
    n = model.n_samples if model.n_samples is not None else int(np.floor(model.sample_ratio * total))
    if n < 1:
        raise ValueError("sampling yields no observations")
    if model.with_replacement:
        flat = rng.integers(0, total, size=n)
    else:
        if n > total:
            raise ValueError("cannot draw more entries than the tensor has without replacement")
        flat = np.sort(rng.choice(total, size=n, replace=False))
    noise = rng.standard_normal(n) if (model.noise == "gaussian" and model.sigma > 0) else np.zeros(n)
    y = x.ravel()[flat] + model.sigma * noise
    if model.with_replacement:
        uniq, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
        y = np.bincount(inv, weights=y) / counts
        flat = uniq
    idx = np.column_stack(np.unravel_index(flat, x.shape))
    test = np.ones(x.shape, dtype=bool)
    test.ravel()[flat] = False
    return Sample(ObservedTensor(x.shape, idx, y), test, n)


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    x: np.ndarray
    z: np.ndarray
    g_w: DynamicGraph
    g_h: DynamicGraph
    scale: float
    seed: int


def derive_seed(seed: int, index: int) -> int:
    """Per-configuration seed for grid runs (base seed XOR configuration index)."""
    return int(seed) ^ int(index)


def synthetic_instance(m: int = 50, n: int = 50, periods: int = 64, rank: int = 5, d: int = 5,
                       p_in: float = 0.7, p_out: float = 0.02, interval: int = 4, seed: int = 0,
                       normalize: str = "max") -> SyntheticInstance:
    """Community graphs on rows and columns, a tubal-rank ``rank`` tensor (DFT)
    and its graph-filtered version.

    With ``normalize="max"`` the filtered tensor is divided by its largest
    absolute entry, so ``||x||_inf = 1``. The DFT scaling convention leaves
    the amplitude of ``x`` arbitrary; fixing it makes regularization weights
    such as ``0.001`` meaningful. ``normalize="none"`` keeps the raw scale.
    """
    if normalize not in ("max", "none"):
        raise ValueError(f"unknown normalization {normalize!r}")
    s_w, s_h, s_z = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3))
    g_w = community_dynamic_graph(CommunityGraphSpec(m, d, p_in, p_out, periods, interval, s_w))
    g_h = community_dynamic_graph(CommunityGraphSpec(n, d, p_in, p_out, periods, interval, s_h))
    z = lowrank_tensor(m, n, periods, rank, Transform.dft(periods), rng=s_z)
    x = embed_graph_similarity(z, g_w, g_h)
    scale = 1.0
    if normalize == "max":
        top = float(np.abs(x).max())
        scale = 1.0 / top if top > 0 else 1.0
    return SyntheticInstance(x * scale, z, g_w, g_h, scale, seed)
