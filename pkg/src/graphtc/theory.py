"""Numerical probes of the weighted-norm view of the graph regularizer.

The combined Laplacian ``L = lambda_g * LAP~ + lambda_1 * I`` defines a
weight tensor ``A`` with ``L = A^-T *_M A^-1`` (one eigendecomposition per
transform-domain slice). In these weights the smoothness regularizer is a
weighted Frobenius norm, and its minimum over factorizations is a weighted
tensor nuclear norm. The functions here check those identities and compute
the graph complexity measure ``alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import ObservationModel, lowrank_tensor, sample_observations
from .dynamic_graph import DynamicGraph, laplacian_tensor
from .solver import SolverConfig, solve
from .tensor_algebra import (
    Transform,
    _stack,
    _unstack,
    conj_transpose,
    inf_norm,
    inner,
    slicewise,
    t_product,
    tensor_nuclear_norm,
    tensor_spectral_norm,
)

__all__ = [
    "WeightPair",
    "FactorizationReport",
    "DualityReport",
    "combined_laplacian",
    "weight_pair_from_laplacians",
    "weight_pair_from_graphs",
    "identity_pair",
    "weighted_nuclear_norm",
    "regularizer_weighted_frobenius_check",
    "balanced_factorization",
    "factorization_bound_check",
    "duality_probe",
    "alpha_measure",
    "ScalingConfig",
    "ScalingResult",
    "error_scaling_experiment",
]


def _hat(x, m):
    return _stack(m.forward(np.asarray(x)))


def _orig(h, m, real=True):
    return m.to_real_if(m.inverse(_unstack(h)), real)


def _ch(h):
    return np.conj(np.swapaxes(h, -1, -2))


@dataclass(frozen=True, eq=False)
class WeightPair:
    """Row and column weight tensors with cached inverses.

    ``a_hat``/``a_inv_hat`` hold the transform-domain slices, shape
    ``(T, m, m)``; the original-domain tensors are available as properties.
    """

    a_hat: np.ndarray
    a_inv_hat: np.ndarray
    b_hat: np.ndarray
    b_inv_hat: np.ndarray
    transform: Transform
    a_identity: bool = False
    b_identity: bool = False

    @property
    def a(self) -> np.ndarray:
        return _orig(self.a_hat, self.transform)

    @property
    def b(self) -> np.ndarray:
        return _orig(self.b_hat, self.transform)

    @property
    def a_inv(self) -> np.ndarray:
        return _orig(self.a_inv_hat, self.transform)

    @property
    def b_inv(self) -> np.ndarray:
        return _orig(self.b_inv_hat, self.transform)

    def weigh(self, x: np.ndarray) -> np.ndarray:
        """``A^-1 *_M x *_M B^-T``."""
        if self.a_identity and self.b_identity:
            return np.array(x, copy=True)
        h = self.a_inv_hat @ _hat(x, self.transform) @ _ch(self.b_inv_hat)
        return _orig(h, self.transform, np.isrealobj(x))


def combined_laplacian(g: DynamicGraph | None, ss: int, lambda_g: float, lambda_1: float,
                       m: Transform) -> np.ndarray:
    """Original-domain ``lambda_g * LAP~(g, ss) + lambda_1 * I`` (``LAP = 0`` if ``g`` is None)."""
    if g is None:
        raise ValueError("a graph is required; use identity_pair for the graph-agnostic case")
    return laplacian_tensor(g, ss).combined(lambda_g, lambda_1, m)


def _side_from_hat(l_hat: np.ndarray, m: Transform, floor: float, real: bool):
    n = l_hat.shape[1]
    scale = max(float(np.abs(l_hat).max()), 0.0)
    if scale == 0.0:
        eye = np.broadcast_to(np.eye(n), l_hat.shape).astype(complex)
        return eye.copy(), eye.copy(), True
    asym = float(np.abs(l_hat - _ch(l_hat)).max())
    if asym > 1e-8 * scale:
        raise ValueError(f"Laplacian slices are not symmetric (deviation {asym:.3e})")

    def decompose(ls):
        out_a = np.empty(ls.shape, dtype=np.result_type(ls.dtype, float))
        out_i = np.empty_like(out_a)
        for k, sl in enumerate(ls):
            if not np.any(sl):
                out_a[k] = out_i[k] = np.eye(n)
                continue
            if np.count_nonzero(sl - np.diag(np.diagonal(sl))) == 0:
                s, u = np.real(np.diagonal(sl)).copy(), np.eye(n, dtype=sl.dtype)
            else:
                s, u = np.linalg.eigh(0.5 * (sl + _ch(sl)))
            s = np.maximum(s, floor * max(float(s.max()), 0.0))
            if np.any(s <= 0):
                raise ValueError("Laplacian slice is not positive semidefinite")
            out_a[k] = u / np.sqrt(s)[None, :]
            out_i[k] = np.sqrt(s)[:, None] * _ch(u)
        return out_a, out_i

    a_hat, a_inv_hat = slicewise(decompose, [l_hat], m, real)
    return a_hat, a_inv_hat, bool(np.array_equal(l_hat, np.broadcast_to(np.eye(n), l_hat.shape)))


def weight_pair_from_laplacians(l_w: np.ndarray, l_h: np.ndarray, m: Transform,
                                floor: float = 1e-12) -> WeightPair:
    """Weight tensors ``A = U_W *_M S_W^{-1/2}`` and ``B = U_H *_M S_H^{-1/2}``.

    Parameters
    ----------
    l_w, l_h : ndarray
        Combined Laplacian tensors (original domain), ``m x m x T`` and ``n x n x T``.
    m : Transform
    floor : float
        Eigenvalues below ``floor * max eigenvalue`` of a slice are raised
        to that value before inversion. This only guards round-off; the
        regularizer always carries ``lambda_1 * I`` so the slices are
        positive definite in exact arithmetic.

    A zero Laplacian gives the identity weight (graph-agnostic convention).
    """
    l_w = np.asarray(l_w)
    l_h = np.asarray(l_h)
    a_hat, a_inv, a_id = _side_from_hat(_hat(l_w, m), m, floor, np.isrealobj(l_w))
    b_hat, b_inv, b_id = _side_from_hat(_hat(l_h, m), m, floor, np.isrealobj(l_h))
    return WeightPair(a_hat, a_inv, b_hat, b_inv, m, a_id, b_id)


def identity_pair(m_rows: int, n_cols: int, m: Transform) -> WeightPair:
    ea = np.broadcast_to(np.eye(m_rows), (m.size, m_rows, m_rows)).astype(complex)
    eb = np.broadcast_to(np.eye(n_cols), (m.size, n_cols, n_cols)).astype(complex)
    return WeightPair(ea, ea.copy(), eb, eb.copy(), m, True, True)


def weight_pair_from_graphs(g_w: DynamicGraph | None, g_h: DynamicGraph | None, shape, ss: int,
                            lambda_g: float, lambda_1: float, m: Transform) -> WeightPair:
    """Weights of the regularizer built from dynamic graphs (``None`` means no graph)."""
    if lambda_1 <= 0:
        raise ValueError("lambda_1 must be positive to build weights")
    n1, n2, n3 = shape

    def side(g, n):
        if g is None:
            lap_hat = lambda_1 * np.broadcast_to(np.eye(n), (n3, n, n))
        else:
            lap_hat = laplacian_tensor(g, ss).combined_hat(lambda_g, lambda_1)
        return _side_from_hat(lap_hat.astype(float), m, 1e-12, True)

    a_hat, a_inv, _ = side(g_w, n1)
    b_hat, b_inv, _ = side(g_h, n2)
    return WeightPair(a_hat, a_inv, b_hat, b_inv, m)


def weighted_nuclear_norm(x: np.ndarray, pair: WeightPair, m: Transform) -> float:
    """``||A^-1 *_M x *_M B^-T||_*``."""
    return tensor_nuclear_norm(pair.weigh(x), m)


def regularizer_weighted_frobenius_check(w: np.ndarray, l_w: np.ndarray, pair: WeightPair,
                                         m: Transform) -> float:
    """``|<L^W, w *_M w^T> - ||A^-1 *_M w||_F^2|`` (should be round-off)."""
    w = np.asarray(w)
    reg = inner(l_w, t_product(w, conj_transpose(w, m), m))
    if pair.a_identity:
        weighted = np.asarray(w)
    else:
        weighted = _orig(pair.a_inv_hat @ _hat(w, m), m, np.isrealobj(w))
    return abs(reg - float(np.sum(np.abs(weighted) ** 2)))


def _side_fro2(x_hat, inv_hat, m):
    return float(np.sum(np.abs(inv_hat @ x_hat) ** 2)) / m.scale_c


def balanced_factorization(x: np.ndarray, pair: WeightPair, m: Transform):
    """``W = A * U * S^{1/2}``, ``H = B * V * S^{1/2}`` from the t-SVD of ``A^-1 x B^-T``."""
    x = np.asarray(x)
    y_hat = pair.a_inv_hat @ _hat(x, m) @ _ch(pair.b_inv_hat)
    u, s, vh = slicewise(lambda ys: np.linalg.svd(ys, full_matrices=False), [y_hat], m, np.isrealobj(x))
    root = np.sqrt(np.real(s))[:, None, :]
    w_hat = pair.a_hat @ (u * root)
    h_hat = pair.b_hat @ (_ch(vh) * root)
    return _orig(w_hat, m, np.isrealobj(x)), _orig(h_hat, m, np.isrealobj(x))


@dataclass
class FactorizationReport:
    nuclear: float
    attained: float
    attained_gap: float
    trials: int
    min_margin: float
    worst_trial: int | None
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and self.attained_gap <= 1e-6


def factorization_bound_check(x: np.ndarray, pair: WeightPair, m: Transform, trials: int = 100,
                              rng=None, tol: float = 1e-6) -> FactorizationReport:
    """Check that every factorization ``x = W *_M H^T`` has
    ``(||A^-1 W||_F^2 + ||B^-1 H||_F^2) / 2 >= ||A^-1 x B^-T||_*`` and that
    the balanced factorization attains it.

    Random factorizations are the balanced one mixed by a random invertible
    tensor ``R`` (``W R``, ``H R^-T``), so they reproduce ``x`` exactly.
    A violation is recorded when the margin falls below ``-tol * max(1, nuclear)``.
    """
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    nuc = weighted_nuclear_norm(x, pair, m)
    w0, h0 = balanced_factorization(x, pair, m)
    w0_hat, h0_hat = _hat(w0, m), _hat(h0, m)
    attained = 0.5 * (_side_fro2(w0_hat, pair.a_inv_hat, m) + _side_fro2(h0_hat, pair.b_inv_hat, m))
    gap = abs(attained - nuc) / max(nuc, np.finfo(float).tiny) if nuc > 0 else abs(attained)

    p = w0.shape[1]
    margin, worst, violations = np.inf, None, []
    for k in range(trials):
        # alternate near-optimal mixes (small eps) with far ones
        eps = 10.0 ** rng.uniform(-4, 0.5)
        r_hat = np.eye(p) + eps * _hat(rng.standard_normal((p, p, x.shape[2])), m)
        try:
            r_inv_h = _ch(np.linalg.inv(r_hat))
        except np.linalg.LinAlgError:
            continue
        val = 0.5 * (_side_fro2(w0_hat @ r_hat, pair.a_inv_hat, m)
                     + _side_fro2(h0_hat @ r_inv_h, pair.b_inv_hat, m))
        d = val - nuc
        if d < margin:
            margin, worst = d, k
        if d < -tol * max(1.0, nuc):
            violations.append((k, val, nuc))
    return FactorizationReport(nuc, attained, gap, trials, float(margin), worst, violations)


@dataclass
class DualityReport:
    max_ratio: float
    aligned_ratio: float
    violations: int


def duality_probe(x: np.ndarray, pair: WeightPair, m: Transform, trials: int = 100, rng=None,
                  tol: float = 1e-8) -> DualityReport:
    """Probe ``<x, y> <= ||A^-1 x B^-T||_* ||A^T y B||`` over random ``y`` and at the aligned ``y``.

    Ratios are ``<x, y> / (||A^-1 x B^-T||_* ||A^T y B||)``; the aligned
    ``y = A^-T (U V^T) B^-1`` built from the t-SVD of the weighted ``x``
    should give a ratio of one.
    """
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    nuc = weighted_nuclear_norm(x, pair, m)

    def dual(y):
        return tensor_spectral_norm(_orig(_ch(pair.a_hat) @ _hat(y, m) @ pair.b_hat, m), m)

    best, bad = -np.inf, 0
    for _ in range(trials):
        y = rng.standard_normal(x.shape)
        bound = nuc * dual(y)
        lhs = inner(x, y)
        if lhs > bound + tol * max(1.0, abs(bound)):
            bad += 1
        if bound > 0:
            best = max(best, lhs / bound)
    y_hat = pair.a_inv_hat @ _hat(x, m) @ _ch(pair.b_inv_hat)
    u, _, vh = slicewise(lambda ys: np.linalg.svd(ys, full_matrices=False), [y_hat], m, True)
    aligned = _orig(_ch(pair.a_inv_hat) @ (u @ vh) @ pair.b_inv_hat, m)
    aligned_ratio = inner(x, aligned) / (nuc * dual(aligned))
    return DualityReport(float(best), float(aligned_ratio), bad)


def alpha_measure(x_true: np.ndarray, pair: WeightPair, m: Transform) -> tuple[float, float]:
    """``(alpha, alpha_star) = (||A^-1 x B^-T||_inf, ||x||_inf)``."""
    return inf_norm(pair.weigh(x_true)), inf_norm(x_true)


@dataclass(frozen=True)
class ScalingConfig:
    """Grid for the per-entry error versus sample size probe.

    Observations are drawn with replacement (i.i.d. design) so that ``N``
    may exceed the number of entries; repeated draws are averaged.
    """

    m: int = 12
    n: int = 12
    periods: int = 4
    rank: int = 1
    sigma: float = 1.0
    n_grid: tuple = (1000, 2000, 4000, 8000, 16000)
    seeds: tuple = (0, 1, 2, 3, 4)
    with_replacement: bool = True
    solver: SolverConfig = SolverConfig(rank=1, max_iter=500, stop_tol=1e-6)


@dataclass
class ScalingResult:
    rows: list
    slope: float
    intercept: float

    def median_by_n(self) -> dict:
        out = {}
        for n in sorted({r["N"] for r in self.rows}):
            out[n] = float(np.median([r["sq_err"] for r in self.rows if r["N"] == n]))
        return out

    def to_csv(self) -> str:
        lines = ["N,seed,sq_err,iterations,converged"]
        lines += [f"{r['N']},{r['seed']},{r['sq_err']:.17g},{r['iterations']},{int(r['converged'])}" for r in self.rows]
        return "\n".join(lines) + "\n"


def error_scaling_experiment(config: ScalingConfig = ScalingConfig()) -> ScalingResult:
    """Per-entry squared error ``||X_hat - X||_F^2 / D`` over a grid of ``N``.

    The graph-agnostic model is fitted for every ``(N, seed)``; the slope is
    the least-squares fit of ``log(error)`` on ``log(N)`` over all runs.
    """
    solver_cfg = replace(config.solver, rank=config.rank)
    rows = []
    for seed in config.seeds:
        x = lowrank_tensor(config.m, config.n, config.periods, config.rank, rng=seed)
        for k, n in enumerate(config.n_grid):
            model = ObservationModel(sample_ratio=None, n_samples=int(n), sigma=config.sigma,
                                     with_replacement=config.with_replacement, seed=seed ^ (k + 1))
            sample = sample_observations(x, model)
            xh, diag = solve(sample.train, None, None, replace(solver_cfg, seed=seed))
            rows.append({"N": int(n), "seed": seed, "sq_err": float(np.sum((xh - x) ** 2) / x.size),
                         "iterations": diag.iterations, "converged": diag.converged})
    logn = np.log([r["N"] for r in rows])
    loge = np.log([r["sq_err"] for r in rows])
    slope, intercept = np.polyfit(logn, loge, 1)
    return ScalingResult(rows, float(slope), float(intercept))
