"""ADMM solver for graph-regularized low-tubal-rank tensor completion.

The model factors the target as ``W *_M H^T`` and splits it with auxiliary
copies ``A = W``, ``B = H`` and ``P_Omega(E) = P_Omega(X)``:

    min 1/2 ||E - W *_M H^T||_F^2 + 1/2 (<L^W, A *_M A^T> + <L^H, B *_M B^T>)

where ``L^W = lambda_g * LAP~(G^W, ss) + lambda_1 * I`` (likewise for ``H``).
Each sweep updates W, H (Gauss-Seidel order), then A and B, then E, then
the multipliers. The W/H/A/B subproblems decouple over transform-domain
frontal slices and are solved as Hermitian positive definite systems.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dynamic_graph import DynamicGraph, LaplacianTensor, laplacian_tensor
from .tensor_algebra import Transform, conj_transpose, slicewise, t_product

__all__ = [
    "ObservedTensor",
    "SolverConfig",
    "SolverState",
    "Diagnostics",
    "SolverError",
    "CGNotConverged",
    "make_transform",
    "regularization_slices",
    "theoretical_beta",
    "conjugate_gradient",
    "spd_solve",
    "objective",
    "augmented_lagrangian",
    "update_w",
    "update_h",
    "update_a",
    "update_b",
    "update_e",
    "update_multipliers",
    "initial_state",
    "solve",
]

log = logging.getLogger(__name__)

GOLDEN = (1 + 5 ** 0.5) / 2


class SolverError(RuntimeError):
    pass


class CGNotConverged(SolverError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObservedTensor:
    """Observed entries ``(i1, i2, i3) -> value`` with 0-based indices."""

    shape: tuple[int, int, int]
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, 3)
        vals = np.asarray(self.values, dtype=float).ravel()
        if len(shape) != 3 or min(shape) < 1:
            raise ValueError(f"invalid tensor shape {self.shape}")
        if idx.shape[0] != vals.shape[0]:
            raise ValueError("indices and values differ in length")
        if idx.size and (np.any(idx < 0) or np.any(idx >= np.array(shape))):
            raise ValueError("observation index out of range")
        flat = np.ravel_multi_index(idx.T, shape) if idx.size else np.empty(0, dtype=np.int64)
        if np.unique(flat).size != flat.size:
            raise ValueError("duplicate observation index")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_dense(cls, x: np.ndarray, mask: np.ndarray) -> "ObservedTensor":
        mask = np.asarray(mask, dtype=bool)
        idx = np.argwhere(mask)
        return cls(x.shape, idx, np.asarray(x)[mask])

    def __len__(self) -> int:
        return self.values.size

    @property
    def flat_index(self) -> np.ndarray:
        return np.ravel_multi_index(self.indices.T, self.shape)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[tuple(self.indices.T)] = True
        return m

    def dense(self) -> np.ndarray:
        """``P_Omega(X)`` as a dense array (zeros off the mask)."""
        x = np.zeros(self.shape)
        x[tuple(self.indices.T)] = self.values
        return x

    def subset(self, rows) -> "ObservedTensor":
        return ObservedTensor(self.shape, self.indices[rows], self.values[rows])


@dataclass(frozen=True)
class SolverConfig:
    rank: int = 5
    lambda_g: float = 0.001
    lambda_1: float = 0.001
    beta: float = 1.0
    gamma: float = 1.0
    ss: int | None = None
    transform: str = "dft"
    cg_tol: float = 1e-10
    cg_max_iter: int = 500
    max_iter: int = 500
    stop_tol: float = 1e-6
    seed: int = 0
    direct_max_size: int = 64
    beta_theory: bool = False

    def validate(self, n3: int | None = None) -> "SolverConfig":
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.gamma <= GOLDEN:
            raise ValueError(f"gamma must lie in (0, {GOLDEN:.6f}]")
        if self.lambda_g < 0 or self.lambda_1 < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.cg_tol <= 0 or self.stop_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.cg_max_iter < 1 or self.max_iter < 1:
            raise ValueError("iteration limits must be positive")
        if self.transform not in ("dft", "identity"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if n3 is not None and self.ss is not None and (self.ss < 1 or n3 % self.ss):
            raise ValueError(f"similarity scale {self.ss} does not divide n3={n3}")
        return self

    def resolved_ss(self, n3: int) -> int:
        return n3 if self.ss is None else self.ss


def make_transform(kind: str, n3: int, ss: int) -> Transform:
    """The transform used by the model.

    ``"dft"`` is block diagonal with ``ss``-point DFT blocks, which reduces
    to the plain DFT when ``ss == n3``; ``"identity"`` decouples the periods.
    """
    if kind == "dft":
        return Transform.block_orthogonal(n3, ss)
    if kind == "identity":
        return Transform.identity(n3)
    raise ValueError(f"unknown transform {kind!r}")


@dataclass
class SolverState:
    w: np.ndarray
    h: np.ndarray
    a: np.ndarray
    b: np.ndarray
    e: np.ndarray
    mult_w: np.ndarray
    mult_h: np.ndarray
    mult_e: np.ndarray
    iteration: int = 0

    def copy(self) -> "SolverState":
        return SolverState(**{f.name: (getattr(self, f.name).copy() if f.name != "iteration" else self.iteration)
                              for f in fields(self)})

    def completed(self, m: Transform) -> np.ndarray:
        return t_product(self.w, conj_transpose(self.h, m), m)


@dataclass
class Diagnostics:
    objective: list[float] = field(default_factory=list)
    lagrangian: list[float] = field(default_factory=list)
    res_w: list[float] = field(default_factory=list)
    res_h: list[float] = field(default_factory=list)
    res_e: list[float] = field(default_factory=list)
    gap: list[float] = field(default_factory=list)
    u: list[float] = field(default_factory=list)
    converged: bool = False
    scale: float = 1.0
    beta: float = 1.0
    violations: list = field(default_factory=list)
    state: SolverState | None = None
    transform: Transform | None = None

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def append(self, f, la, rw, rh, re, gap):
        self.objective.append(f)
        self.lagrangian.append(la)
        self.res_w.append(rw)
        self.res_h.append(rh)
        self.res_e.append(re)
        self.gap.append(gap)
        self.u.append(min(gap, self.u[-1]) if self.u else gap)

    def to_csv(self) -> str:
        lines = ["iter,F,res_w,res_h,res_e,u_k"]
        for k in range(self.iterations):
            lines.append(
                f"{k + 1},{self.objective[k]!r},{self.res_w[k]!r},{self.res_h[k]!r},{self.res_e[k]!r},{self.u[k]!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def conjugate_gradient(mat: np.ndarray, rhs: np.ndarray, x0: np.ndarray | None = None,
                       tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    """Batched CG for Hermitian positive definite systems ``mat @ x = rhs``.

    ``mat`` is ``(k, n, n)`` and ``rhs`` is ``(k, n, p)``; every column of
    every slice is an independent system. Stops when each residual is below
    ``tol * ||rhs column||`` and raises :class:`CGNotConverged` otherwise.
    """
    dtype = np.result_type(mat.dtype, rhs.dtype)
    x = np.zeros(rhs.shape, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    r = rhs - mat @ x
    p = r.copy()
    rs = np.sum((r.conj() * r).real, axis=1)
    target = (tol * np.linalg.norm(rhs, axis=1)) ** 2
    for it in range(max_iter + 1):
        done = rs <= target
        if done.all():
            return x
        if it == max_iter:
            break
        ap = mat @ p
        pap = np.sum((p.conj() * ap).real, axis=1)
        alpha = np.where(done | (pap <= 0), 0.0, rs / np.where(pap > 0, pap, 1.0))
        x += alpha[:, None, :] * p
        r -= alpha[:, None, :] * ap
        rs_new = np.sum((r.conj() * r).real, axis=1)
        beta = np.where(done, 0.0, rs_new / np.where(rs > 0, rs, 1.0))
        p = r + beta[:, None, :] * p
        rs = rs_new
    bn = np.linalg.norm(rhs, axis=1)
    rel = np.sqrt(rs) / np.where(bn > 0, bn, 1.0)
    raise CGNotConverged(float(rel.max()), max_iter)


def spd_solve(mat: np.ndarray, rhs: np.ndarray, config: SolverConfig, x0: np.ndarray | None = None) -> np.ndarray:
    """Solve stacked HPD systems: direct factorization for small ones, CG otherwise."""
    if mat.shape[-1] <= config.direct_max_size:
        return np.linalg.solve(mat, rhs)
    return conjugate_gradient(mat, rhs, x0, config.cg_tol, config.cg_max_iter)


def _h(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def _hat(x: np.ndarray, m: Transform) -> np.ndarray:
    return np.moveaxis(m.forward(x), 2, 0)


def _unhat(s: np.ndarray, m: Transform) -> np.ndarray:
    return m.to_real_if(m.inverse(np.moveaxis(s, 0, 2)), True)


# ---------------------------------------------------------------------------
# model pieces
# ---------------------------------------------------------------------------

def regularization_slices(lap: LaplacianTensor | None, n: int, n3: int, config: SolverConfig) -> np.ndarray:
    """Transform-domain slices of ``lambda_g * LAP~ + lambda_1 * I``, shape ``(n3, n, n)``.

    A missing graph contributes a zero Laplacian (graph-agnostic mode).
    """
    if lap is None:
        return np.broadcast_to(config.lambda_1 * np.eye(n), (n3, n, n)).copy()
    if lap.vertex_count != n or lap.period_count != n3:
        raise ValueError(f"graph of size {lap.laplacian.shape} does not match a factor with {n} rows and {n3} periods")
    return np.ascontiguousarray(lap.combined_hat(config.lambda_g, config.lambda_1))


def theoretical_beta(lw_hat: np.ndarray, lh_hat: np.ndarray, rank: int, shape) -> float:
    """The penalty lower bound ``r^2 (n1 + n2) n3 (Tr(L^W bar) + Tr(L^H bar))`` for convergence."""
    n1, n2, n3 = shape
    traces = np.trace(lw_hat, axis1=1, axis2=2).real.sum() + np.trace(lh_hat, axis1=1, axis2=2).real.sum()
    return float(rank ** 2 * (n1 + n2) * n3 * traces)


def _quad(x_hat: np.ndarray, l_hat: np.ndarray) -> float:
    if np.isrealobj(l_hat) and np.iscomplexobj(x_hat):
        # avoid promoting the (real) Laplacian slices to complex
        re, im = np.ascontiguousarray(x_hat.real), np.ascontiguousarray(x_hat.imag)
        return float(np.vdot(re, l_hat @ re) + np.vdot(im, l_hat @ im))
    return float(np.real(np.vdot(x_hat, l_hat @ x_hat)))


def objective(state: SolverState, lw_hat: np.ndarray, lh_hat: np.ndarray, m: Transform,
              completed: np.ndarray | None = None) -> float:
    """``1/2 ||E - W *_M H^T||^2 + 1/2 (<L^W, A *_M A^T> + <L^H, B *_M B^T>)``.

    ``completed`` may carry an already computed ``W *_M H^T``.
    """
    fit = state.e - (state.completed(m) if completed is None else completed)
    reg = _quad(_hat(state.a, m), lw_hat) + _quad(_hat(state.b, m), lh_hat)
    return 0.5 * float(np.sum(fit * fit)) + 0.5 * reg / m.scale_c


def augmented_lagrangian(state: SolverState, observed: ObservedTensor, lw_hat, lh_hat,
                         beta: float, m: Transform, f: float | None = None) -> float:
    """Objective plus ``beta/2`` times the squared scaled constraint residuals.

    ``f`` may carry an already computed objective value.
    """
    idx = tuple(observed.indices.T)
    dw = state.a - state.w - state.mult_w / beta
    dh = state.b - state.h - state.mult_h / beta
    de = state.e[idx] - observed.values - state.mult_e[idx] / beta
    if f is None:
        f = objective(state, lw_hat, lh_hat, m)
    return f + 0.5 * beta * float(np.sum(dw * dw) + np.sum(dh * dh) + np.sum(de * de))


def _factor_update(x_hat, other_hat, target_hat, mult_hat, e_hat, config, m, x0_hat=None, transpose_e=False):
    """Slice-wise solve of ``X (O^H O + beta I) = beta T - Lambda + E O`` (or ``E^H O``)."""
    beta = config.beta

    def one(o, t, lam, e, x0):
        gram = _h(o) @ o + beta * np.eye(o.shape[2])
        ee = _h(e) if transpose_e else e
        rhs = beta * t - lam + ee @ o
        # X G = R  <=>  G X^H = R^H  (G Hermitian)
        return _h(spd_solve(gram, _h(rhs), config, None if x0 is None else _h(x0)))

    x0 = x0_hat if x0_hat is not None else x_hat
    return slicewise(one, [other_hat, target_hat, mult_hat, e_hat, x0], m, True)


def update_w(state: SolverState, config: SolverConfig, m: Transform, e_hat=None) -> np.ndarray:
    """Solve ``W_hat (H_hat^H H_hat + beta I) = beta A_hat - lambda_hat^W + E_hat H_hat`` per slice."""
    e_hat = _hat(state.e, m) if e_hat is None else e_hat
    out = _factor_update(_hat(state.w, m), _hat(state.h, m), _hat(state.a, m), _hat(state.mult_w, m),
                         e_hat, config, m)
    return _unhat(out, m)


def update_h(state: SolverState, config: SolverConfig, m: Transform, e_hat=None) -> np.ndarray:
    """Solve ``H_hat (W_hat^H W_hat + beta I) = beta B_hat - lambda_hat^H + E_hat^H W_hat`` per slice."""
    e_hat = _hat(state.e, m) if e_hat is None else e_hat
    out = _factor_update(_hat(state.h, m), _hat(state.w, m), _hat(state.b, m), _hat(state.mult_h, m),
                         e_hat, config, m, transpose_e=True)
    return _unhat(out, m)


def _aux_update(x, mult, l_hat, config, m, x0, system=None):
    beta = config.beta
    rhs_hat = beta * _hat(x, m) + _hat(mult, m)
    if system is not None:
        # cached inverse of (L_hat + beta I) for the direct path
        out = slicewise(lambda inv, r: inv @ r, [system, rhs_hat], m, True)
    else:
        eye = np.eye(l_hat.shape[1])
        out = slicewise(lambda l, r, x0_: spd_solve(l + beta * eye, r, config, x0_),
                        [l_hat, rhs_hat, _hat(x0, m)], m, True)
    return _unhat(out, m)


def update_a(state: SolverState, config: SolverConfig, lw_hat: np.ndarray, m: Transform, system=None) -> np.ndarray:
    """Solve ``(L_hat^W + beta I) A_hat = beta W_hat + lambda_hat^W`` per slice."""
    return _aux_update(state.w, state.mult_w, lw_hat, config, m, state.a, system)


def update_b(state: SolverState, config: SolverConfig, lh_hat: np.ndarray, m: Transform, system=None) -> np.ndarray:
    """Solve ``(L_hat^H + beta I) B_hat = beta H_hat + lambda_hat^H`` per slice."""
    return _aux_update(state.h, state.mult_h, lh_hat, config, m, state.b, system)


def update_e(state: SolverState, config: SolverConfig, observed: ObservedTensor, m: Transform,
             completed: np.ndarray | None = None) -> np.ndarray:
    """Closed form: ``(beta X + lambda^E + W H^T) / (1 + beta)`` on the mask, ``W H^T`` elsewhere."""
    z = state.completed(m) if completed is None else completed
    e = z.copy()
    idx = tuple(observed.indices.T)
    e[idx] = (config.beta * observed.values + state.mult_e[idx] + z[idx]) / (1.0 + config.beta)
    return e


def update_multipliers(state: SolverState, config: SolverConfig, observed: ObservedTensor):
    step = config.gamma * config.beta
    mult_w = state.mult_w - step * (state.a - state.w)
    mult_h = state.mult_h - step * (state.b - state.h)
    mult_e = state.mult_e.copy()
    idx = tuple(observed.indices.T)
    mult_e[idx] -= step * (state.e[idx] - observed.values)
    return mult_w, mult_h, mult_e


def _direct_inverse(l_hat: np.ndarray, config: SolverConfig):
    n = l_hat.shape[1]
    if n > config.direct_max_size:
        return None
    return np.linalg.inv(l_hat + config.beta * np.eye(n))


def initial_state(observed: ObservedTensor, config: SolverConfig) -> SolverState:
    """Standard-normal W and H from ``config.seed``; A = W, B = H, E = P_Omega(X)."""
    n1, n2, n3 = observed.shape
    rng = np.random.default_rng(config.seed)
    w = rng.standard_normal((n1, config.rank, n3))
    h = rng.standard_normal((n2, config.rank, n3))
    z = np.zeros(observed.shape)
    return SolverState(w, h, w.copy(), h.copy(), observed.dense(),
                       np.zeros_like(w), np.zeros_like(h), z)


def _graph_laplacian(g, n, n3, ss):
    if g is None:
        return None
    if isinstance(g, LaplacianTensor):
        return g
    if isinstance(g, DynamicGraph):
        if g.vertex_count != n or g.period_count != n3:
            raise ValueError(f"graph with {g.vertex_count} vertices / {g.period_count} periods does not match ({n}, {n3})")
        return laplacian_tensor(g, ss)
    raise TypeError(f"expected DynamicGraph or LaplacianTensor, got {type(g).__name__}")


def solve(observed: ObservedTensor, g_w=None, g_h=None, config: SolverConfig | None = None,
          transform: Transform | None = None, callback=None, check_monotone: bool = False):
    """Complete ``observed`` with optional dynamic graphs on rows (``g_w``) and columns (``g_h``).

    Returns ``(completed, diagnostics)``. Iterates until every primal
    residual (``||A - W||``, ``||B - H||``, ``||P_Omega(E - X)||``) is at most
    ``stop_tol * ||P_Omega(X)||_F`` or ``max_iter`` sweeps have run.

    ``check_monotone`` evaluates the augmented Lagrangian after every block
    update and records increases beyond round-off in ``diagnostics.violations``.
    """
    config = (config or SolverConfig()).validate(observed.shape[2])
    if len(observed) == 0:
        raise SolverError("no observations")
    n1, n2, n3 = observed.shape
    ss = config.resolved_ss(n3)
    m = transform or make_transform(config.transform, n3, ss)
    lw_hat = regularization_slices(_graph_laplacian(g_w, n1, n3, ss), n1, n3, config)
    lh_hat = regularization_slices(_graph_laplacian(g_h, n2, n3, ss), n2, n3, config)
    if config.beta_theory:
        config = replace(config, beta=max(config.beta, theoretical_beta(lw_hat, lh_hat, config.rank, observed.shape)))
    inv_w = _direct_inverse(lw_hat, config)
    inv_h = _direct_inverse(lh_hat, config)

    scale = float(np.linalg.norm(observed.values))
    diag = Diagnostics(scale=scale, beta=config.beta)
    state = initial_state(observed, config)
    cfg = config

    def run(fn):
        nonlocal cfg
        try:
            return fn(cfg)
        except CGNotConverged:
            log.warning("inner CG failed, retrying with %d iterations", 2 * cfg.cg_max_iter)
            cfg = replace(cfg, cg_max_iter=2 * cfg.cg_max_iter)
            return fn(cfg)

    def lag(s):
        return augmented_lagrangian(s, observed, lw_hat, lh_hat, cfg.beta, m)

    for k in range(config.max_iter):
        prev = state.copy()
        e_hat = _hat(state.e, m)
        z = {}

        def e_step(c):
            # W and H are final for this sweep; reuse W *_M H^T in the objective
            z["wh"] = state.completed(m)
            return update_e(state, c, observed, m, z["wh"])

        steps = [
            ("w", lambda c: update_w(state, c, m, e_hat)),
            ("h", lambda c: update_h(state, c, m, e_hat)),
            ("a", lambda c: update_a(state, c, lw_hat, m, inv_w)),
            ("b", lambda c: update_b(state, c, lh_hat, m, inv_h)),
            ("e", e_step),
        ]
        for name, fn in steps:
            before = lag(state) if check_monotone else None
            try:
                setattr(state, name, run(fn))
            except CGNotConverged as exc:
                raise SolverError(f"inner solve for {name.upper()} failed: {exc}") from exc
            if check_monotone:
                after = lag(state)
                if after > before + 1e-8 * max(1.0, abs(before)):
                    diag.violations.append((k + 1, name, before, after))
        state.mult_w, state.mult_h, state.mult_e = update_multipliers(state, cfg, observed)
        state.iteration = k + 1

        idx = tuple(observed.indices.T)
        res_w = float(np.linalg.norm(state.a - state.w))
        res_h = float(np.linalg.norm(state.b - state.h))
        res_e = float(np.linalg.norm(state.e[idx] - observed.values))
        gap = float(sum(np.sum((getattr(state, n) - getattr(prev, n)) ** 2) for n in "whab")
                    + np.sum((state.e[idx] - prev.e[idx]) ** 2))
        f = objective(state, lw_hat, lh_hat, m, z["wh"])
        if not np.isfinite(f):
            raise SolverError(f"objective became non-finite at iteration {k + 1}")
        diag.append(f, augmented_lagrangian(state, observed, lw_hat, lh_hat, cfg.beta, m, f),
                    res_w, res_h, res_e, gap)
        if callback is not None:
            callback(state, diag)
        if max(res_w, res_h, res_e) <= config.stop_tol * scale:
            diag.converged = True
            break

    diag.state = state
    diag.transform = m
    return state.completed(m), diag
