"""Experiment protocols on synthetic and ingested data.

Every function is deterministic given its config and returns a list of row
dicts (one table). Grid points are independent and may run in worker
processes (``jobs > 1``).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import spearmanr

from .datagen import ObservationModel, derive_seed, perturb_graph, sample_observations, synthetic_instance
from .dynamic_graph import DynamicGraph, laplacian_tensor
from .io import ExperimentConfig, evaluate
from .solver import ObservedTensor, SolverConfig, make_transform, solve
from .tensor_algebra import Transform, conj_transpose, t_product
from .theory import (
    ScalingConfig,
    alpha_measure,
    duality_probe,
    error_scaling_experiment,
    factorization_bound_check,
    identity_pair,
    regularizer_weighted_frobenius_check,
    weight_pair_from_graphs,
)

__all__ = [
    "solver_config",
    "instance",
    "observation_model",
    "complete_once",
    "compare_graph_modes",
    "sweep_ss",
    "best_ss_summary",
    "alpha_perturbation",
    "alpha_static_dynamic",
    "scaling_probe",
    "theory_check",
    "kfold_masks",
    "cv_rank",
]


def solver_config(cfg: ExperimentConfig, **overrides) -> SolverConfig:
    keys = ("rank", "lambda_g", "lambda_1", "beta", "gamma", "ss", "transform", "cg_tol", "cg_max_iter",
            "max_iter", "stop_tol", "seed", "direct_max_size", "beta_theory")
    base = {k: getattr(cfg, k) for k in keys}
    base.update(overrides)
    return SolverConfig(**base)


def instance(cfg: ExperimentConfig, seed: int, interval: int | None = None):
    return synthetic_instance(cfg.m, cfg.n, cfg.periods, cfg.true_rank, cfg.d, cfg.p_in, cfg.p_out,
                              interval or cfg.interval, seed, cfg.normalize)


def observation_model(cfg: ExperimentConfig, seed: int, ratio: float | None = None) -> ObservationModel:
    return ObservationModel(sample_ratio=cfg.sample_ratio if ratio is None else ratio,
                            n_samples=cfg.n_samples if ratio is None else None, sigma=cfg.sigma,
                            noise=cfg.noise, with_replacement=cfg.with_replacement, seed=seed)


def _map(fn, tasks, jobs: int = 1):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _modes(inst):
    return {
        "agnostic": (None, None),
        "static": (inst.g_w.first_period_static(), inst.g_h.first_period_static()),
        "dynamic": (inst.g_w, inst.g_h),
    }


def complete_once(cfg: ExperimentConfig):
    """Single solve on the synthetic preset; returns ``(row, completed, diagnostics, instance, sample)``."""
    inst = instance(cfg, cfg.seed)
    sample = sample_observations(inst.x, observation_model(cfg, derive_seed(cfg.seed, 1)))
    xh, diag = solve(sample.train, inst.g_w, inst.g_h, solver_config(cfg, ss=cfg.resolved_ss()))
    row = {"seed": cfg.seed, "sample_ratio": cfg.sample_ratio, "ss": cfg.resolved_ss(),
           **evaluate(xh, inst.x, sample.test_mask), "iterations": diag.iterations, "converged": diag.converged}
    return row, xh, diag, inst, sample


def _compare_task(args):
    cfg, rep, ratio_idx, ratio = args
    seed = derive_seed(cfg.seed, rep)
    inst = instance(cfg, seed)
    sample = sample_observations(inst.x, observation_model(cfg, derive_seed(seed, 1 + ratio_idx), ratio))
    ss = cfg.resolved_ss()
    rows = []
    for mode, (gw, gh) in _modes(inst).items():
        xh, diag = solve(sample.train, gw, gh, solver_config(cfg, ss=ss, seed=seed))
        rows.append({"sample_ratio": ratio, "seed": seed, "interval": cfg.interval, "ss": ss, "mode": mode,
                     **evaluate(xh, inst.x, sample.test_mask),
                     "iterations": diag.iterations, "converged": diag.converged})
    return rows


def compare_graph_modes(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Agnostic, static (first-period graph) and dynamic models on the same masks and ``ss``."""
    tasks = [(cfg, rep, k, r) for k, r in enumerate(cfg.ratios) for rep in range(cfg.repeats)]
    return [row for rows in _map(_compare_task, tasks, jobs) for row in rows]


def _divisors(t: int) -> tuple:
    return tuple(k for k in range(1, t + 1) if t % k == 0)


def _sweep_task(args):
    cfg, rep, interval, ss = args
    seed = derive_seed(cfg.seed, rep)
    inst = instance(cfg, seed, interval)
    sample = sample_observations(inst.x, observation_model(cfg, derive_seed(seed, 1)))
    xh, diag = solve(sample.train, inst.g_w, inst.g_h, solver_config(cfg, ss=ss, seed=seed))
    return {"interval": interval, "seed": seed, "ss": ss, **evaluate(xh, inst.x, sample.test_mask),
            "iterations": diag.iterations, "converged": diag.converged}


def sweep_ss(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Test RE of the dynamic-graph model for every (interval, ss) pair."""
    grid = cfg.ss_grid or _divisors(cfg.periods)
    tasks = [(cfg, rep, iv, ss) for iv in cfg.intervals for rep in range(cfg.repeats) for ss in grid]
    return _map(_sweep_task, tasks, jobs)


def best_ss_summary(rows: list[dict]) -> tuple[list[dict], float]:
    """Best ``ss`` (lowest median RE) per interval and the Spearman correlation of interval vs best ``ss``."""
    out = []
    for iv in sorted({r["interval"] for r in rows}):
        med = {}
        for ss in sorted({r["ss"] for r in rows if r["interval"] == iv}):
            med[ss] = float(np.median([r["re"] for r in rows if r["interval"] == iv and r["ss"] == ss]))
        best = min(med, key=lambda s: (med[s], s))
        out.append({"interval": iv, "best_ss": best, "re": med[best]})
    if len(out) < 2 or len({r["best_ss"] for r in out}) < 2:
        rho = float("nan")
    else:
        rho = float(spearmanr([r["interval"] for r in out], [r["best_ss"] for r in out]).statistic)
    return out, rho


def _alpha_pert_task(args):
    cfg, rep = args
    seed = derive_seed(cfg.seed, rep)
    inst = instance(cfg, seed)
    ss = cfg.resolved_ss()
    m = make_transform(cfg.transform, cfg.periods, ss)
    rows = []
    for k, level in enumerate(cfg.levels):
        gw = perturb_graph(inst.g_w, level, derive_seed(seed, 100 + k))
        gh = perturb_graph(inst.g_h, level, derive_seed(seed, 200 + k))
        pair = weight_pair_from_graphs(gw, gh, inst.x.shape, ss, cfg.lambda_g, cfg.lambda_1, m)
        alpha, alpha_star = alpha_measure(inst.x, pair, m)
        rows.append({"seed": seed, "level": level, "alpha": alpha, "alpha_star": alpha_star,
                     "ratio": alpha_star / alpha})
    return rows


def alpha_perturbation(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """``alpha* / alpha`` as the true graphs are increasingly rewired."""
    return [row for rows in _map(_alpha_pert_task, [(cfg, r) for r in range(cfg.repeats)], jobs) for row in rows]


def _alpha_sd_task(args):
    cfg, rep, interval = args
    seed = derive_seed(cfg.seed, rep)
    inst = instance(cfg, seed, interval)
    t = cfg.periods
    out = {"interval": interval, "seed": seed}
    for name, ss in (("static", t), ("dynamic", interval)):
        m = make_transform(cfg.transform, t, ss)
        pair = weight_pair_from_graphs(inst.g_w, inst.g_h, inst.x.shape, ss, cfg.lambda_g, cfg.lambda_1, m)
        out[f"alpha_{name}"] = alpha_measure(inst.x, pair, m)[0]
    out["ratio"] = out["alpha_static"] / out["alpha_dynamic"]
    return out


def alpha_static_dynamic(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Complexity of the static version (``ss = T``) over the dynamic one (``ss = interval``)."""
    tasks = [(cfg, r, iv) for iv in cfg.intervals for r in range(cfg.repeats)]
    return _map(_alpha_sd_task, tasks, jobs)


def scaling_probe(cfg: ExperimentConfig):
    sc = ScalingConfig(m=cfg.m, n=cfg.n, periods=cfg.periods, rank=cfg.true_rank, sigma=cfg.sigma,
                       n_grid=tuple(int(v) for v in cfg.n_grid),
                       seeds=tuple(derive_seed(cfg.seed, r) for r in range(cfg.repeats)),
                       with_replacement=True,
                       solver=solver_config(cfg, rank=cfg.true_rank, ss=None, lambda_g=0.0))
    return error_scaling_experiment(sc)


def theory_check(cfg: ExperimentConfig, trials: int = 200) -> list[dict]:
    """Run the weighted-norm probes on a small random instance."""
    rng = np.random.default_rng(cfg.seed)
    shape = (10, 8, 6)
    inst = synthetic_instance(10, 8, 6, 3, d=2, interval=3, seed=cfg.seed, normalize="none")
    rows = []
    for name, m, ss in (("dft", Transform.dft(6), 6), ("block", Transform.block_orthogonal(6, 3), 3),
                        ("identity", Transform.identity(6), 1)):
        pair = weight_pair_from_graphs(inst.g_w, inst.g_h, shape, ss, cfg.lambda_g, cfg.lambda_1, m)
        l_w = laplacian_tensor(inst.g_w, ss).combined(cfg.lambda_g, cfg.lambda_1, m)
        w = rng.standard_normal((shape[0], 3, shape[2]))
        reg_dev = regularizer_weighted_frobenius_check(w, l_w, pair, m)
        x = t_product(rng.standard_normal((10, 3, 6)), conj_transpose(rng.standard_normal((8, 3, 6)), m), m)
        fac = factorization_bound_check(x, pair, m, trials, rng)
        dual = duality_probe(x, pair, m, trials // 2, rng)
        ident = identity_pair(10, 8, m)
        a, a_star = alpha_measure(x, ident, m)
        rows += [
            {"transform": name, "check": "regularizer_weighted_frobenius", "value": reg_dev,
             "passed": reg_dev <= 1e-8 * (1 + float(np.sum(w * w)))},
            {"transform": name, "check": "factorization_lower_bound_margin", "value": fac.min_margin,
             "passed": not fac.violations},
            {"transform": name, "check": "factorization_attained_gap", "value": fac.attained_gap,
             "passed": fac.attained_gap <= 1e-6},
            {"transform": name, "check": "duality_max_random_ratio", "value": dual.max_ratio,
             "passed": dual.violations == 0},
            {"transform": name, "check": "duality_aligned_ratio", "value": dual.aligned_ratio,
             "passed": dual.aligned_ratio >= 0.999},
            {"transform": name, "check": "alpha_identity_weights", "value": abs(a - a_star), "passed": a == a_star},
        ]
    return rows


def kfold_masks(observed: ObservedTensor, folds: int, seed: int) -> list[np.ndarray]:
    """Random partition of the observation rows into ``folds`` held-out index sets."""
    perm = np.random.default_rng(seed).permutation(len(observed))
    return [np.sort(p) for p in np.array_split(perm, folds)]


def _fold_re(observed: ObservedTensor, held: np.ndarray, g_w, g_h, config: SolverConfig) -> float:
    keep = np.setdiff1d(np.arange(len(observed)), held)
    xh, _ = solve(observed.subset(keep), g_w, g_h, config)
    idx = tuple(observed.indices[held].T)
    truth = observed.values[held]
    return float(np.linalg.norm(xh[idx] - truth) / np.linalg.norm(truth))


def cv_rank(observed: ObservedTensor, g_w: DynamicGraph | None, g_h: DynamicGraph | None,
            cfg: ExperimentConfig, ranks=None) -> tuple[int, list[dict]]:
    """Choose the rank with the lowest mean held-out RE over ``cfg.folds`` folds."""
    ranks = tuple(ranks or cfg.ranks)
    ss = cfg.ss or observed.shape[2]
    folds = kfold_masks(observed, cfg.folds, cfg.seed)
    rows = []
    for r in ranks:
        scfg = solver_config(cfg, rank=int(r), ss=ss)
        res = [_fold_re(observed, held, g_w, g_h, scfg) for held in folds]
        rows.append({"rank": int(r), "cv_re": float(np.mean(res)), "cv_re_std": float(np.std(res))})
    best = min(rows, key=lambda row: (row["cv_re"], row["rank"]))["rank"]
    return best, rows
