"""Command-line entry point: ``graphtc <subcommand> [flags]``.

Every run writes ``config.txt`` (the fully resolved config), ``metrics.csv``
and ``seed.txt`` into ``--out``. Re-running with ``--config <out>/config.txt``
reproduces the metrics.

Exit codes: 0 success, 2 config error, 3 data error, 4 solver non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .datagen import sample_observations
from .dynamic_graph import knn_similarity_graph
from .io import (
    ConfigError,
    DataError,
    ExperimentConfig,
    evaluate,
    ingest_ratings,
    ingest_traffic,
    load_config,
    read_coo,
    read_graph,
    read_matrix,
    write_coo,
    write_graph,
)
from .solver import SolverError, solve

log = logging.getLogger("graphtc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4


def write_table(path, rows: list[dict]) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0])
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _finish(out: Path, cfg: ExperimentConfig, rows: list[dict]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    (out / "seed.txt").write_text(f"{cfg.seed}\n")
    write_table(out / "metrics.csv", rows)


def _load_observed(cfg: ExperimentConfig):
    """Observed tensor, optional truth, graphs and test mask from the configured input files."""
    truth = None
    if cfg.ratings:
        rt = ingest_ratings(cfg.ratings, cfg.periods)
        observed = rt.observed
    elif cfg.traffic:
        observed = ingest_traffic(cfg.traffic, cfg.segments, cfg.intervals_per_day, cfg.days, cfg.zeros_as_missing)
    else:
        observed = read_coo(cfg.observed)
    n1, n2, n3 = observed.shape
    if cfg.truth:
        t = read_coo(cfg.truth)
        if t.shape != observed.shape:
            raise DataError("truth and observed tensors have different shapes")
        truth = t.dense()
    g_w = g_h = None
    if cfg.graph_w:
        g_w = read_graph(cfg.graph_w, n1, n3)
    elif cfg.features_w:
        g_w = knn_similarity_graph(read_matrix(cfg.features_w), cfg.knn, cfg.metric, n3)
    if cfg.graph_h:
        g_h = read_graph(cfg.graph_h, n2, n3)
    elif cfg.features_h:
        g_h = knn_similarity_graph(read_matrix(cfg.features_h), cfg.knn, cfg.metric, n3)
    for g, n, side in ((g_w, n1, "row"), (g_h, n2, "column")):
        if g is not None and g.vertex_count != n:
            raise DataError(f"{side} graph has {g.vertex_count} vertices, tensor has {n}")
    return observed, truth, g_w, g_h


def cmd_generate(cfg, args, out: Path):
    inst = ex.instance(cfg, cfg.seed)
    sample = sample_observations(inst.x, ex.observation_model(cfg, ex.derive_seed(cfg.seed, 1)))
    out.mkdir(parents=True, exist_ok=True)
    write_coo(out / "truth.coo", inst.x)
    write_coo(out / "observed.coo", sample.train)
    write_graph(out / "graph_w.txt", inst.g_w)
    write_graph(out / "graph_h.txt", inst.g_h)
    meta = sample.metadata
    return [{"m": cfg.m, "n": cfg.n, "periods": cfg.periods, "true_rank": cfg.true_rank, "interval": cfg.interval,
             "scale": inst.scale, **meta, "edges_w": float(inst.g_w.edge_counts().mean()),
             "edges_h": float(inst.g_h.edge_counts().mean())}]


def cmd_complete(cfg, args, out: Path):
    if not (cfg.observed or cfg.ratings or cfg.traffic):
        row, xh, diag, _, _ = ex.complete_once(cfg)
        out.mkdir(parents=True, exist_ok=True)
        diag.write_csv(out / "diagnostics.csv")
        write_coo(out / "completed.coo", xh)
        if not diag.converged:
            log.warning("solver reached max_iter=%d without meeting the stopping rule", cfg.max_iter)
        return [row]
    observed, truth, g_w, g_h = _load_observed(cfg)
    ss = cfg.ss or observed.shape[2]
    xh, diag = solve(observed, g_w, g_h, ex.solver_config(cfg, ss=ss))
    out.mkdir(parents=True, exist_ok=True)
    diag.write_csv(out / "diagnostics.csv")
    write_coo(out / "completed.coo", xh)
    row = {"ss": ss, "observed": len(observed), "iterations": diag.iterations, "converged": diag.converged,
           "train_re": float(np.linalg.norm(xh[tuple(observed.indices.T)] - observed.values)
                             / np.linalg.norm(observed.values))}
    if truth is not None:
        test = ~observed.mask
        row.update(evaluate(xh, truth, test))
    return [row]


def cmd_sweep_ss(cfg, args, out: Path):
    rows = ex.sweep_ss(cfg, args.jobs)
    summary, rho = ex.best_ss_summary(rows)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "best_ss.csv", [{**r, "spearman": rho} for r in summary])
    return rows


def cmd_compare(cfg, args, out: Path):
    return ex.compare_graph_modes(cfg, args.jobs)


def cmd_alpha(cfg, args, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "alpha_static_dynamic.csv", ex.alpha_static_dynamic(cfg, args.jobs))
    return ex.alpha_perturbation(cfg, args.jobs)


def cmd_scaling(cfg, args, out: Path):
    res = ex.scaling_probe(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "slope.txt").write_text(f"slope = {res.slope!r}\nintercept = {res.intercept!r}\n")
    return res.rows


def cmd_theory(cfg, args, out: Path):
    rows = ex.theory_check(cfg)
    if not all(r["passed"] for r in rows):
        log.error("theory check failed: %s", [r["check"] for r in rows if not r["passed"]])
    return rows


def cmd_cv_rank(cfg, args, out: Path):
    if cfg.observed or cfg.ratings or cfg.traffic:
        observed, _, g_w, g_h = _load_observed(cfg)
    else:
        inst = ex.instance(cfg, cfg.seed)
        sample = sample_observations(inst.x, ex.observation_model(cfg, ex.derive_seed(cfg.seed, 1)))
        observed, g_w, g_h = sample.train, inst.g_w, inst.g_h
        cfg = replace(cfg, ss=cfg.resolved_ss())
    best, rows = ex.cv_rank(observed, g_w, g_h, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best_rank.txt").write_text(f"rank = {best}\n")
    return [{**r, "selected": r["rank"] == best} for r in rows]


COMMANDS = {
    "generate": (cmd_generate, "generate a synthetic instance (graphs, truth, observations)"),
    "complete": (cmd_complete, "run one completion and report RE"),
    "sweep-ss": (cmd_sweep_ss, "test RE versus similarity scale for each graph interval"),
    "compare-graph-modes": (cmd_compare, "agnostic / static / dynamic models on the same masks"),
    "alpha-probe": (cmd_alpha, "complexity measure under graph perturbation and static vs dynamic"),
    "scaling-probe": (cmd_scaling, "per-entry error versus number of samples"),
    "theory-check": (cmd_theory, "numerical checks of the weighted-norm identities"),
    "cv-rank": (cmd_cv_rank, "five-fold cross-validated rank selection"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphtc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", type=Path, help="flat key = value config file")
        s.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        s.add_argument("--seed", type=int, help="base seed (overrides the config)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for grids")
        s.add_argument("--beta-theory", action="store_true", help="raise beta to the theoretical bound")
        s.add_argument("--with-replacement", action="store_true", help="i.i.d. sampling with replacement")
        s.add_argument("--zeros-are-values", action="store_true", help="keep zeros in traffic input")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        over["seed"] = args.seed
    if args.beta_theory:
        over["beta_theory"] = True
    if args.with_replacement:
        over["with_replacement"] = True
    if args.zeros_are_values:
        over["zeros_as_missing"] = False
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return replace(cfg, **over).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        fn = COMMANDS[args.command][0]
        rows = fn(cfg, args, args.out)
        _finish(args.out, cfg, rows)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
