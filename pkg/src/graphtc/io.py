"""File formats, dataset ingestion, flat configs and evaluation metrics.

COO tensor file::

    n1 n2 n3
    i1 i2 i3 value      (1-based, one line per observed entry)

Edge-event file::

    i j t               (1-based undirected edge present in period t)

A static graph file has ``i j`` lines applied to every period. ``#``
starts a comment in every format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .dynamic_graph import DynamicGraph, from_edge_events
from .solver import ObservedTensor

__all__ = [
    "DataError",
    "ConfigError",
    "read_coo",
    "write_coo",
    "read_graph",
    "write_graph",
    "RatingTensor",
    "parse_rating_log",
    "ingest_ratings",
    "ingest_traffic",
    "export_traffic",
    "read_matrix",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "evaluate",
]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(ValueError):
    """Unknown keys or invalid values in an experiment config."""


def _lines(source) -> list[str]:
    if isinstance(source, (str, Path)) and Path(source).exists():
        return Path(source).read_text().splitlines()
    if isinstance(source, str):
        raise DataError(f"no such file: {source}")
    return [str(s) for s in source]


def _body(lines):
    """Yield ``(line_number, fields)`` skipping blanks and ``#`` comments."""
    for no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if text:
            yield no, text.split()


# -- COO tensors --------------------------------------------------------------

def read_coo(source) -> ObservedTensor:
    rows = _body(_lines(source))
    try:
        no, head = next(rows)
    except StopIteration:
        raise DataError("empty COO file") from None
    try:
        dims = tuple(int(v) for v in head)
    except ValueError:
        raise DataError(f"line {no}: header must be three integers") from None
    if len(dims) != 3 or min(dims) < 1:
        raise DataError(f"line {no}: header must be three positive integers, got {head}")
    idx, vals, seen = [], [], set()
    for no, parts in rows:
        if len(parts) != 4:
            raise DataError(f"line {no}: expected 'i1 i2 i3 value'")
        try:
            ijk = tuple(int(p) for p in parts[:3])
            v = float(parts[3])
        except ValueError:
            raise DataError(f"line {no}: could not parse {' '.join(parts)!r}") from None
        if not all(1 <= a <= d for a, d in zip(ijk, dims)):
            raise DataError(f"line {no}: index {ijk} outside dims {dims}")
        if not math.isfinite(v):
            raise DataError(f"line {no}: value is not finite")
        if ijk in seen:
            raise DataError(f"line {no}: duplicate entry {ijk}")
        seen.add(ijk)
        idx.append(ijk)
        vals.append(v)
    indices = np.asarray(idx, dtype=np.int64).reshape(-1, 3) - 1
    return ObservedTensor(dims, indices, np.asarray(vals, dtype=float))


def write_coo(path, data) -> None:
    """Write an :class:`ObservedTensor` (or every entry of a dense array)."""
    if not isinstance(data, ObservedTensor):
        x = np.asarray(data, dtype=float)
        data = ObservedTensor.from_dense(x, np.ones(x.shape, dtype=bool))
    out = [" ".join(str(d) for d in data.shape)]
    for (i, j, k), v in zip(data.indices + 1, data.values):
        out.append(f"{i} {j} {k} {float(v)!r}")
    Path(path).write_text("\n".join(out) + "\n")


# -- graphs ---------------------------------------------------------------------

def read_graph(source, m: int, periods: int) -> DynamicGraph:
    """Read an edge-event file (``i j t`` lines) or a static graph file (``i j`` lines).

    Indices are 1-based; a static edge list is applied to every period.
    Vertex and period counts come from the tensor the graph accompanies.
    """
    rows = list(_body(_lines(source)))
    widths = {len(p) for _, p in rows}
    if len(widths) > 1 or (widths and not widths <= {2, 3}):
        raise DataError("graph lines must all be 'i j' or all be 'i j t'")
    events = []
    for no, parts in rows:
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise DataError(f"line {no}: could not parse {' '.join(parts)!r}") from None
        if len(vals) == 2:
            events.extend((vals[0], vals[1], t) for t in range(1, periods + 1))
        else:
            events.append(tuple(vals))
    try:
        return from_edge_events(events, m, periods)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def write_graph(path, g: DynamicGraph) -> None:
    """Write ``i j t`` lines (``i < j``), ordered by period then vertex."""
    t, i, j = np.nonzero(np.triu(np.moveaxis(g.adjacency, 2, 0), 1))
    Path(path).write_text("".join(f"{a + 1} {b + 1} {c + 1}\n" for a, b, c in zip(i, j, t)))


# -- rating logs ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RatingTensor:
    observed: ObservedTensor
    user_ids: list
    item_ids: list
    bucket_edges: np.ndarray

    @property
    def sparsity(self) -> float:
        """Observed fraction of the user x item x period tensor."""
        m, n, t = self.observed.shape
        return len(self.observed) / (m * n * t)


def parse_rating_log(source) -> list[tuple[str, str, float, float]]:
    """Parse ``user item rating timestamp`` lines (whitespace, comma or ``::`` separated)."""
    out = []
    for no, line in enumerate(_lines(source), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split("::") if "::" in text else text.replace(",", " ").split()
        if len(parts) != 4:
            raise DataError(f"line {no}: expected 'user item rating timestamp'")
        try:
            rating, stamp = float(parts[2]), float(parts[3])
        except ValueError:
            raise DataError(f"line {no}: rating and timestamp must be numeric") from None
        if not (math.isfinite(rating) and math.isfinite(stamp)):
            raise DataError(f"line {no}: non-finite value")
        out.append((parts[0].strip(), parts[1].strip(), rating, stamp))
    return out


def _id_key(v):
    # numeric ids sort numerically, others lexically
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


def ingest_ratings(log, periods: int) -> RatingTensor:
    """Build the user x item x period tensor from a rating log.

    Timestamps are split into ``periods`` equal-width buckets spanning the
    observed range (the maximum falls in the last bucket). Users and items
    are re-indexed densely in sorted id order. Repeated (user, item, period)
    ratings are averaged.
    """
    if periods <= 0:
        raise DataError("number of periods must be positive")
    records = parse_rating_log(log) if not (isinstance(log, list) and log and isinstance(log[0], tuple)) else log
    if not records:
        raise DataError("rating log is empty")
    users = sorted({r[0] for r in records}, key=_id_key)
    items = sorted({r[1] for r in records}, key=_id_key)
    u_map = {u: k for k, u in enumerate(users)}
    i_map = {i: k for k, i in enumerate(items)}
    stamps = np.array([r[3] for r in records])
    lo, hi = stamps.min(), stamps.max()
    edges = np.linspace(lo, hi, periods + 1)
    if hi > lo:
        bucket = np.minimum(((stamps - lo) / (hi - lo) * periods).astype(int), periods - 1)
    else:
        bucket = np.zeros(len(records), dtype=int)
    shape = (len(users), len(items), periods)
    flat = np.ravel_multi_index(
        (np.array([u_map[r[0]] for r in records]), np.array([i_map[r[1]] for r in records]), bucket), shape)
    uniq, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
    vals = np.bincount(inv, weights=np.array([r[2] for r in records])) / counts
    idx = np.column_stack(np.unravel_index(uniq, shape))
    return RatingTensor(ObservedTensor(shape, idx, vals), users, items, edges)


# -- traffic matrices -------------------------------------------------------------

def read_matrix(source) -> np.ndarray:
    rows = []
    for no, parts in _body(_lines(source)):
        try:
            rows.append([float(p) for p in " ".join(parts).replace(",", " ").split()])
        except ValueError:
            raise DataError(f"line {no}: non-numeric entry") from None
    if not rows:
        raise DataError("empty matrix file")
    if len({len(r) for r in rows}) != 1:
        raise DataError("matrix rows have different lengths")
    return np.asarray(rows)


def ingest_traffic(source, segments: int, intervals: int, days: int,
                   zeros_as_missing: bool = True) -> ObservedTensor:
    """Segments x (intervals * days) matrix to a segment x interval x day tensor.

    Column ``d * intervals + k`` holds interval ``k`` of day ``d``. With
    ``zeros_as_missing`` (loop-detector convention) zero readings are treated
    as unobserved.
    """
    mat = source if isinstance(source, np.ndarray) else read_matrix(source)
    if mat.shape != (segments, intervals * days):
        raise DataError(f"matrix has shape {mat.shape}, expected ({segments}, {intervals * days})")
    if not np.all(np.isfinite(mat)):
        raise DataError("matrix contains non-finite values")
    x = mat.reshape(segments, days, intervals).transpose(0, 2, 1)
    mask = x != 0 if zeros_as_missing else np.ones(x.shape, dtype=bool)
    return ObservedTensor.from_dense(x, mask)


def export_traffic(observed: ObservedTensor, path=None) -> np.ndarray:
    """Inverse of :func:`ingest_traffic` (unobserved entries written as zero)."""
    segments, intervals, days = observed.shape
    mat = observed.dense().transpose(0, 2, 1).reshape(segments, intervals * days)
    if path is not None:
        Path(path).write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in mat) + "\n")
    return mat


# -- experiment configs -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Flat experiment configuration; every field is a ``key = value`` line."""

    # tensor and graph generation
    m: int = 50
    n: int = 50
    periods: int = 64
    true_rank: int = 5
    d: int = 5
    p_in: float = 0.7
    p_out: float = 0.02
    interval: int = 4
    normalize: str = "max"
    # observation model
    sample_ratio: float = 0.1
    n_samples: int | None = None
    sigma: float = 0.0
    noise: str = "gaussian"
    with_replacement: bool = False
    # solver
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
    direct_max_size: int = 64
    beta_theory: bool = False
    # grids
    seed: int = 0
    repeats: int = 5
    ratios: tuple = (0.05, 0.1, 0.2)
    intervals: tuple = (4, 8, 16, 32, 64)
    ss_grid: tuple = ()
    levels: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    n_grid: tuple = (1000, 2000, 4000, 8000, 16000)
    ranks: tuple = (1, 2, 3, 4, 5)
    folds: int = 5
    # inputs (empty means: use the synthetic preset)
    observed: str = ""
    truth: str = ""
    graph_w: str = ""
    graph_h: str = ""
    ratings: str = ""
    features_w: str = ""
    features_h: str = ""
    knn: int = 5
    metric: str = "euclidean"
    traffic: str = ""
    segments: int = 0
    intervals_per_day: int = 0
    days: int = 0
    zeros_as_missing: bool = True

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.m > 0 and self.n > 0 and self.periods > 0, "dimensions must be positive"),
            (self.rank > 0 and self.true_rank > 0, "ranks must be positive"),
            (self.sigma >= 0, "sigma must be non-negative"),
            (self.normalize in ("max", "none"), "normalize must be 'max' or 'none'"),
            (self.transform in ("dft", "identity"), "transform must be 'dft' or 'identity'"),
            (self.repeats > 0 and self.folds > 1, "repeats must be positive and folds at least 2"),
            (self.ss is None or (self.ss > 0 and self.periods % self.ss == 0),
             "ss must divide the number of periods"),
            (self.n_samples is not None or 0 < self.sample_ratio <= 1, "sample_ratio must lie in (0, 1]"),
            (self.beta > 0 and self.lambda_1 >= 0 and self.lambda_g >= 0, "beta must be positive, lambdas non-negative"),
        ]
        if not (self.observed or self.ratings or self.traffic):
            # synthetic runs only
            checks += [
                (self.d > 0 and self.m % self.d == 0 and self.n % self.d == 0,
                 f"{self.d} communities must divide m={self.m} and n={self.n}"),
                (all(iv > 0 and self.periods % iv == 0 for iv in (self.interval, *self.intervals)),
                 "interval and intervals must divide the number of periods"),
            ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def resolved_ss(self) -> int:
        return self.ss if self.ss is not None else self.interval

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(e) if isinstance(e, float) else str(e) for e in v)
            elif isinstance(v, float):
                v = repr(v)
            elif v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {
    "int": int, "float": float, "bool": bool, "str": str, "tuple": tuple,
    "int | None": (int, None), "float | None": (float, None),
}


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name: str, kind: str, text: str, default):
    if kind in ("int | None", "float | None"):
        if text.lower() in ("none", ""):
            return None
        kind = kind.split(" ")[0]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        return _parse_bool(text)
    if kind == "str":
        return text
    if kind == "tuple":
        items = [s.strip() for s in text.split(",") if s.strip()]
        proto = default[0] if default else None
        conv = float if isinstance(proto, float) else int
        out = []
        for s in items:
            try:
                out.append(conv(s))
            except ValueError:
                out.append(float(s))
        return tuple(out)
    raise ConfigError(f"unsupported field type for {name}")


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; unknown keys and bad values raise :class:`ConfigError`."""
    cfg = base or ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {no}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        try:
            values[key] = _convert(key, known[key].type, raw, getattr(cfg, key))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {no}: bad value for {key}: {exc}") from None
    out = ExperimentConfig(**{**{f: getattr(cfg, f) for f in known}, **values})
    return out.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


# -- evaluation ------------------------------------------------------------------------

def evaluate(completed: np.ndarray, truth: np.ndarray, test_mask: np.ndarray) -> dict:
    """Relative error and RMSE on the test entries."""
    completed = np.asarray(completed)
    truth = np.asarray(truth)
    test_mask = np.asarray(test_mask, dtype=bool)
    if completed.shape != truth.shape or truth.shape != test_mask.shape:
        raise ValueError("completed, truth and mask must share a shape")
    if not test_mask.any():
        raise ValueError("test mask is empty")
    diff = completed[test_mask] - truth[test_mask]
    denom = float(np.linalg.norm(truth[test_mask]))
    num = float(np.linalg.norm(diff))
    re = num / denom if denom > 0 else (0.0 if num == 0 else math.inf)
    return {"re": re, "rmse": float(np.sqrt(np.mean(diff * diff))), "n_test": int(test_mask.sum())}
