# %% [markdown]
# # From a rating log to a completed tensor
#
# A small synthetic rating log in the `user::item::rating::timestamp`
# format is bucketed into periods, side features become k-nearest-neighbour
# graphs, the rank is picked by cross-validation, and held-out ratings are
# predicted with and without the graphs.

# %%
import numpy as np

from graphtc.dynamic_graph import knn_similarity_graph
from graphtc.experiments import cv_rank, solver_config
from graphtc.io import ExperimentConfig, ingest_ratings
from graphtc.solver import solve

rng = np.random.default_rng(3)
users, items, periods, groups = 40, 30, 4, 3
gu, gi = rng.integers(groups, size=users), rng.integers(groups, size=items)
taste = rng.standard_normal((groups, groups))
user_features = np.eye(groups)[gu] @ rng.standard_normal((groups, 6)) + 0.2 * rng.standard_normal((users, 6))
item_features = np.eye(groups)[gi] @ rng.standard_normal((groups, 5)) + 0.2 * rng.standard_normal((items, 5))

lines = []
for u in range(users):
    for i in rng.choice(items, size=6, replace=False):
        t = rng.integers(periods)
        score = int(np.clip(np.rint(3 + 1.2 * taste[gu[u], gi[i]] + 0.3 * rng.standard_normal()), 1, 5))
        lines.append(f"{u + 1}::{i + 1}::{score}::{1000 * t + rng.integers(1000)}")
print(lines[:3])

# %%
rt = ingest_ratings(lines, periods)
obs = rt.observed
print("tensor", obs.shape, "ratings", len(obs), f"sparsity {rt.sparsity:.3%}")

# %% [markdown]
# Graphs from the features. Rows of the feature matrices must follow the
# ingested id order.

# %%
g_w = knn_similarity_graph(user_features[[int(u) - 1 for u in rt.user_ids]], 4, periods=periods)
g_h = knn_similarity_graph(item_features[[int(i) - 1 for i in rt.item_ids]], 4, periods=periods)
print("user graph edges per period:", g_w.edge_counts())

# %%
cfg = ExperimentConfig(folds=4, ranks=(1, 2, 3), ss=periods, max_iter=300)
rank, table = cv_rank(obs, g_w, g_h, cfg)
for row in table:
    print(row)
print("chosen rank:", rank)

# %%
held = rng.permutation(len(obs))[: len(obs) // 5]
keep = np.setdiff1d(np.arange(len(obs)), held)
idx, truth = tuple(obs.indices[held].T), obs.values[held]
for name, graphs in (("graphs", (g_w, g_h)), ("no graphs", (None, None))):
    xh, _ = solve(obs.subset(keep), *graphs, solver_config(cfg, rank=rank))
    print(f"{name:10s} held-out RE {np.linalg.norm(xh[idx] - truth) / np.linalg.norm(truth):.3f}")
