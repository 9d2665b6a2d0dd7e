# %% [markdown]
# # Completion with dynamic graphs
#
# We generate a tensor whose rows and columns are smooth over community
# graphs that change every few periods, hide most entries, and compare three
# models: no graph, the first period's graph held fixed, and the full
# dynamic graph. Sizes are reduced so the script runs in about a minute.

# %%
from graphtc.datagen import ObservationModel, sample_observations, synthetic_instance
from graphtc.dynamic_graph import aggregate, laplacian_tensor, smoothness_analytic
from graphtc.io import evaluate
from graphtc.solver import SolverConfig, make_transform, solve

inst = synthetic_instance(m=30, n=30, periods=16, rank=3, d=3, interval=4, seed=0)
print("tensor", inst.x.shape, "edges per period (rows):", inst.g_w.edge_counts()[:6])

# %% [markdown]
# The similarity scale `ss` sets the aggregation window. With `ss` equal to
# the community interval, each window sees a single community structure.

# %%
for ss in (1, 4, 16):
    agg = aggregate(inst.g_w, ss)
    print(f"ss={ss:2d}: {agg.layer_count} layers, max edge multiplicity {int(agg.agg_adjacency.max())}")

# %% [markdown]
# Smoothness of the tensor itself over the row graph, treating its 30
# lateral slices as one wide factor. Windows that stay inside an interval
# see one community structure; longer windows mix structures the data is
# not smooth over.

# %%
for ss in (1, 2, 4, 8, 16):
    val = smoothness_analytic(laplacian_tensor(inst.g_w, ss), inst.x, make_transform("dft", 16, ss))
    print(f"ss={ss:2d}: smoothness {val / ss:.4f} (divided by the window length)")

# %% [markdown]
# Now the three models on the same observations.

# %%
sample = sample_observations(inst.x, ObservationModel(sample_ratio=0.15, seed=1))
config = SolverConfig(rank=3, ss=4, max_iter=300)
modes = {
    "agnostic": (None, None),
    "static": (inst.g_w.first_period_static(), inst.g_h.first_period_static()),
    "dynamic": (inst.g_w, inst.g_h),
}
for name, (gw, gh) in modes.items():
    xh, diag = solve(sample.train, gw, gh, config)
    print(f"{name:9s} test RE {evaluate(xh, inst.x, sample.test_mask)['re']:.3f}  ({diag.iterations} iterations)")

# %% [markdown]
# Sweeping `ss` for the dynamic model; the best window is usually the
# community interval.

# %%
for ss in (1, 2, 4, 8, 16):
    xh, _ = solve(sample.train, inst.g_w, inst.g_h, SolverConfig(rank=3, ss=ss, max_iter=300))
    print(f"ss={ss:2d}: test RE {evaluate(xh, inst.x, sample.test_mask)['re']:.3f}")
