# %% [markdown]
# # The regularizer as a weighted nuclear norm
#
# The graph smoothness penalty on the factors equals a weighted tensor
# nuclear norm of their product. This script checks the identity on a small
# instance, looks at the complexity measure `alpha` as the graphs lose their
# structure, and fits the error-versus-sample-size slope.

# %%
import numpy as np

from graphtc.datagen import derive_seed, perturb_graph, synthetic_instance
from graphtc.dynamic_graph import laplacian_tensor
from graphtc.solver import make_transform
from graphtc.tensor_algebra import conj_transpose, t_product
from graphtc.theory import (
    ScalingConfig,
    alpha_measure,
    balanced_factorization,
    error_scaling_experiment,
    factorization_bound_check,
    regularizer_weighted_frobenius_check,
    weight_pair_from_graphs,
    weighted_nuclear_norm,
)

rng = np.random.default_rng(0)
inst = synthetic_instance(10, 8, 6, 3, d=2, interval=3, seed=0, normalize="none")
m = make_transform("dft", 6, 3)
pair = weight_pair_from_graphs(inst.g_w, inst.g_h, inst.x.shape, 3, 0.5, 0.1, m)

# %% [markdown]
# The penalty on one factor equals a weighted Frobenius norm.

# %%
w = rng.standard_normal((10, 3, 6))
l_w = laplacian_tensor(inst.g_w, 3).combined(0.5, 0.1, m)
print("deviation:", regularizer_weighted_frobenius_check(w, l_w, pair, m))

# %% [markdown]
# Every factorization of `x` costs at least the weighted nuclear norm, and
# the balanced factorization reaches it.

# %%
x = t_product(rng.standard_normal((10, 3, 6)), conj_transpose(rng.standard_normal((8, 3, 6)), m), m)
report = factorization_bound_check(x, pair, m, trials=200, rng=1)
w0, h0 = balanced_factorization(x, pair, m)
print("weighted nuclear norm:", round(weighted_nuclear_norm(x, pair, m), 6))
print("balanced factorization cost:", round(report.attained, 6))
print("smallest margin over random factorizations:", report.min_margin, "violations:", len(report.violations))

# %% [markdown]
# `alpha* / alpha` compares the plain and weighted infinity norms of the
# true tensor. Rewiring the graphs makes them less informative.

# %%
big = synthetic_instance(30, 30, 16, 3, d=3, interval=4, seed=2)
m16 = make_transform("dft", 16, 4)
for k, level in enumerate((0.0, 0.25, 0.5, 0.75, 1.0)):
    gw = perturb_graph(big.g_w, level, derive_seed(2, 100 + k))
    gh = perturb_graph(big.g_h, level, derive_seed(2, 200 + k))
    p = weight_pair_from_graphs(gw, gh, big.x.shape, 4, 1e-3, 1e-3, m16)
    alpha, alpha_star = alpha_measure(big.x, p, m16)
    weighted = p.weigh(big.x)
    print(f"level {level:.2f}: alpha*/alpha {alpha_star / alpha:8.2f}   "
          f"Frobenius analogue {np.linalg.norm(big.x) / np.linalg.norm(weighted):8.2f}")

# %% [markdown]
# Per-entry squared error against the number of i.i.d. samples; the fitted
# log-log slope should be close to -1.

# %%
result = error_scaling_experiment(ScalingConfig(seeds=(0, 1, 2)))
for n, err in result.median_by_n().items():
    print(n, f"{err:.5f}")
print("slope:", round(result.slope, 3))
