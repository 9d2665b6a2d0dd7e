# %% [markdown]
# # Tensor algebra under a mode-3 transform
#
# A tour of the transformed t-product: pick a transform `M`, multiply
# tensors slice by slice in the transform domain, and factor them with the
# t-SVD. Everything here is plain numpy.

# %%
import numpy as np

from graphtc.tensor_algebra import (
    Transform,
    conj_transpose,
    t_product,
    t_svd,
    tensor_nuclear_norm,
    tubal_rank,
)

rng = np.random.default_rng(0)

# %% [markdown]
# Three transforms ship with the package. Each satisfies `M M^H = C I`;
# the constant `C` shows up as the factor between norms in the two domains.

# %%
n3 = 8
for m in (Transform.dft(n3), Transform.block_orthogonal(n3, 4), Transform.identity(n3)):
    x = rng.standard_normal((3, 4, n3))
    ratio = np.linalg.norm(m.forward(x)) ** 2 / np.linalg.norm(x) ** 2
    print(f"{m.kind:17s} C = {m.scale_c:4.1f}  |Mx|^2 / |x|^2 = {ratio:.6f}")

# %% [markdown]
# Under the full DFT the t-product is circular convolution of the tubes,
# so the first frontal slice of `a * b` mixes every slice of both inputs.

# %%
m = Transform.dft(n3)
a = rng.standard_normal((3, 4, n3))
b = rng.standard_normal((4, 2, n3))
c = t_product(a, b, m)
conv = sum(a[:, :, k] @ b[:, :, (-k) % n3] for k in range(n3))
print("slice 0 matches circular convolution:", np.allclose(c[:, :, 0], conv))

# %% [markdown]
# A tensor built as `W * H^T` with `r` lateral slices has tubal rank `r`,
# and the t-SVD recovers it exactly.

# %%
r = 3
w = rng.standard_normal((20, r, n3))
h = rng.standard_normal((15, r, n3))
x = t_product(w, conj_transpose(h, m), m)
f = t_svd(x, m)
rec = t_product(t_product(f.u, f.s, m), conj_transpose(f.v, m), m)
print("tubal rank:", tubal_rank(x, m))
print("reconstruction error:", np.linalg.norm(rec - x) / np.linalg.norm(x))
print("leading singular values per slice:\n", np.round(f.singular_values[:, :4], 3))

# %% [markdown]
# Truncating to the leading `k` triplets per slice gives the best tubal
# rank-`k` approximation; the nuclear norm sums the singular values over
# slices, scaled by `1/C`.

# %%
noisy = x + 0.05 * rng.standard_normal(x.shape)
for k in (1, 2, 3, 4):
    f = t_svd(noisy, m, truncate=k)
    approx = t_product(t_product(f.u, f.s, m), conj_transpose(f.v, m), m)
    print(k, round(np.linalg.norm(approx - x) / np.linalg.norm(x), 4))
print("nuclear norm:", round(tensor_nuclear_norm(x, m), 3))
