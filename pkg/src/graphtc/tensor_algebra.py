"""Third-order tensors and the t-product algebra under an invertible transform.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n1, n2, n3)``. The
transform acts along the third mode: ``x_hat = x x_3 M``. Every product is
computed one transform-domain frontal slice at a time; the block-diagonal
matrix of slices is never formed.

Mode-3 unfolding uses i1-fastest column order, i.e. column ``i1 + n1 * i2``
of ``unfold3(x)`` is the tube ``x[i1, i2, :]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Transform",
    "TransformedView",
    "TSvdFactors",
    "unfold3",
    "fold3",
    "mode3_product",
    "t_product",
    "star_product",
    "conj_transpose",
    "identity_tensor",
    "t_svd",
    "tubal_rank",
    "tensor_spectral_norm",
    "tensor_nuclear_norm",
    "fro_norm",
    "inf_norm",
    "inner",
    "transform_view",
    "slicewise",
]

_ORTHO_TOL = 1e-10


def _dft_matrix(n: int) -> np.ndarray:
    return np.fft.fft(np.eye(n), axis=0)


def _conj_partners(matrix: np.ndarray) -> np.ndarray | None:
    """Row permutation p with M[p[t]] == conj(M[t]), or None if there is none.

    When it exists, the transform of a real tensor satisfies
    ``x_hat[..., p[t]] == conj(x_hat[..., t])``.
    """
    n = matrix.shape[0]
    if not np.iscomplexobj(matrix):
        return np.arange(n)
    conj = matrix.conj()
    scale = max(1.0, np.abs(matrix).max())
    partner = np.empty(n, dtype=int)
    for t in range(n):
        hits = np.flatnonzero(np.abs(matrix - conj[t]).max(axis=1) <= 1e-12 * scale)
        if hits.size == 0:
            return None
        partner[t] = hits[0]
    return partner


@dataclass(frozen=True, eq=False)
class Transform:
    """Invertible mode-3 transform ``M`` with ``M M^H = M^H M = C I``.

    Build instances with :meth:`dft`, :meth:`identity`,
    :meth:`block_orthogonal` or :meth:`from_matrix`; the constructors check
    the scaled-unitary property and reject anything else.
    """

    matrix: np.ndarray
    scale_c: float
    kind: str = "custom"
    block_size: int | None = None
    partner: np.ndarray | None = field(default=None, repr=False)
    _fast: str | None = field(default=None, repr=False)

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"transform matrix must be square, got {m.shape}")
        if self.scale_c <= 0:
            raise ValueError("scale constant C must be positive")
        n = m.shape[0]
        eye = np.eye(n)
        dev = max(
            np.linalg.norm(m @ m.conj().T - self.scale_c * eye),
            np.linalg.norm(m.conj().T @ m - self.scale_c * eye),
        )
        if dev / self.scale_c > _ORTHO_TOL:
            raise ValueError(
                f"transform is not scaled-unitary: |M M^H - C I|_F / C = {dev / self.scale_c:.3e}"
            )
        if self.partner is None:
            object.__setattr__(self, "partner", _conj_partners(m))

    # -- constructors -----------------------------------------------------
    @classmethod
    def dft(cls, n: int) -> "Transform":
        return cls(_dft_matrix(n), float(n), "dft", n, _fast="dft")

    @classmethod
    def identity(cls, n: int) -> "Transform":
        return cls(np.eye(n), 1.0, "identity", 1, _fast="identity")

    @classmethod
    def block_orthogonal(cls, n: int, block_size: int, block: np.ndarray | None = None) -> "Transform":
        """Block-diagonal transform with ``n // block_size`` copies of ``block``.

        ``block`` defaults to the ``block_size``-point DFT matrix; any square
        block with ``B B^H = C I`` is accepted.
        """
        if block_size < 1 or n % block_size:
            raise ValueError(f"block size {block_size} does not divide {n}")
        fast = None
        if block is None:
            block = _dft_matrix(block_size)
            fast = "block_dft"
        block = np.asarray(block)
        if block.shape != (block_size, block_size):
            raise ValueError(f"block must be {block_size}x{block_size}, got {block.shape}")
        c = float(np.real(np.vdot(block[:, 0], block[:, 0])))
        full = np.kron(np.eye(n // block_size), block)
        if n == block_size and fast == "block_dft":
            fast = "dft"
        return cls(full, c, "block_orthogonal", block_size, _fast=fast)

    @classmethod
    def from_matrix(cls, matrix) -> "Transform":
        m = np.asarray(matrix)
        c = float(np.real(np.trace(m @ m.conj().T))) / m.shape[0]
        return cls(m, c, "custom", None)

    # -- application ------------------------------------------------------
    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix)

    @property
    def preserves_real(self) -> bool:
        """Whether real tensors have real results under the algebra."""
        return self.partner is not None

    def _check(self, x: np.ndarray):
        if x.ndim != 3 or x.shape[2] != self.size:
            raise ValueError(f"expected a tensor with third dimension {self.size}, got shape {x.shape}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Return ``x x_3 M``."""
        x = np.asarray(x)
        self._check(x)
        if self._fast == "identity":
            return x.copy()
        if self._fast == "dft":
            return sfft.fft(x, axis=2)
        if self._fast == "block_dft":
            n1, n2, n3 = x.shape
            ss = self.block_size
            return sfft.fft(x.reshape(n1, n2, n3 // ss, ss), axis=3).reshape(n1, n2, n3)
        return np.tensordot(x, self.matrix, axes=([2], [1]))

    def inverse(self, x_hat: np.ndarray) -> np.ndarray:
        """Return ``x_hat x_3 M^{-1}`` (complex unless the transform is real)."""
        x_hat = np.asarray(x_hat)
        self._check(x_hat)
        if self._fast == "identity":
            return x_hat.copy()
        if self._fast == "dft":
            return sfft.ifft(x_hat, axis=2)
        if self._fast == "block_dft":
            n1, n2, n3 = x_hat.shape
            ss = self.block_size
            return sfft.ifft(x_hat.reshape(n1, n2, n3 // ss, ss), axis=3).reshape(n1, n2, n3)
        return np.tensordot(x_hat, self.matrix.conj().T / self.scale_c, axes=([2], [1]))

    def to_real_if(self, x: np.ndarray, real: bool) -> np.ndarray:
        """Drop the (round-off) imaginary part when the result is known to be real."""
        if real and np.iscomplexobj(x) and self.preserves_real:
            return np.ascontiguousarray(x.real)
        return x

    def representatives(self) -> np.ndarray:
        """Slice indices that determine all others for real inputs."""
        t = np.arange(self.size)
        return t[t <= self.partner]


class TransformedView(NamedTuple):
    origin: np.ndarray
    hat: np.ndarray
    transform: Transform

    def reconstruct(self) -> np.ndarray:
        return self.transform.to_real_if(self.transform.inverse(self.hat), np.isrealobj(self.origin))


def transform_view(x: np.ndarray, m: Transform) -> TransformedView:
    return TransformedView(x, m.forward(x), m)


class TSvdFactors(NamedTuple):
    """Factors of ``a = u *_M s *_M v^T``.

    ``singular_values[i, t]`` is the i-th singular value of transform-domain
    slice ``t`` (non-negative, non-increasing in ``i``).
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    transform: Transform
    singular_values: np.ndarray


# -- elementwise helpers ---------------------------------------------------

def fro_norm(x) -> float:
    return float(np.linalg.norm(np.asarray(x).ravel()))


def inf_norm(x) -> float:
    x = np.asarray(x)
    return float(np.abs(x).max()) if x.size else 0.0


def inner(x, y) -> float:
    """Real inner product ``sum x * y`` (conjugating ``x`` for complex input)."""
    return float(np.real(np.vdot(np.asarray(x).ravel(), np.asarray(y).ravel())))


def unfold3(x: np.ndarray) -> np.ndarray:
    n1, n2, n3 = x.shape
    return x.reshape(n1 * n2, n3, order="F").T


def fold3(mat: np.ndarray, n1: int, n2: int) -> np.ndarray:
    return mat.T.reshape(n1, n2, mat.shape[0], order="F")


def mode3_product(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Tensor-matrix product ``x x_3 a``, i.e. ``result_(3) = a @ x_(3)``."""
    x = np.asarray(x)
    a = np.asarray(a)
    if x.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got shape {x.shape}")
    if a.ndim != 2 or a.shape[1] != x.shape[2]:
        raise ValueError(f"matrix with {x.shape[2]} columns required, got shape {a.shape}")
    return np.tensordot(x, a, axes=([2], [1]))


# -- slice-wise machinery --------------------------------------------------

def _stack(x_hat: np.ndarray) -> np.ndarray:
    return np.moveaxis(x_hat, 2, 0)


def _unstack(s: np.ndarray) -> np.ndarray:
    return np.moveaxis(s, 0, 2)


def slicewise(
    func: Callable[..., np.ndarray | tuple],
    hats: Sequence[np.ndarray],
    m: Transform,
    real: bool,
    exploit_symmetry: bool = True,
):
    """Apply ``func`` to stacked transform-domain slices ``(k, a, b)``.

    ``func`` receives one stack per entry of ``hats`` (each of shape
    ``(n3, a, b)``, slice index first) and returns a stack or a tuple of
    stacks. For real data under a transform with conjugate-paired rows only
    the representative slices are computed; the remaining ones are filled in
    by conjugation, which also keeps phase-ambiguous factorizations (SVD,
    eigendecomposition) consistent so that the inverse transform is real.
    """
    if not (real and exploit_symmetry and m.partner is not None and m.is_complex):
        return func(*hats)
    t = np.arange(m.size)
    selfp = t[m.partner == t]
    pairs = t[m.partner > t]
    # self-paired slices of a real input are real: factor them in real arithmetic
    out_self = func(*[h[selfp].real for h in hats]) if selfp.size else None
    out_pair = func(*[h[pairs] for h in hats]) if pairs.size else None
    ref = out_self if out_self is not None else out_pair
    single = not isinstance(ref, tuple)
    wrap = (lambda o: (o,) if single else o)
    full = []
    for k, r in enumerate(wrap(ref)):
        f = np.zeros((m.size,) + r.shape[1:], dtype=np.result_type(r.dtype, np.complex128))
        if out_self is not None:
            f[selfp] = wrap(out_self)[k]
        if out_pair is not None:
            o = wrap(out_pair)[k]
            f[pairs] = o
            f[m.partner[pairs]] = o.conj()
        full.append(f)
    return full[0] if single else tuple(full)


def _is_real(*xs) -> bool:
    return all(np.isrealobj(x) for x in xs)


def t_product(a: np.ndarray, b: np.ndarray, m: Transform, exploit_symmetry: bool = True) -> np.ndarray:
    """t-product ``a *_M b``: slice-wise products in the transform domain."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 3 or b.ndim != 3:
        raise ValueError("t_product needs third-order tensors")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    real = _is_real(a, b)
    c_hat = slicewise(np.matmul, [_stack(m.forward(a)), _stack(m.forward(b))], m, real, exploit_symmetry)
    return m.to_real_if(m.inverse(_unstack(c_hat)), real)


def star_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frontal slice-wise product ``c[:, :, t] = a[:, :, t] @ b[:, :, t]`` (no transform)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    return np.einsum("ijt,jkt->ikt", a, b)


def conj_transpose(a: np.ndarray, m: Transform) -> np.ndarray:
    """Conjugate transpose under ``*_M``: each transform slice is replaced by its ``^H``."""
    a = np.asarray(a)
    a_hat = m.forward(a)
    return m.to_real_if(m.inverse(np.conj(a_hat.transpose(1, 0, 2))), np.isrealobj(a))


def identity_tensor(n: int, m: Transform) -> np.ndarray:
    hat = np.repeat(np.eye(n)[:, :, None], m.size, axis=2)
    return m.to_real_if(m.inverse(hat), True)


def t_svd(
    a: np.ndarray,
    m: Transform,
    truncate: int | None = None,
    full_matrices: bool = False,
    exploit_symmetry: bool = True,
) -> TSvdFactors:
    """Transformed t-SVD via one SVD per transform-domain slice.

    With ``full_matrices`` the factors have shapes ``n1 x n1``, ``n1 x n2``
    and ``n2 x n2``; otherwise ``p = min(n1, n2)`` (or ``truncate``) is used.
    """
    a = np.asarray(a)
    n1, n2, n3 = a.shape
    real = np.isrealobj(a)
    if truncate is not None and full_matrices:
        raise ValueError("truncate and full_matrices are mutually exclusive")
    u_hat, s_vals, vh_hat = slicewise(
        lambda x: np.linalg.svd(x, full_matrices=full_matrices), [_stack(m.forward(a))], m, real, exploit_symmetry
    )
    s_vals = s_vals.real
    p = s_vals.shape[1]
    if truncate is not None:
        p = min(p, int(truncate))
        u_hat, s_vals, vh_hat = u_hat[:, :, :p], s_vals[:, :p], vh_hat[:, :p, :]
    rows = u_hat.shape[2]
    cols = vh_hat.shape[1]
    s_hat = np.zeros((n3, rows, cols))
    k = np.arange(p)
    s_hat[:, k, k] = s_vals
    v_hat = np.conj(np.swapaxes(vh_hat, 1, 2))
    u = m.to_real_if(m.inverse(_unstack(u_hat)), real)
    s = m.to_real_if(m.inverse(_unstack(s_hat)), real)
    v = m.to_real_if(m.inverse(_unstack(v_hat)), real)
    return TSvdFactors(u, s, v, m, np.ascontiguousarray(s_vals.T))


def _singular_values(a: np.ndarray, m: Transform) -> np.ndarray:
    """Transform-domain singular values, shape ``(n3, p)``."""
    a = np.asarray(a)
    return slicewise(
        lambda x: np.linalg.svd(x, compute_uv=False).astype(complex), [_stack(m.forward(a))], m, np.isrealobj(a)
    ).real


def tubal_rank(a: np.ndarray, m: Transform, tol: float = 1e-8) -> int:
    """Number of tubes ``i`` with ``max_t s_hat[i, i, t] > tol * max(s_hat)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    sv = _singular_values(a, m)
    top = sv.max() if sv.size else 0.0
    if top == 0.0:
        return 0
    return int(np.count_nonzero(sv.max(axis=0) > tol * top))


def tensor_spectral_norm(a: np.ndarray, m: Transform) -> float:
    sv = _singular_values(a, m)
    return float(sv.max()) if sv.size else 0.0


def tensor_nuclear_norm(a: np.ndarray, m: Transform) -> float:
    return float(_singular_values(a, m).sum() / m.scale_c)
