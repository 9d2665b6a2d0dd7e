import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from graphtc.tensor_algebra import (
    Transform,
    conj_transpose,
    fold3,
    fro_norm,
    identity_tensor,
    inf_norm,
    inner,
    mode3_product,
    star_product,
    t_product,
    t_svd,
    tensor_nuclear_norm,
    tensor_spectral_norm,
    transform_view,
    tubal_rank,
    unfold3,
)


def transforms(n3):
    out = [Transform.dft(n3), Transform.identity(n3)]
    for ss in (2, 3):
        if n3 % ss == 0:
            out.append(Transform.block_orthogonal(n3, ss))
    return out


def rel(a, b):
    return np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- Transform ---------------------------------------------------------------

def test_transform_scale_constants():
    assert Transform.dft(7).scale_c == 7
    assert Transform.identity(5).scale_c == 1
    b = Transform.block_orthogonal(8, 4)
    assert b.scale_c == 4 and b.block_size == 4
    assert_allclose(b.matrix[:4, 4:], 0)
    assert_allclose(b.matrix[:4, :4], b.matrix[4:, 4:])


def test_block_transform_with_custom_orthogonal_block(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    m = Transform.block_orthogonal(6, 3, block=2.0 * q)
    assert m.scale_c == pytest.approx(4.0)
    x = rng.standard_normal((2, 3, 6))
    assert rel(m.inverse(m.forward(x)), x) < 1e-12


def test_transform_rejects_non_scaled_unitary():
    with pytest.raises(ValueError):
        Transform.from_matrix(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_block_transform_needs_divisor():
    with pytest.raises(ValueError):
        Transform.block_orthogonal(6, 4)


@pytest.mark.parametrize("n3", [1, 2, 5, 6])
def test_round_trip_and_isometry(rng, n3):
    for m in transforms(n3):
        x = rng.standard_normal((3, 4, n3))
        view = transform_view(x, m)
        assert rel(view.reconstruct(), x) < 1e-10
        assert np.linalg.norm(view.hat) ** 2 == pytest.approx(m.scale_c * np.linalg.norm(x) ** 2, rel=1e-10)


def test_fast_paths_match_matrix_product(rng):
    x = rng.standard_normal((2, 3, 8))
    for m in (Transform.dft(8), Transform.block_orthogonal(8, 4)):
        dense = np.tensordot(x, m.matrix, ([2], [1]))
        assert_allclose(m.forward(x), dense, atol=1e-12)


# -- elementwise helpers ---------------------------------------------------------

def test_norms_match_brute_force(rng):
    x = rng.standard_normal((3, 2, 4))
    y = rng.standard_normal((3, 2, 4))
    assert fro_norm(x) == pytest.approx(np.sqrt(sum(v * v for v in x.ravel())))
    assert inf_norm(x) == max(abs(v) for v in x.ravel())
    assert inner(x, y) == pytest.approx(sum(a * b for a, b in zip(x.ravel(), y.ravel())))


def test_unfold_is_i1_fastest():
    x = np.arange(12.0).reshape(2, 3, 2, order="F")
    u = unfold3(x)
    assert u.shape == (2, 6)
    assert_array_equal(u[0], [0, 1, 2, 3, 4, 5])
    assert_array_equal(fold3(u, 2, 3), x)


# -- mode-3 product -------------------------------------------------------------------

def test_mode3_identity(rng):
    x = rng.standard_normal((2, 3, 4))
    assert_array_equal(mode3_product(x, np.eye(4)), x)


def test_mode3_hand_case():
    out = mode3_product(np.ones((1, 1, 2)), np.array([[1.0, 1.0], [1.0, -1.0]]))
    assert_allclose(out[0, 0], [2.0, 0.0])


def test_mode3_round_trip(rng):
    x = rng.standard_normal((3, 2, 4))
    a = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    back = mode3_product(mode3_product(x, a), np.linalg.inv(a))
    assert rel(back, x) < 1e-10


def test_mode3_matches_unfolding(rng):
    x = rng.standard_normal((3, 2, 4))
    a = rng.standard_normal((5, 4))
    assert_allclose(unfold3(mode3_product(x, a)), a @ unfold3(x), atol=1e-12)


def test_mode3_dimension_mismatch():
    with pytest.raises(ValueError):
        mode3_product(np.ones((2, 2, 3)), np.eye(4))


# -- t-product --------------------------------------------------------------------------

@pytest.mark.parametrize("n3", [1, 4, 6])
def test_identity_tensor_is_neutral(rng, n3):
    for m in transforms(n3):
        a = rng.standard_normal((3, 4, n3))
        assert rel(t_product(a, identity_tensor(4, m), m), a) < 1e-12
        assert rel(t_product(identity_tensor(3, m), a, m), a) < 1e-12


def test_dft_identity_tensor_is_first_tube():
    e = identity_tensor(3, Transform.dft(4))
    assert_allclose(e[:, :, 0], np.eye(3), atol=1e-15)
    assert_allclose(e[:, :, 1:], 0, atol=1e-15)


def test_matrix_degeneration(rng):
    a, b = rng.standard_normal((3, 4, 1)), rng.standard_normal((4, 2, 1))
    m = Transform.from_matrix(np.array([[1.0]]))
    assert_allclose(t_product(a, b, m)[:, :, 0], a[:, :, 0] @ b[:, :, 0])


def test_t_product_slice_oracle(rng):
    m = Transform.dft(5)
    a, b = rng.standard_normal((3, 4, 5)), rng.standard_normal((4, 2, 5))
    c_hat = m.forward(t_product(a, b, m))
    a_hat, b_hat = m.forward(a), m.forward(b)
    for t in range(5):
        assert_allclose(c_hat[:, :, t], a_hat[:, :, t] @ b_hat[:, :, t], atol=1e-10)


def test_dft_t_product_is_circular_convolution(rng):
    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((3, 2, 4))
    expected = np.zeros((2, 2, 4))
    for t in range(4):
        for s in range(4):
            expected[:, :, t] += a[:, :, s] @ b[:, :, (t - s) % 4]
    assert_allclose(t_product(a, b, Transform.dft(4)), expected, atol=1e-12)


def test_symmetry_path_matches_plain_path(rng):
    for n3 in (4, 5, 6):
        for m in transforms(n3):
            a, b = rng.standard_normal((3, 4, n3)), rng.standard_normal((4, 2, n3))
            assert rel(t_product(a, b, m), t_product(a, b, m, exploit_symmetry=False)) < 1e-12


def test_real_input_gives_real_output(rng):
    m = Transform.dft(6)
    a, b = rng.standard_normal((2, 3, 6)), rng.standard_normal((3, 2, 6))
    assert np.isrealobj(t_product(a, b, m))
    assert np.isrealobj(conj_transpose(a, m))
    f = t_svd(a, m)
    assert np.isrealobj(f.u) and np.isrealobj(f.s) and np.isrealobj(f.v)


def test_complex_input_supported(rng):
    m = Transform.dft(4)
    a = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((3, 2, 4)) + 1j * rng.standard_normal((3, 2, 4))
    c_hat = m.forward(t_product(a, b, m))
    assert_allclose(c_hat, np.einsum("ijt,jkt->ikt", m.forward(a), m.forward(b)), atol=1e-10)


def test_t_product_shape_errors(rng):
    m = Transform.dft(3)
    with pytest.raises(ValueError):
        t_product(np.ones((2, 3, 3)), np.ones((2, 2, 3)), m)
    with pytest.raises(ValueError):
        t_product(np.ones((2, 3, 3)), np.ones((3, 2, 4)), m)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_associativity(n3, seed):
    r = np.random.default_rng(seed)
    for m in transforms(n3):
        a, b, c = (r.standard_normal(s) for s in ((2, 3, n3), (3, 4, n3), (4, 2, n3)))
        left = t_product(t_product(a, b, m), c, m)
        right = t_product(a, t_product(b, c, m), m)
        assert rel(left, right) < 1e-9


# -- star product ----------------------------------------------------------------------

def test_star_product_loop_oracle(rng):
    a, b = rng.standard_normal((2, 2, 3)), rng.standard_normal((2, 2, 3))
    c = star_product(a, b)
    for t in range(3):
        assert_allclose(c[:, :, t], a[:, :, t] @ b[:, :, t], rtol=0, atol=1e-15)


def test_star_product_identity_and_identity_transform(rng):
    a, b = rng.standard_normal((3, 4, 5)), rng.standard_normal((4, 2, 5))
    eye = np.repeat(np.eye(4)[:, :, None], 5, axis=2)
    assert_allclose(star_product(a, eye), a)
    assert_allclose(star_product(a, b), t_product(a, b, Transform.identity(5)), atol=1e-14)


# -- conjugate transpose -------------------------------------------------------------------

def test_conj_transpose_dft_slice_rule(rng):
    a = rng.standard_normal((2, 3, 4))
    at = conj_transpose(a, Transform.dft(4))
    assert_allclose(at[:, :, 0], a[:, :, 0].T)
    for t in range(1, 4):
        assert_allclose(at[:, :, t], a[:, :, 4 - t].T, atol=1e-14)


def test_conj_transpose_properties(rng):
    for m in transforms(6):
        a, b = rng.standard_normal((2, 3, 6)), rng.standard_normal((3, 4, 6))
        assert rel(conj_transpose(conj_transpose(a, m), m), a) < 1e-12
        lhs = conj_transpose(t_product(a, b, m), m)
        rhs = t_product(conj_transpose(b, m), conj_transpose(a, m), m)
        assert rel(lhs, rhs) < 1e-10
    a = rng.standard_normal((2, 3, 1))
    assert_allclose(conj_transpose(a, Transform.dft(1))[:, :, 0], a[:, :, 0].T)


# -- t-SVD and rank ----------------------------------------------------------------------------

def test_t_svd_reconstruction_and_factor_invariants(rng):
    for m in transforms(4):
        a = rng.standard_normal((8, 6, 4))
        f = t_svd(a, m)
        rec = t_product(t_product(f.u, f.s, m), conj_transpose(f.v, m), m)
        assert rel(rec, a) < 1e-8
        u_hat = np.moveaxis(m.forward(f.u), 2, 0)
        v_hat = np.moveaxis(m.forward(f.v), 2, 0)
        s_hat = np.moveaxis(m.forward(f.s), 2, 0)
        eye = np.eye(6)
        assert np.abs(np.conj(np.swapaxes(u_hat, 1, 2)) @ u_hat - eye).max() < 1e-8
        assert np.abs(np.conj(np.swapaxes(v_hat, 1, 2)) @ v_hat - eye).max() < 1e-8
        assert np.abs(s_hat - np.eye(6) * np.diagonal(s_hat, axis1=1, axis2=2)[:, None, :]).max() < 1e-8
        sv = f.singular_values
        assert np.all(sv >= 0) and np.all(np.diff(sv, axis=0) <= 1e-12)


def test_t_svd_full_matrices_shapes(rng):
    f = t_svd(rng.standard_normal((5, 3, 4)), Transform.dft(4), full_matrices=True)
    assert f.u.shape == (5, 5, 4) and f.s.shape == (5, 3, 4) and f.v.shape == (3, 3, 4)


def test_t_svd_f_diagonal_input_identity_transform():
    s = np.zeros((3, 3, 2))
    s[0, 0] = [3.0, 5.0]
    s[1, 1] = [2.0, 1.0]
    s[2, 2] = [1.0, 0.5]
    m = Transform.identity(2)
    f = t_svd(s, m)
    assert_allclose(np.abs(f.u), identity_tensor(3, m), atol=1e-12)
    assert_allclose(f.s, s, atol=1e-12)
    assert_allclose(np.abs(f.v), identity_tensor(3, m), atol=1e-12)


def test_t_svd_truncation(rng):
    m = Transform.dft(4)
    f = t_svd(rng.standard_normal((6, 5, 4)), m, truncate=2)
    assert f.u.shape == (6, 2, 4) and f.v.shape == (5, 2, 4)
    assert tubal_rank(t_product(t_product(f.u, f.s, m), conj_transpose(f.v, m), m), m) == 2


def test_tubal_rank_cases(rng):
    m = Transform.dft(4)
    assert tubal_rank(np.zeros((3, 3, 4)), m) == 0
    assert tubal_rank(identity_tensor(5, m), m) == 5
    for r in (1, 3):
        p, q = rng.standard_normal((7, r, 4)), rng.standard_normal((6, r, 4))
        assert tubal_rank(t_product(p, conj_transpose(q, m), m), m) <= r
    with pytest.raises(ValueError):
        tubal_rank(np.ones((2, 2, 2)), Transform.dft(2), tol=0)


def test_tubal_rank_paper_scale():
    rng = np.random.default_rng(0)
    m = Transform.dft(64)
    p, q = rng.standard_normal((50, 5, 64)), rng.standard_normal((50, 5, 64))
    assert tubal_rank(t_product(p, conj_transpose(q, m), m), m) == 5


# -- norms --------------------------------------------------------------------------------------

def test_norms_matrix_case(rng):
    a = rng.standard_normal((4, 3, 1))
    s = np.linalg.svd(a[:, :, 0], compute_uv=False)
    m = Transform.identity(1)
    assert tensor_spectral_norm(a, m) == pytest.approx(s[0])
    assert tensor_nuclear_norm(a, m) == pytest.approx(s.sum())


def test_norms_slice_oracle(rng):
    m = Transform.dft(5)
    a = rng.standard_normal((4, 3, 5))
    a_hat = m.forward(a)
    sv = [np.linalg.svd(a_hat[:, :, t], compute_uv=False) for t in range(5)]
    assert tensor_spectral_norm(a, m) == pytest.approx(max(s[0] for s in sv))
    assert tensor_nuclear_norm(a, m) == pytest.approx(sum(s.sum() for s in sv) / 5)


def test_rank_one_spectral_equals_slice_oracle(rng):
    m = Transform.dft(4)
    u = rng.standard_normal((5, 1, 4))
    v = rng.standard_normal((3, 1, 4))
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    x = t_product(u, conj_transpose(v, m), m)
    x_hat = m.forward(x)
    per_slice = [np.linalg.norm(x_hat[:, :, t], 2) for t in range(4)]
    assert tensor_spectral_norm(x, m) == pytest.approx(max(per_slice))
    assert tensor_nuclear_norm(x, m) == pytest.approx(sum(per_slice) / 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_nuclear_spectral_duality(seed):
    r = np.random.default_rng(seed)
    for m in transforms(6):
        a, b = r.standard_normal((4, 3, 6)), r.standard_normal((4, 3, 6))
        assert inner(a, b) <= tensor_nuclear_norm(a, m) * tensor_spectral_norm(b, m) + 1e-9


def test_unitary_invariance(rng):
    for m in transforms(4):
        f = t_svd(rng.standard_normal((5, 5, 4)), m)
        a = rng.standard_normal((5, 3, 4))
        assert fro_norm(t_product(f.u, a, m)) == pytest.approx(fro_norm(a), rel=1e-10)


def test_t_svd_complex_input(rng):
    for m in transforms(4):
        a = rng.standard_normal((5, 3, 4)) + 1j * rng.standard_normal((5, 3, 4))
        f = t_svd(a, m)
        assert rel(t_product(t_product(f.u, f.s, m), conj_transpose(f.v, m), m), a) < 1e-10
