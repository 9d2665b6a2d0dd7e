import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from graphtc.datagen import (
    CommunityGraphSpec,
    ObservationModel,
    community_dynamic_graph,
    derive_seed,
    embed_graph_similarity,
    inverse_square_filter,
    lowrank_tensor,
    perturb_graph,
    sample_observations,
    spectral_embedding_factor,
    synthetic_instance,
)
from graphtc.dynamic_graph import DynamicGraph
from graphtc.tensor_algebra import Transform, tubal_rank


# -- community graphs -------------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(m=10, d=3), dict(p_in=0.1, p_out=0.2), dict(p_in=1.2),
                                 dict(periods=10, interval=4), dict(interval=0)])
def test_spec_validation(bad):
    base = dict(m=10, d=5, periods=8, interval=4)
    with pytest.raises(ValueError):
        community_dynamic_graph(CommunityGraphSpec(**{**base, **bad}))


def test_interval_equal_to_periods_is_static():
    g = community_dynamic_graph(CommunityGraphSpec(m=20, d=4, periods=8, interval=8, seed=1))
    for t in range(8):
        assert_array_equal(g.adjacency[:, :, t], g.adjacency[:, :, 0])


def test_blocks_are_constant_and_change():
    g = community_dynamic_graph(CommunityGraphSpec(m=20, d=4, periods=8, interval=2, seed=2))
    for start in range(0, 8, 2):
        assert_array_equal(g.adjacency[:, :, start], g.adjacency[:, :, start + 1])
    assert not np.array_equal(g.adjacency[:, :, 0], g.adjacency[:, :, 2])


def test_disjoint_cliques():
    g, labels = community_dynamic_graph(CommunityGraphSpec(m=12, d=3, p_in=1.0, p_out=0.0, periods=4, interval=2,
                                                          seed=3), return_labels=True)
    for t in range(4):
        same = labels[:, t][:, None] == labels[:, t][None, :]
        assert_array_equal(g.adjacency[:, :, t], same & ~np.eye(12, dtype=bool))
        assert np.bincount(labels[:, t]).tolist() == [4, 4, 4]


def intra_density(seed):
    g, labels = community_dynamic_graph(CommunityGraphSpec(m=50, d=5, periods=4, interval=4, seed=seed),
                                        return_labels=True)
    lab = labels[:, 0]
    same = (lab[:, None] == lab[None, :]) & np.triu(np.ones((50, 50), bool), 1)
    return g.adjacency[:, :, 0][same].sum(), same.sum()


def test_intra_density_matches_p_in():
    for seed in range(20):
        edges, pairs = intra_density(seed)
        assert abs(edges / pairs - 0.7) <= 3 * np.sqrt(0.7 * 0.3 / pairs)
    edges, pairs = np.sum([intra_density(seed) for seed in range(200)], axis=0)
    assert abs(edges / pairs - 0.7) <= 3 * np.sqrt(0.7 * 0.3 / pairs)


def test_community_graph_reproducible():
    spec = CommunityGraphSpec(m=20, d=4, periods=8, interval=4, seed=9)
    assert_array_equal(community_dynamic_graph(spec).adjacency, community_dynamic_graph(spec).adjacency)


# -- low-rank tensors ---------------------------------------------------------------------

def test_lowrank_paper_shape_rank():
    x = lowrank_tensor(50, 50, 64, 5, rng=0)
    assert x.shape == (50, 50, 64)
    assert tubal_rank(x, Transform.dft(64)) == 5


def test_lowrank_full_rank_and_errors():
    assert tubal_rank(lowrank_tensor(4, 3, 2, 3, rng=1), Transform.dft(2)) == 3
    with pytest.raises(ValueError):
        lowrank_tensor(4, 3, 2, 4)


def test_lowrank_deterministic_and_other_transform():
    assert_array_equal(lowrank_tensor(5, 4, 3, 2, rng=7), lowrank_tensor(5, 4, 3, 2, rng=7))
    m = Transform.identity(3)
    x = lowrank_tensor(5, 4, 3, 2, m, rng=7)
    assert all(np.linalg.matrix_rank(x[:, :, t]) == 2 for t in range(3))


# -- spectral embedding ---------------------------------------------------------------------

def test_inverse_square_filter():
    assert_allclose(inverse_square_filter(np.array([0.0, 1e-12, 2.0, 0.5])), [0, 0, 0.25, 4.0])


def test_embedding_without_graphs_is_identity():
    z = np.random.default_rng(0).standard_normal((4, 3, 2))
    assert_allclose(embed_graph_similarity(z, None, None), z)
    empty = DynamicGraph(np.zeros((4, 4, 2)))
    assert_allclose(embed_graph_similarity(z, empty, None), z)


def test_embedding_factor_slice_oracle():
    g = community_dynamic_graph(CommunityGraphSpec(m=10, d=2, periods=2, interval=1, seed=4))
    a = spectral_embedding_factor(g, 10, 2)
    for t in range(2):
        adj = g.adjacency[:, :, t]
        lap = np.diag(adj.sum(1)) - adj
        s, u = np.linalg.eigh(lap)
        keep = s > 1e-10 * s.max()
        # A A^T = U g(S)^2 U^T is basis independent
        expected = (u[:, keep] * s[keep] ** -4) @ u[:, keep].T
        assert_allclose(a[:, :, t] @ a[:, :, t].T, expected, atol=1e-10)


def test_embedding_rank_bound():
    inst = synthetic_instance(20, 15, 4, rank=2, d=5, interval=2, seed=5)
    for t in range(4):
        assert np.linalg.matrix_rank(inst.x[:, :, t]) <= np.linalg.matrix_rank(inst.z[:, :, t])


def generic_spectrum(g):
    # simple nonzero spectrum and a unique largest entry per eigenvector, so the
    # filtered basis is determined (the null space is annihilated by the filter)
    for t in range(g.period_count):
        adj = g.adjacency[:, :, t]
        s, u = np.linalg.eigh(np.diag(adj.sum(1)) - adj)
        keep = s > 1e-8
        s, u = s[keep], u[:, keep]
        if np.min(np.diff(s)) < 1e-6:
            return False
        top = np.sort(np.abs(u), axis=0)
        if np.min(top[-1] - top[-2]) < 1e-6:
            return False
    return True


def test_embedding_commutes_with_relabeling():
    rng = np.random.default_rng(6)
    seed = next(s for s in range(100) if generic_spectrum(
        community_dynamic_graph(CommunityGraphSpec(m=20, d=4, p_in=0.5, p_out=0.1, periods=4, interval=2, seed=s))))
    g = community_dynamic_graph(CommunityGraphSpec(m=20, d=4, p_in=0.5, p_out=0.1, periods=4, interval=2, seed=seed))
    h = community_dynamic_graph(CommunityGraphSpec(m=15, d=5, periods=4, interval=2, seed=7))
    z = rng.standard_normal((20, 15, 4))
    perm = rng.permutation(20)
    gp = DynamicGraph(g.adjacency[np.ix_(perm, perm)])
    x = embed_graph_similarity(z, g, h)
    assert_allclose(embed_graph_similarity(z, gp, h), x[perm], atol=1e-8 * np.abs(x).max())


def test_embedded_tensor_shows_communities():
    inst = synthetic_instance(seed=0)
    s_w = int(np.random.SeedSequence(0).spawn(3)[0].generate_state(1)[0])
    g, labels = community_dynamic_graph(CommunityGraphSpec(50, 5, 0.7, 0.02, 64, 4, s_w), return_labels=True)
    assert np.array_equal(g.adjacency, inst.g_w.adjacency)
    lab = labels[:, 0]

    def ratio(x):
        prof = x[:, :, 0].mean(axis=1)
        groups = [prof[lab == c] for c in range(5)]
        within = np.mean([gr.var() for gr in groups])
        between = np.var([gr.mean() for gr in groups])
        return within / between

    assert ratio(inst.x) < 1.0
    assert ratio(inst.x) < ratio(inst.z)


# -- perturbation ---------------------------------------------------------------------------------

def test_perturb_level_zero_and_bounds():
    g = community_dynamic_graph(CommunityGraphSpec(m=20, d=4, periods=4, interval=2, seed=8))
    assert_array_equal(perturb_graph(g, 0.0, 1).adjacency, g.adjacency)
    with pytest.raises(ValueError):
        perturb_graph(g, 1.5)


@pytest.mark.parametrize("level", [0.2, 0.5, 1.0])
def test_perturb_preserves_counts(level):
    g = community_dynamic_graph(CommunityGraphSpec(m=30, d=3, periods=4, interval=2, seed=9))
    p = perturb_graph(g, level, 2)
    assert_array_equal(p.edge_counts(), g.edge_counts())
    assert np.array_equal(p.adjacency, p.adjacency.transpose(1, 0, 2))


def test_full_perturbation_overlap_is_background():
    g = community_dynamic_graph(CommunityGraphSpec(m=50, d=5, periods=4, interval=4, seed=10))
    p = perturb_graph(g, 1.0, 3)
    iu = np.triu_indices(50, 1)
    orig = g.adjacency[:, :, 0][iu] > 0
    new = p.adjacency[:, :, 0][iu] > 0
    overlap = np.sum(orig & new) / orig.sum()
    # removed edges can be redrawn among all absent pairs
    background = orig.sum() / (iu[0].size - orig.sum() + orig.sum())
    assert abs(overlap - background) <= 4 * np.sqrt(background / orig.sum()) + 0.02


def test_perturb_reproducible():
    g = community_dynamic_graph(CommunityGraphSpec(m=20, d=4, periods=4, interval=2, seed=11))
    assert_array_equal(perturb_graph(g, 0.3, 5).adjacency, perturb_graph(g, 0.3, 5).adjacency)


# -- sampling -----------------------------------------------------------------------------------------

def test_full_noiseless_sample():
    x = np.random.default_rng(0).standard_normal((3, 4, 2))
    s = sample_observations(x, ObservationModel(sample_ratio=1.0))
    assert_allclose(s.train.dense(), x)
    assert not s.test_mask.any()


def test_paper_scale_count_and_metadata():
    x = np.zeros((50, 50, 64))
    s = sample_observations(x, ObservationModel(sample_ratio=0.05, seed=1))
    assert len(s.train) == 8000
    assert s.test_mask.sum() == 160000 - 8000
    assert s.metadata == {"N": 8000, "D": 160000, "d": 6400, "observed": 8000}


def test_noise_variance():
    x = np.zeros((40, 40, 10))
    s = sample_observations(x, ObservationModel(sample_ratio=0.5, sigma=0.1, seed=2))
    assert abs(np.mean(s.train.values ** 2) - 0.01) <= 0.001


def test_sampling_errors_and_determinism():
    x = np.ones((2, 2, 2))
    with pytest.raises(ValueError):
        sample_observations(x, ObservationModel(sample_ratio=0.05))
    with pytest.raises(ValueError):
        sample_observations(x, ObservationModel(sample_ratio=0.0))
    with pytest.raises(ValueError):
        sample_observations(x, ObservationModel(sigma=-1))
    with pytest.raises(ValueError):
        sample_observations(x, ObservationModel(n_samples=9))
    y = np.random.default_rng(3).standard_normal((5, 5, 5))
    a = sample_observations(y, ObservationModel(sample_ratio=0.3, sigma=0.5, seed=4))
    b = sample_observations(y, ObservationModel(sample_ratio=0.3, sigma=0.5, seed=4))
    assert_array_equal(a.train.indices, b.train.indices)
    assert_array_equal(a.train.values, b.train.values)


def test_with_replacement_collapses_duplicates():
    x = np.arange(8.0).reshape(2, 2, 2)
    s = sample_observations(x, ObservationModel(sample_ratio=None, n_samples=100, with_replacement=True, seed=5))
    assert s.n_draws == 100 and len(s.train) == 8
    assert_allclose(s.train.dense(), x)
    noisy = sample_observations(x, ObservationModel(sample_ratio=None, n_samples=4000, sigma=1.0,
                                                    with_replacement=True, seed=6))
    assert np.abs(noisy.train.dense() - x).max() < 0.3


# -- instances -----------------------------------------------------------------------------------------

def test_synthetic_instance_normalization_and_seeds():
    inst = synthetic_instance(20, 10, 8, rank=2, d=5, interval=4, seed=3)
    assert np.abs(inst.x).max() == pytest.approx(1.0)
    raw = synthetic_instance(20, 10, 8, rank=2, d=5, interval=4, seed=3, normalize="none")
    assert_allclose(raw.x * inst.scale, inst.x)
    again = synthetic_instance(20, 10, 8, rank=2, d=5, interval=4, seed=3)
    assert_array_equal(again.x, inst.x)
    other = synthetic_instance(20, 10, 8, rank=2, d=5, interval=4, seed=4)
    assert not np.array_equal(other.x, inst.x)
    with pytest.raises(ValueError):
        synthetic_instance(20, 10, 8, rank=2, d=5, interval=4, normalize="std")


def test_derive_seed():
    assert derive_seed(0b1010, 0b0110) == 0b1100
    assert derive_seed(5, 0) == 5
