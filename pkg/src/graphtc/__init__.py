"""Graph-regularized low-tubal-rank tensor completion on dynamic graphs."""
from .tensor_algebra import (
    Transform, t_product, star_product, conj_transpose, identity_tensor, t_svd,
    tubal_rank, tensor_spectral_norm, tensor_nuclear_norm, fro_norm, inf_norm, inner,
)
from .dynamic_graph import (
    DynamicGraph, HierarchicalMultigraph, LaplacianTensor, from_edge_events, static_graph,
    aggregate, laplacian_tensor, smoothness_analytic, smoothness_combinatorial, knn_similarity_graph,
)
from .solver import ObservedTensor, SolverConfig, Diagnostics, SolverError, CGNotConverged, solve
from .datagen import (
    CommunityGraphSpec, ObservationModel, community_dynamic_graph, lowrank_tensor,
    embed_graph_similarity, perturb_graph, sample_observations,
)

__version__ = "0.1.0"
