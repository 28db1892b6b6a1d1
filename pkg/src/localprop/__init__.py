"""Graph-based local propagation for few-shot classification."""

from .attention import local_spatial_pool, spatial_attention
from .baselines import (
    ClassBank,
    cosine_classify,
    gap_proto_predict,
    local_match_predict,
    matching_predict,
    nbnn_predict,
    nbnn_score,
    prototypes,
)
from .core import Episode, FeatureTensor, MethodConfig, Predictions, cosine, predict, softmax
from .evaluation import EvalReport, evaluate, run_method, sample_episode, sweep
from .graph import Graph, build_graph, pair_similarity
from .io import FeatureStore, FormatError, read_store, synth_generate, write_store
from .pooling import PooledImage, feature_pool, global_average_pool
from .propagation import (
    NodeLayout,
    SolverError,
    build_label_matrix,
    feature_propagate,
    infer_queries,
    label_propagate,
    local_propagation_predict,
    propagate,
)

__version__ = "0.1.0"
