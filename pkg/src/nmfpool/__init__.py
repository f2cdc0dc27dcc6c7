"""Graph convolutional networks with NMF-based node pooling."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    DatasetBundle,
    DatasetError,
    FoldPlan,
    dataset_stats,
    parse_tu_dataset,
    pool_sizes,
    published_pool_sizes,
    stratified_folds,
    write_tu_dataset,
)
from .graph import FeatureSpec, Graph, adjacency, make_graph, node_features, normalize_adjacency  # noqa: E402
from .layers import coarsen, nmfpool_backward, nmfpool_forward, scaled_laplacian  # noqa: E402
from .model import (  # noqa: E402
    LayerStack,
    ModelConfig,
    TrainReport,
    build_model,
    cross_validate,
    forward_graph,
    gradcheck_model,
    train_fold,
)
from .nmf import NmfConfig, NmfFactors, factorize, multiplicative_step, nmf_objective  # noqa: E402
