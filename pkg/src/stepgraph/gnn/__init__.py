"""Dense GCN with attention readout, analytic gradients and training loop."""
from stepgraph.gnn.adjacency import EmptyGraph, NormalizedAdjacency, normalize_adjacency, normalize_adjacency_edges
from stepgraph.gnn.layers import (
    DimensionMismatch,
    attention_pool,
    degree_pool,
    gcn_forward,
    mean_pool,
    relu,
    sigmoid,
    softmax,
)
from stepgraph.gnn.model import (
    LAYER_TAGS,
    POOLINGS,
    ForwardResult,
    GcnConfig,
    GcnModel,
    NonFiniteLoss,
    cross_entropy,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grads,
    predict,
    save_checkpoint,
)
from stepgraph.gnn.train import Adam, EmptyTrainSet, EpochMetrics, PlateauDecay, Sample, TrainConfig, evaluate, train


def pool_baselines(u, degrees):
    """``(mean_pool(u), degree_pool(u, degrees))``."""
    return mean_pool(u), degree_pool(u, degrees)
