"""Self-supervised graph node embeddings via group discrimination.

Train a siamese GCN encoder to tell real topology from corrupted topology
with a single binary cross-entropy over per-node scalar logits, then
reinforce the frozen embeddings with n rounds of normalized-adjacency
propagation. Per-epoch cost is linear in the node count.
"""

from .discriminate import (AGGREGATIONS, TrainConfig, TrainTrace, aggregate,
                           gd_loss, train, train_dgi_constant_summary)
from .encoder import (EncoderParams, encode_forward, init_params,
                      load_checkpoint, save_checkpoint)
from .errors import (ConfigError, CorruptionError, GgdError, GraphError,
                     IdRangeError, NumericError, ParseError, ShapeError)
from .graph_store import (CsrGraph, LabeledSplit, add_self_loops, build_csr,
                          load_edge_list, load_features, load_labels,
                          row_normalize, save_edge_list, save_features,
                          save_labels, sym_normalize)
from .inference import (EmbeddingSet, embed, encode_frozen, graph_power,
                        load_embeddings, reinforce, save_embeddings)
from .perturb import drop_edges, drop_feature_dims, shuffle_features
from .probe import (ProbeConfig, SummaryStats, logistic_probe, sbm_generate,
                    summary_stats)
from .sampler import BlockStack, minibatch_train, sample_blocks
from .tensor_ops import RngState

__version__ = "0.1.0"

__all__ = [
    "AGGREGATIONS", "TrainConfig", "TrainTrace", "aggregate", "gd_loss",
    "train", "train_dgi_constant_summary", "EncoderParams", "encode_forward",
    "init_params", "load_checkpoint", "save_checkpoint", "GgdError",
    "ConfigError", "CorruptionError", "GraphError", "IdRangeError",
    "NumericError", "ParseError", "ShapeError", "CsrGraph", "LabeledSplit",
    "add_self_loops", "build_csr", "load_edge_list", "load_features",
    "load_labels", "row_normalize", "save_edge_list", "save_features",
    "save_labels", "sym_normalize", "EmbeddingSet", "embed", "encode_frozen",
    "graph_power", "load_embeddings", "reinforce", "save_embeddings",
    "drop_edges", "drop_feature_dims", "shuffle_features", "ProbeConfig",
    "SummaryStats", "logistic_probe", "sbm_generate", "summary_stats",
    "BlockStack", "minibatch_train", "sample_blocks", "RngState",
    "__version__",
]
