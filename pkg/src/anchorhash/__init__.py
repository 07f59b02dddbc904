"""Cross-modal hashing over fused anchor graphs.

Per-modality anchor graphs are fused entrywise, a unified graph with
explicit cluster structure is learned by alternating optimization, and
every instance receives a binary code usable for Hamming-space retrieval
across modalities.
"""

from .anchor_graph import (
    AnchorGraph,
    build_anchor_graph,
    fuse_graphs,
    initial_laplacian_embedding,
)
from .dataset import (
    AnchorSet,
    Dataset,
    FeatureMatrix,
    Split,
    load_features,
    load_labels,
    load_split,
    sample_anchors,
    save_features,
    save_labels,
    save_split,
    synth_multimodal,
)
from .errors import ConfigError, DataFormatError, NumericError
from .retrieval import (
    CodeIndex,
    RetrievalReport,
    cross_modal_evaluate,
    encode,
    evaluate,
    hamming_rank,
    load_codes,
    save_codes,
)
from .simplex_opt import ColumnQP, column_qp, ogm_solve, project_simplex, warm_start
from .spectral import SpectralState, count_components
from .training import (
    HashModel,
    Hyperparams,
    TrainTrace,
    load_model,
    objective,
    save_model,
    train,
)

__all__ = [
    "AnchorGraph",
    "AnchorSet",
    "CodeIndex",
    "ColumnQP",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "FeatureMatrix",
    "HashModel",
    "Hyperparams",
    "NumericError",
    "RetrievalReport",
    "SpectralState",
    "Split",
    "TrainTrace",
    "build_anchor_graph",
    "column_qp",
    "count_components",
    "cross_modal_evaluate",
    "encode",
    "evaluate",
    "fuse_graphs",
    "hamming_rank",
    "initial_laplacian_embedding",
    "load_codes",
    "load_features",
    "load_labels",
    "load_model",
    "load_split",
    "objective",
    "ogm_solve",
    "project_simplex",
    "sample_anchors",
    "save_codes",
    "save_features",
    "save_labels",
    "save_model",
    "save_split",
    "synth_multimodal",
    "train",
    "warm_start",
]

__version__ = "0.1.0"
