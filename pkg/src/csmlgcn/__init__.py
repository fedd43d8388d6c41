"""Query-driven multiplex graph convolutional networks for community search."""

from .bench import SynthSpec, gen_synthetic, make_splits, run_ablation, run_eval
from .config import TrainConfig
from .estimator import CommunitySearchGCN
from .graph import (
    MultiplexGraph,
    degree_norm,
    encode_query,
    khop_subgraph,
    load_multiplex,
    node_features,
    write_multiplex,
)
from .metrics import f1_score
from .model import ModelParams, init_params, load_checkpoint, save_checkpoint
from .query import Community, batch_query, extract_community, identify_community, infer_scores
from .trainer import TrainingRecord, train

__version__ = "0.1.0"
