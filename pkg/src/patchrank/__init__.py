"""patchrank: two-stage content-based image retrieval over stored feature maps.

Stage 1 ranks documents by cosine similarity of pooled global descriptors;
stage 2 re-ranks the top K by patch-level matching and fuses the two
scores. Metric-learning and fusion trainers plus an mAP@k harness round
out the pipeline. See demos/ for narrative walkthroughs of each piece.
"""

from . import errors
from .evaluation import EvalReport, average_precision_at_k, evaluate
from .feature_model import (
    FeatureMap,
    GlobalDescriptor,
    PatchSet,
    average_pool,
    extract_patches,
    l2_normalize,
)
from .feature_store import (
    DescriptorStore,
    ManifestEntry,
    build_store,
    load_manifest,
    read_feature_file,
    read_store,
    write_feature_file,
    write_manifest,
    write_store,
)
from .fusion import FusionModel, LinearFusion, MlpFusion, fuse, load_fusion, save_fusion, train_fusion
from .global_search import RankedList, cosine_similarity, top_k
from .local_rerank import ScoredPair, local_score, rerank, score_candidates
from .metric_head import (
    ProjectionHead,
    TrainerConfig,
    batch_sampler,
    contrastive_loss,
    identity_head,
    load_head,
    mine_pairs,
    project,
    save_head,
    train_head,
)
from .synth import SynthConfig, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "errors",
    "FeatureMap",
    "GlobalDescriptor",
    "PatchSet",
    "average_pool",
    "extract_patches",
    "l2_normalize",
    "DescriptorStore",
    "ManifestEntry",
    "build_store",
    "load_manifest",
    "read_feature_file",
    "read_store",
    "write_feature_file",
    "write_manifest",
    "write_store",
    "RankedList",
    "cosine_similarity",
    "top_k",
    "ScoredPair",
    "local_score",
    "rerank",
    "score_candidates",
    "ProjectionHead",
    "TrainerConfig",
    "batch_sampler",
    "contrastive_loss",
    "identity_head",
    "load_head",
    "mine_pairs",
    "project",
    "save_head",
    "train_head",
    "FusionModel",
    "LinearFusion",
    "MlpFusion",
    "fuse",
    "load_fusion",
    "save_fusion",
    "train_fusion",
    "EvalReport",
    "average_precision_at_k",
    "evaluate",
    "SynthConfig",
    "generate_dataset",
]
