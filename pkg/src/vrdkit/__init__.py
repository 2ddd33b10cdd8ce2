"""Visual relationship detection toolkit.

Scores (subject, predicate, object) triples over pairs of localized
objects by fusing a word-vector language prior with a pluggable visual
module and a pairwise spatial encoding, and evaluates predictions with
the standard Recall@n protocol (predicate prediction, phrase detection,
relationship detection, plus zero-shot splits).
"""

from .corpus import (
    CorpusError,
    ImageRecord,
    ObjectInstance,
    RelationshipTriple,
    TripleKey,
    Vocabulary,
    candidate_pairs,
    parse_corpus,
    parse_vrd_annotations,
    serialize_corpus,
    triple_key_stats,
    zero_shot_filter,
)
from .embeddings import (
    EmbeddingFormatError,
    EmbeddingStore,
    cosine_similarity,
    load_embeddings,
)
from .evaluation import (
    PredictedRelationship,
    RecallReport,
    evaluate_grid,
    format_recall_table,
    generate_predictions,
    match_phrase,
    match_predicate_prediction,
    match_relationship,
    recall_at_n,
)
from .features import (
    FeatureFormatError,
    FeatureProvider,
    FileFeatureProvider,
    SyntheticFeatureProvider,
    quantize_box,
)
from .geometry import (
    SF_DIM,
    SPATIAL_DIM,
    BoundingBox,
    ImageDims,
    SpatialVector,
    contains,
    iou,
    sf_vector,
    spatial_vector,
    union_box,
)
from .models import (
    ALL_VARIANTS,
    LinearLayer,
    ModelConfig,
    PredicateModel,
    PredicateScores,
    fuse,
    language_forward,
    load_checkpoint,
    parameter_checksum,
    predict_topk,
    save_checkpoint,
    softmax,
    stable_softmax,
    visual_forward,
)
from .training import (
    TrainConfig,
    TrainReport,
    build_training_set,
    train_joint,
    train_joint_from,
    train_module,
    xent_loss_grad,
)

__version__ = "0.1.0"
