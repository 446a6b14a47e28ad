"""Relation prediction for knowledge graphs.

Scores every relation for an entity pair with a small two-layer network
over concatenated entity embeddings, trains it as a multi-label classifier
on the observed pairs, and evaluates with the Hits@N ranking protocol.
"""

from .errors import ConfigError, NumericError, ParseError, VocabularyError
from .evaluation import (
    MetricsReport,
    evaluate,
    hit_at,
    hits_at_n,
    rank_relations,
    relation_ranks,
    urc_baseline,
    write_metrics,
)
from .kg import (
    DatasetSplits,
    PairLabelIndex,
    Vocabulary,
    build_pair_labels,
    build_vocabulary,
    count_multilabel_pairs,
    index_triples,
    load_dataset,
    parse_triples,
    parse_triples_file,
    read_vocabulary,
    write_vocabulary,
)
from .model import (
    ForwardCache,
    Gradients,
    ModelParams,
    backward,
    bce_loss,
    concat_pair,
    forward,
    init_params,
    l2_penalty,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
)
from .training import (
    AdamState,
    GridPointResult,
    GridSpec,
    Hyperparams,
    TrainHistory,
    fit,
    grid_search,
    init_adam_state,
    load_hyperparams,
    make_batches,
    optimizer_step,
    save_hyperparams,
    train_epoch,
)

__version__ = "0.1.0"
