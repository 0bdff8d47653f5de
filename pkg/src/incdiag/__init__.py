"""Class-incremental fault diagnosis on imbalanced sensor data.

A contrastive-replay pipeline: a small trainable feature extractor learns
unit-norm embeddings with a supervised contrastive objective plus
feature-space distillation from the previous session's frozen extractor; a
capacity-limited buffer replays prioritized boundary exemplars; a balanced
random forest classifies in embedding space to counter class imbalance.
"""

__version__ = "0.1.0"

from .datasets import (LabeledDataset, Sample, ScenarioConfig, SessionPlan,
                       augment_segment_shuffle, build_scenario, load_csv_dataset,
                       make_augmented_batch, scenario_preset, synth_fault_stream,
                       synth_gaussian_stream)
from .encoder import (EncoderConfig, EncoderParams, encode, encode_batch,
                      init_encoder, snapshot_teacher)
from .errors import ConfigError, DataError, NumericalError
from .losses import (ContrastiveBatch, LossConfig, distillation_loss, encoder_loss,
                     similarity_distribution, supervised_contrastive_loss)
from .memory import (ExemplarSet, MemoryBuffer, class_mean, construct_buffer,
                     per_class_quota, reduce_exemplar_sets, select_exemplars_herding,
                     select_exemplars_marginal, select_exemplars_mixed,
                     select_exemplars_random)
from .classifier import (BalancedForest, FCClassifier, balanced_bootstrap, brf_fit,
                         brf_predict, cart_grow, fcc_fit, fcc_predict)
from .session import (SessionReport, SessionState, TrainConfig, aggregate_metrics,
                      run_experiment, run_incremental_session,
                      train_classifier_and_classify, update_feature_extractor)

__all__ = [
    "__version__",
    "BalancedForest", "ConfigError", "ContrastiveBatch", "DataError", "EncoderConfig",
    "EncoderParams", "ExemplarSet", "FCClassifier", "LabeledDataset", "LossConfig",
    "MemoryBuffer", "NumericalError", "Sample", "ScenarioConfig", "SessionPlan",
    "SessionReport", "SessionState", "TrainConfig",
    "aggregate_metrics", "augment_segment_shuffle", "balanced_bootstrap", "brf_fit",
    "brf_predict", "build_scenario", "cart_grow", "class_mean", "construct_buffer",
    "distillation_loss", "encode", "encode_batch", "encoder_loss", "fcc_fit",
    "fcc_predict", "init_encoder", "load_csv_dataset", "make_augmented_batch",
    "per_class_quota", "reduce_exemplar_sets", "run_experiment",
    "run_incremental_session", "scenario_preset", "select_exemplars_herding",
    "select_exemplars_marginal", "select_exemplars_mixed", "select_exemplars_random",
    "similarity_distribution", "snapshot_teacher", "supervised_contrastive_loss",
    "synth_fault_stream", "synth_gaussian_stream", "train_classifier_and_classify",
    "update_feature_extractor",
]
