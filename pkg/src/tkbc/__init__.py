"""Temporal knowledge base completion with complex embeddings and time-gap gadgets."""

from .kb import (DatasetConfig, Fact, KbError, NEG_UNBOUNDED, POS_UNBOUNDED,
                 TemporalKB, TimeInterval, Vocabulary, add_inverse_facts,
                 enumerate_instant_facts, interval_hull, interval_intersection,
                 interval_union_volume, interval_volume, load_dataset,
                 parse_dataset, sample_instant, write_dataset)
from .scoring import (ComplexVector, ModelParams, score_all_objects,
                      score_all_subjects, score_all_times, score_cx,
                      score_tx_instant, score_tx_interval, three_way_product)
from .gadgets import (GadgetIndex, Gadgets, GadgetStats, OrderingConstraint,
                      PairParams, RecurrenceParams, closest_recurrence_gap,
                      detect_recurrent_relations, fit_pair_statistics,
                      gaussian_density, mine_ordering_constraints, score_pair,
                      score_recurrence, score_timeplex)
from .training import (TrainingConfig, adagrad_step, l2_batch_regularizer,
                       loss_instant_batch, temporal_smoothing_penalty,
                       train_phase1, train_phase2)
from .inference import (GadgetScorer, LinkQuery, ThresholdTable, greedy_coalesce,
                        predict_interval, rank_entities, time_distribution,
                        tune_thresholds)
from .evaluation import (FilterIndex, aggregate_link_metrics,
                         embedding_distance_curve, evaluate_link_fold,
                         evaluate_time_fold, metric_aeiou, metric_giou,
                         metric_giou_prime, metric_iou, metric_tac,
                         ordering_violation_rate, rank_exact_match,
                         rank_time_aware, rank_time_insensitive,
                         rank_unfiltered, verify_property_p)
from .persistence import (IncompatibleModelError, ModelBundle, load_model,
                          save_model)

__version__ = "0.1.0"
