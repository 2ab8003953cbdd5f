"""Entity ranking and time-interval prediction via greedy probability coalescing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gadgets import GadgetIndex, Gadgets
from .kb import TemporalKB, TimeInterval, Vocabulary
from .scoring import ModelParams, score_all_objects, score_all_times

THRESHOLD_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
DEFAULT_THETA = 0.4


@dataclass(frozen=True)
class LinkQuery:
    """A link-prediction query; `direction` names the missing argument."""

    direction: str  # "object" or "subject"
    entity: int     # the given entity (subject when direction=="object")
    relation: int
    interval: TimeInterval

    def normalized(self, vocab: Vocabulary) -> "LinkQuery":
        """Rewrite subject-missing queries through the inverse relation."""
        if self.direction == "object":
            return self
        return LinkQuery("object", self.entity,
                         vocab.inverse_relation(self.relation), self.interval)


class GadgetScorer:
    """Gadget parameters bound to a train KB, with batched candidate scoring."""

    def __init__(self, kb: TemporalKB, gadgets: Gadgets,
                 index: GadgetIndex | None = None):
        self.kb = kb
        self.gadgets = gadgets
        self.index = index if index is not None else GadgetIndex(kb)

    def object_scores(self, s: int, r: int, t: int,
                      cands: np.ndarray | None = None) -> np.ndarray:
        """kappa*pair + lam*recurrence per candidate object at begin instant t.

        Includes the candidate-independent subject-side pair term so scores
        match the scalar combined-score path.
        """
        g = self.gadgets
        n = self.kb.vocabulary.n_entities
        if cands is None:
            cands = np.arange(n, dtype=np.int64)
        out = np.zeros(cands.shape[0], dtype=np.float64)
        if g.kappa:
            out += g.kappa * self.index.pair_object_scores(g.pair, r, t, cands)
            sub = self.index.pair_subject_scores(
                g.pair, r, t, np.asarray([s], dtype=np.int64))[0]
            out += g.kappa * sub
        if g.lam:
            rec_all = self.index.recurrence_object_scores(g.rec, s, r, t, n)
            out += g.lam * rec_all[cands]
        return out

    def time_scores(self, s: int, r: int, o: int,
                    t_ids: np.ndarray | None = None) -> np.ndarray:
        g = self.gadgets
        if t_ids is None:
            t_ids = np.arange(self.kb.n_instants, dtype=np.int64)
        out = np.zeros(t_ids.shape[0], dtype=np.float64)
        if g.kappa:
            out += g.kappa * self.index.pair_scores_over_times(g.pair, s, r, o, t_ids)
        if g.lam:
            out += g.lam * self.index.recurrence_scores_over_times(g.rec, s, r, o, t_ids)
        return out


def rank_entities(model: ModelParams, gadget_scorer: GadgetScorer | None,
                  query: LinkQuery, kb: TemporalKB | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Order all entities by decreasing combined score for an object query.

    Ties break by ascending entity id.  Returns (ordering, scores-by-id).
    """
    if query.direction != "object":
        raise ValueError("normalize subject queries through LinkQuery.normalized")
    interval = query.interval
    if kb is not None:
        clipped = kb.clip_interval(interval)
        if clipped is None:
            raise ValueError(f"query interval {interval} clips to empty domain")
        interval = clipped
    when = interval if interval.volume() > 1 else interval.begin
    scores = score_all_objects(model, query.entity, query.relation, when)
    if gadget_scorer is not None:
        scores = scores + gadget_scorer.object_scores(
            query.entity, query.relation, interval.begin)
    order = np.argsort(-scores, kind="stable")
    return order, scores


def time_distribution(model: ModelParams, gadget_scorer: GadgetScorer | None,
                      s: int, r: int, o: int) -> np.ndarray:
    """Softmax distribution of combined scores over all instants."""
    scores = score_all_times(model, s, r, o)
    if gadget_scorer is not None:
        scores = scores + gadget_scorer.time_scores(s, r, o)
    shifted = scores - scores.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    return probs


def greedy_coalesce(dist: np.ndarray, theta: float) -> TimeInterval:
    """Grow an interval from the argmax instant until its mass reaches theta.

    Extends toward the higher-probability neighbor (ties extend right); stops
    early only when the interval spans the whole domain.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    lo, hi = _kernels.greedy_coalesce_bounds(dist, float(theta))
    return TimeInterval(int(lo), int(hi))


@dataclass
class ThresholdTable:
    """Per-relation coalescing thresholds with a default for unseen relations."""

    theta: np.ndarray
    default: float = DEFAULT_THETA

    def for_relation(self, r: int) -> float:
        if 0 <= r < self.theta.shape[0]:
            return float(self.theta[r])
        return self.default


def tune_thresholds(model: ModelParams, gadget_scorer: GadgetScorer | None,
                    kb: TemporalKB, fold: str = "valid",
                    metric_name: str = "aeiou",
                    grid: tuple[float, ...] = THRESHOLD_GRID) -> ThresholdTable:
    """Pick, per relation, the grid threshold maximizing the mean interval metric.

    Relations with no bounded-gold facts in the fold inherit the globally best
    threshold; an empty fold yields the fixed default everywhere.
    """
    from .evaluation import INTERVAL_METRICS

    metric = INTERVAL_METRICS[metric_name]
    n_rel = kb.vocabulary.n_relations
    eligible = [f for f in kb.folds[fold] if f.interval.bounded]
    if not eligible:
        return ThresholdTable(theta=np.full(n_rel, DEFAULT_THETA), default=DEFAULT_THETA)
    sums = np.zeros((n_rel, len(grid)))
    counts = np.zeros(n_rel, dtype=np.int64)
    for f in eligible:
        dist = time_distribution(model, gadget_scorer, f.subject, f.relation, f.object)
        counts[f.relation] += 1
        for gi, theta in enumerate(grid):
            pred = greedy_coalesce(dist, theta)
            sums[f.relation, gi] += metric(f.interval, pred)
    global_best = float(grid[int(np.argmax(sums.sum(axis=0)))])
    theta = np.full(n_rel, global_best)
    for r in range(n_rel):
        if counts[r] > 0:
            theta[r] = grid[int(np.argmax(sums[r]))]
    return ThresholdTable(theta=theta, default=global_best)


def predict_interval(model: ModelParams, gadget_scorer: GadgetScorer | None,
                     s: int, r: int, o: int, thresholds: ThresholdTable,
                     kb: TemporalKB | None = None) -> TimeInterval:
    """Greedy-coalesced interval for a (s, r, o, ?) query."""
    dist = time_distribution(model, gadget_scorer, s, r, o)
    return greedy_coalesce(dist, thresholds.for_relation(r))
