"""Link-prediction filtering, ranking metrics, interval metrics and diagnostics.

Three ranking filters are provided: unfiltered, time-insensitive (drop every
above-gold entity ever seen with the query subject and relation) and
time-aware (filter per instant of the query interval and average the
per-instant ranks).  An exact-interval-match filter covers the stricter
protocol variant.  Interval predictions are scored with IOU, gIOU, its [0,1]
rescaling, an affinity-enhanced IOU and the endpoint-proximity TAC score.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .kb import (NEG_UNBOUNDED, POS_UNBOUNDED, TemporalKB, TimeInterval,
                 interval_hull, interval_intersection, interval_union_volume)


class EvaluationError(ValueError):
    pass


# --- filtering index ------------------------------------------------------------


class FilterIndex:
    """Membership oracle over all folds for rank filtering.

    Queries posed through an inverse relation are normalized to the base
    orientation, so the index answers both directions.
    """

    def __init__(self, kb: TemporalKB):
        self._vocab = kb.vocabulary
        self._groups: dict[tuple[int, int], dict[int, list[tuple[int, int]]]] = \
            defaultdict(lambda: defaultdict(list))
        self._exact: set[tuple[int, int, int, int, int]] = set()
        for fold in ("train", "valid", "test"):
            for f in kb.folds[fold]:
                s, r, o = self._norm(f.subject, f.relation, f.object)
                span = (f.interval.begin, f.interval.end)
                self._groups[(s, r)][o].append(span)
                self._exact.add((s, r, o, *span))
        self._groups = {k: dict(v) for k, v in self._groups.items()}

    def _norm(self, s: int, r: int, o: int) -> tuple[int, int, int]:
        if self._vocab.has_inverses and r >= self._vocab.n_base_relations:
            return o, r - self._vocab.n_base_relations, s
        return s, r, o

    def seen_any(self, s: int, r: int, e: int) -> bool:
        s, r, e = self._norm(s, r, e)
        return e in self._groups.get((s, r), ())

    def seen_at(self, s: int, r: int, e: int, t: int) -> bool:
        s, r, e = self._norm(s, r, e)
        spans = self._groups.get((s, r), {}).get(e, ())
        return any(b <= t <= end for b, end in spans)

    def seen_exact(self, s: int, r: int, e: int, interval: TimeInterval) -> bool:
        s, r, e = self._norm(s, r, e)
        return (s, r, e, interval.begin, interval.end) in self._exact

    def spans(self, s: int, r: int, e: int) -> list[tuple[int, int]]:
        s, r, e = self._norm(s, r, e)
        return self._groups.get((s, r), {}).get(e, [])


# --- rank computation -----------------------------------------------------------


def _gold_position(ranking: Sequence[int], gold: int) -> int:
    ranking = np.asarray(ranking)
    pos = np.flatnonzero(ranking == gold)
    if pos.size == 0:
        raise EvaluationError(f"gold entity {gold} absent from ranking")
    return int(pos[0])


def rank_unfiltered(ranking: Sequence[int], gold: int) -> int:
    """One plus the number of entities ranked above the gold answer."""
    return _gold_position(ranking, gold) + 1


def rank_time_insensitive(ranking: Sequence[int], gold: int, index: FilterIndex,
                          subject: int, relation: int) -> int:
    """Filter every above-gold entity seen with (subject, relation) in any fold."""
    pos = _gold_position(ranking, gold)
    above = np.asarray(ranking)[:pos]
    filtered = sum(1 for e in above if index.seen_any(subject, relation, int(e)))
    return 1 + pos - filtered


def rank_time_aware(ranking: Sequence[int], gold: int, index: FilterIndex,
                    subject: int, relation: int, interval: TimeInterval) -> float:
    """Average, over the query instants, of per-instant filtered ranks.

    At instant t an above-gold entity is filtered iff it is asserted with
    (subject, relation) for an interval containing t.  The mean rank is real
    valued and feeds MRR/HITS via real comparison.
    """
    if not interval.bounded:
        raise EvaluationError("query interval must be bounded (clip before ranking)")
    pos = _gold_position(ranking, gold)
    above = np.asarray(ranking)[:pos]
    indptr = np.zeros(pos + 1, dtype=np.int64)
    begins: list[int] = []
    ends: list[int] = []
    for i, e in enumerate(above):
        spans = index.spans(subject, relation, int(e))
        for b, end in spans:
            begins.append(b)
            ends.append(end)
        indptr[i + 1] = len(begins)
    return float(_kernels.time_aware_rank(
        indptr,
        np.asarray(begins, dtype=np.int64),
        np.asarray(ends, dtype=np.int64),
        interval.begin, interval.end,
    ))


def rank_exact_match(ranking: Sequence[int], gold: int, index: FilterIndex,
                     subject: int, relation: int, interval: TimeInterval) -> int:
    """Filter above-gold entities asserted with exactly the query interval."""
    pos = _gold_position(ranking, gold)
    above = np.asarray(ranking)[:pos]
    filtered = sum(1 for e in above
                   if index.seen_exact(subject, relation, int(e), interval))
    return 1 + pos - filtered


def aggregate_link_metrics(ranks: Iterable[float]) -> dict[str, float]:
    """MRR and HITS@{1,10} over (possibly real-valued) ranks."""
    arr = np.asarray(list(ranks), dtype=np.float64)
    if arr.size == 0:
        raise EvaluationError("no ranks to aggregate")
    return {
        "mrr": float(np.mean(1.0 / arr)),
        "hits@1": float(np.mean(arr <= 1.0)),
        "hits@10": float(np.mean(arr <= 10.0)),
    }


# --- interval metrics -----------------------------------------------------------


def _require_bounded(*intervals: TimeInterval) -> None:
    for iv in intervals:
        if not iv.bounded:
            raise EvaluationError(f"interval metric needs bounded intervals, got {iv}")


def metric_iou(gold: TimeInterval, pred: TimeInterval) -> float:
    """Discrete intersection over union; 0 whenever the intervals are disjoint."""
    _require_bounded(gold, pred)
    inter = interval_intersection(gold, pred)
    shared = inter.volume() if inter is not None else 0
    return shared / interval_union_volume(gold, pred)


def metric_giou(gold: TimeInterval, pred: TimeInterval) -> float:
    """IOU minus the fraction of the hull not covered by either interval."""
    _require_bounded(gold, pred)
    hull = interval_hull(gold, pred).volume()
    union = interval_union_volume(gold, pred)
    return metric_iou(gold, pred) - (hull - union) / hull


def metric_giou_prime(gold: TimeInterval, pred: TimeInterval) -> float:
    """gIOU rescaled from (-1, 1] to (0, 1]."""
    return (metric_giou(gold, pred) + 1.0) / 2.0


def metric_aeiou(gold: TimeInterval, pred: TimeInterval) -> float:
    """Affinity-enhanced IOU: max(1, vol(intersection)) / vol(hull).

    Strictly positive, and strictly decreasing in the hull volume whenever the
    intersection volume is held fixed.
    """
    _require_bounded(gold, pred)
    inter = interval_intersection(gold, pred)
    shared = inter.volume() if inter is not None else 0
    return max(1, shared) / interval_hull(gold, pred).volume()


def metric_tac(gold: TimeInterval, pred: TimeInterval) -> float:
    """Mean reciprocal endpoint distance between gold and predicted bounds."""
    _require_bounded(gold, pred)
    return 0.5 * (1.0 / (1.0 + abs(gold.begin - pred.begin))
                  + 1.0 / (1.0 + abs(gold.end - pred.end)))


INTERVAL_METRICS: dict[str, Callable[[TimeInterval, TimeInterval], float]] = {
    "iou": metric_iou,
    "giou": metric_giou,
    "giou_prime": metric_giou_prime,
    "aeiou": metric_aeiou,
    "tac": metric_tac,
}


def verify_property_p(metric: Callable[[TimeInterval, TimeInterval], float],
                      n: int) -> list[tuple]:
    """Exhaustively check the smaller-hull-scores-higher property on [1, n].

    For every gold interval and every prediction pair with equal intersection
    volume, the metric must rank the smaller-hull prediction strictly higher
    (and tie exactly when hulls tie).  Returns the violating triples.
    """
    if n > 25:
        raise EvaluationError("exhaustive check limited to n <= 25")
    spans = [(a, b) for a in range(1, n + 1) for b in range(a, n + 1)]
    k = len(spans)
    begins = np.array([s[0] for s in spans])
    ends = np.array([s[1] for s in spans])
    inter = (np.minimum(ends[:, None], ends[None, :])
             - np.maximum(begins[:, None], begins[None, :]) + 1).clip(min=0)
    hull = (np.maximum(ends[:, None], ends[None, :])
            - np.minimum(begins[:, None], begins[None, :]) + 1)
    scores = np.empty((k, k))
    for i, (a, b) in enumerate(spans):
        gold = TimeInterval(a, b)
        for j, (c, d) in enumerate(spans):
            scores[i, j] = metric(gold, TimeInterval(c, d))
    violations = []
    for i in range(k):
        m = scores[i]
        iv = inter[i]
        hv = hull[i]
        same_inter = iv[:, None] == iv[None, :]
        upper = np.triu(np.ones((k, k), dtype=bool), 1)
        cand = same_inter & upper
        ok = np.sign(m[:, None] - m[None, :]) == np.sign(hv[None, :] - hv[:, None])
        bad = cand & ~ok
        for p1, p2 in zip(*np.nonzero(bad)):
            violations.append((spans[i], spans[p1], spans[p2],
                               float(m[p1]), float(m[p2]),
                               int(hv[p1]), int(hv[p2])))
    return violations


# --- model diagnostics ----------------------------------------------------------


def ordering_violation_rate(model, gadget_scorer, queries, constraints,
                            kb: TemporalKB) -> float:
    """Fraction of queries whose top-1 prediction breaks a mined time ordering.

    For a query at time t with relation r-late, predicting an entity whose
    known r-early fact begins after t is a violation (and symmetrically for
    r-early queries against known r-late facts).
    """
    from .inference import rank_entities

    if not queries:
        raise EvaluationError("no queries supplied")
    earlier_of: dict[int, list[int]] = defaultdict(list)
    later_of: dict[int, list[int]] = defaultdict(list)
    for c in constraints:
        earlier_of[c.later].append(c.earlier)
        later_of[c.earlier].append(c.later)
    by_subject = kb.by_subject()
    vocab = kb.vocabulary
    violations = 0
    for query in queries:
        order, _ = rank_entities(model, gadget_scorer, query, kb=kb)
        top = int(order[0])
        qt = query.interval.begin
        if qt == NEG_UNBOUNDED:
            continue
        # the predicted entity is the subject of the hypothesized fact once
        # the (e, q_rel, top) orientation is flipped
        rel_s = (vocab.inverse_relation(query.relation) if vocab.has_inverses
                 else query.relation)
        known = by_subject.get(top, ())
        bad = False
        for f in known:
            tb = f.interval.begin
            if tb == NEG_UNBOUNDED:
                continue
            if f.relation in earlier_of.get(rel_s, ()) and tb > qt:
                bad = True
                break
            if f.relation in later_of.get(rel_s, ()) and tb < qt:
                bad = True
                break
        violations += bad
    return violations / len(queries)


def embedding_distance_curve(model, gaps: Iterable[int] | None = None,
                             min_support: int = 30,
                             instant_range: tuple[int, int] | None = None
                             ) -> list[tuple[int, float, int]]:
    """Mean L2 distance between instant embeddings at each time gap.

    Returns (gap, mean_distance, support) rows, dropping gaps whose pair count
    falls below min_support.
    """
    re = model.time_re
    im = model.time_im
    if instant_range is not None:
        lo, hi = instant_range
        re = re[lo:hi + 1]
        im = im[lo:hi + 1]
    n = re.shape[0]
    if gaps is None:
        gaps = range(1, n)
    rows = []
    for g in gaps:
        support = n - g
        if g <= 0 or support < min_support:
            continue
        dre = re[g:] - re[:-g]
        dim_ = im[g:] - im[:-g]
        dist = np.sqrt((dre ** 2).sum(axis=1) + (dim_ ** 2).sum(axis=1))
        rows.append((int(g), float(dist.mean()), int(support)))
    return rows


# --- fold-level evaluation drivers ----------------------------------------------

FILTER_METHODS = ("unfiltered", "time-insensitive", "time-aware", "exact")


@dataclass
class RankReport:
    subject: int
    relation: int
    gold: int
    direction: str
    rank: float


def evaluate_link_fold(model, kb: TemporalKB, fold: str = "test",
                       method: str = "time-aware", gadget_scorer=None,
                       directions: tuple[str, ...] = ("object", "subject"),
                       index: FilterIndex | None = None,
                       max_queries: int | None = None) -> tuple[list[RankReport], dict]:
    """Rank every fold fact in the requested directions under one filter."""
    from .inference import LinkQuery, rank_entities

    if method not in FILTER_METHODS:
        raise EvaluationError(f"unknown filter method {method!r}")
    if not kb.folds[fold]:
        raise EvaluationError(f"fold {fold!r} is empty")
    if index is None:
        index = FilterIndex(kb)
    reports = []
    facts = kb.folds[fold][:max_queries] if max_queries else kb.folds[fold]
    for f in facts:
        clipped = kb.clip_interval(f.interval)
        if clipped is None:
            continue
        for direction in directions:
            if direction == "object":
                query = LinkQuery("object", f.subject, f.relation, clipped)
                gold = f.object
            else:
                query = LinkQuery("subject", f.object, f.relation, clipped)
                gold = f.subject
            normalized = query.normalized(kb.vocabulary)
            order, _ = rank_entities(model, gadget_scorer, normalized, kb=kb)
            s, r = normalized.entity, normalized.relation
            if method == "unfiltered":
                rank = rank_unfiltered(order, gold)
            elif method == "time-insensitive":
                rank = rank_time_insensitive(order, gold, index, s, r)
            elif method == "time-aware":
                rank = rank_time_aware(order, gold, index, s, r, clipped)
            else:
                rank = rank_exact_match(order, gold, index, s, r, clipped)
            reports.append(RankReport(subject=s, relation=r, gold=gold,
                                      direction=direction, rank=float(rank)))
    summary = aggregate_link_metrics(r.rank for r in reports)
    summary["queries"] = len(reports)
    summary["filter"] = method
    return reports, summary


@dataclass
class IntervalReport:
    subject: int
    relation: int
    object: int
    gold: tuple[int, int]
    predicted: tuple[int, int]
    metrics: dict[str, float]


def evaluate_time_fold(model, kb: TemporalKB, thresholds, fold: str = "test",
                       gadget_scorer=None,
                       metrics: Sequence[str] = ("iou", "giou", "giou_prime", "aeiou", "tac"),
                       max_queries: int | None = None) -> tuple[list[IntervalReport], dict]:
    """Predict an interval per bounded-gold fold fact and score it.

    Facts with an unbounded endpoint are excluded, matching the link between
    bounded gold spans and interval metrics.
    """
    from .inference import predict_interval

    eligible = [f for f in kb.folds[fold] if f.interval.bounded]
    if max_queries:
        eligible = eligible[:max_queries]
    if not eligible:
        raise EvaluationError(f"fold {fold!r} has no bounded-interval facts")
    reports = []
    for f in eligible:
        pred = predict_interval(model, gadget_scorer, f.subject, f.relation,
                                f.object, thresholds, kb=kb)
        values = {name: INTERVAL_METRICS[name](f.interval, pred) for name in metrics}
        reports.append(IntervalReport(
            subject=f.subject, relation=f.relation, object=f.object,
            gold=(f.interval.begin, f.interval.end),
            predicted=(pred.begin, pred.end), metrics=values))
    summary = {name: float(np.mean([r.metrics[name] for r in reports]))
               for name in metrics}
    summary["queries"] = len(reports)
    return reports, summary
