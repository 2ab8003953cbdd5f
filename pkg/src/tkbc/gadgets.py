"""Gaussian time-gap features: relation recurrence and relation-pair scores.

Both gadgets reduce facts to their begin instant.  Gap distributions (mu,
sigma) are fitted from the train fold and frozen; weights and biases are the
trainable part.  Fitted and trained standard deviations are floored at one
granularity unit so the density never diverges.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .kb import NEG_UNBOUNDED, Fact, TemporalKB, TimeInterval

SIGMA_FLOOR = 1.0

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gaussian_density(x, mu: float, sigma: float):
    """Gaussian pdf value(s) at x for mean mu and standard deviation sigma."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    out = _INV_SQRT_2PI / sigma * np.exp(-0.5 * ((x - mu) / sigma) ** 2)
    return float(out) if out.ndim == 0 else out


def _begin_instant(when: int | TimeInterval, n_instants: int) -> int:
    """Begin time of a query, clipped into the instant domain."""
    t = when.begin if isinstance(when, TimeInterval) else int(when)
    return min(max(t, 0), n_instants - 1)


def _group_begin_times(kb: TemporalKB) -> dict[tuple[int, int, int], list[int]]:
    """Bounded begin instants of train facts grouped by (s, r, o)."""
    groups: dict = defaultdict(list)
    for f in kb.train:
        if f.interval.begin != NEG_UNBOUNDED:
            groups[(f.subject, f.relation, f.object)].append(f.interval.begin)
    return groups


def detect_recurrent_relations(kb: TemporalKB, k_rec: int = 1) -> set[int]:
    """Relations for which at least k_rec (s, o) pairs have two distinct begin times."""
    pair_count: dict[int, int] = defaultdict(int)
    for (s, r, o), times in _group_begin_times(kb).items():
        if len(set(times)) >= 2:
            pair_count[r] += 1
    return {r for r, c in pair_count.items() if c >= k_rec}


def closest_recurrence_gap(kb: TemporalKB, s: int, r: int, o: int, t: int) -> int | None:
    """Minimum |t - t'| over train begin times t' != t of (s, r, o); None if absent."""
    times = [iv.begin for iv in kb.by_sro().get((s, r, o), ())
             if iv.begin != NEG_UNBOUNDED]
    gaps = [abs(t - t2) for t2 in times if t2 != t]
    return min(gaps) if gaps else None


@dataclass
class RecurrenceParams:
    """Per-relation recurrence gadget parameters.

    mu/sigma are fitted gap statistics (only meaningful for recurrent
    relations); b and w are trained.  Non-recurrent relations use b alone.
    """

    mu: np.ndarray
    sigma: np.ndarray
    b: np.ndarray
    w: np.ndarray
    recurrent: np.ndarray  # bool per relation

    @classmethod
    def fit(cls, kb: TemporalKB, k_rec: int = 1) -> "RecurrenceParams":
        n_rel = kb.vocabulary.n_relations
        recurrent_ids = detect_recurrent_relations(kb, k_rec)
        gaps: dict[int, list[int]] = defaultdict(list)
        for (s, r, o), times in _group_begin_times(kb).items():
            distinct = sorted(set(times))
            for a, b in zip(distinct, distinct[1:]):
                gaps[r].append(b - a)
        mu = np.zeros(n_rel)
        sigma = np.full(n_rel, SIGMA_FLOOR)
        for r, diffs in gaps.items():
            arr = np.asarray(diffs, dtype=np.float64)
            mu[r] = arr.mean()
            sigma[r] = max(float(arr.std()), SIGMA_FLOOR)
        recurrent = np.zeros(n_rel, dtype=bool)
        recurrent[sorted(recurrent_ids)] = True
        return cls(mu=mu, sigma=sigma, b=np.zeros(n_rel), w=np.zeros(n_rel),
                   recurrent=recurrent)


def score_recurrence(kb: TemporalKB, rec: RecurrenceParams, s: int, r: int, o: int,
                     when: int | TimeInterval) -> float:
    """Recurrence gadget score; depends on the query's begin instant only.

    Unseen (s, r, o): 0.  Non-recurrent relation: bias.  Otherwise a Gaussian
    density over the gap to the closest other occurrence, plus the bias.
    """
    if (s, r, o) not in kb.by_sro():
        return 0.0
    if not rec.recurrent[r]:
        return float(rec.b[r])
    t = _begin_instant(when, kb.n_instants)
    delta = closest_recurrence_gap(kb, s, r, o, t)
    if delta is None:
        # every recorded occurrence coincides with t: no gap to evaluate
        return float(rec.b[r])
    return float(rec.w[r] * gaussian_density(delta, rec.mu[r], rec.sigma[r]) + rec.b[r])


@dataclass
class GadgetStats:
    """Signed begin-time difference statistics per ordered relation pair and side.

    Convention: entry [r, r'] aggregates (t of r-fact) - (t of r'-fact) over
    entities sharing that side; scoring evaluates query-minus-neighbor with the
    same sign.
    """

    sub_count: np.ndarray
    sub_mean: np.ndarray
    sub_std: np.ndarray
    obj_count: np.ndarray
    obj_mean: np.ndarray
    obj_std: np.ndarray


def _fit_side(groups: dict[int, list[tuple[int, int]]], n_rel: int):
    count = np.zeros((n_rel, n_rel), dtype=np.int64)
    total = np.zeros((n_rel, n_rel))
    sq = np.zeros((n_rel, n_rel))
    for pairs in groups.values():
        if len(pairs) < 2:
            continue
        rels = np.array([p[0] for p in pairs], dtype=np.int64)
        times = np.array([p[1] for p in pairs], dtype=np.float64)
        diffs = times[:, None] - times[None, :]
        ri = np.repeat(rels, rels.shape[0])
        rj = np.tile(rels, rels.shape[0])
        d = diffs.ravel()
        keep = ~np.eye(rels.shape[0], dtype=bool).ravel()
        ri, rj, d = ri[keep], rj[keep], d[keep]
        np.add.at(count, (ri, rj), 1)
        np.add.at(total, (ri, rj), d)
        np.add.at(sq, (ri, rj), d * d)
    mean = np.zeros_like(total)
    std = np.zeros_like(total)
    seen = count > 0
    mean[seen] = total[seen] / count[seen]
    var = np.zeros_like(total)
    var[seen] = sq[seen] / count[seen] - mean[seen] ** 2
    std[seen] = np.sqrt(np.maximum(var[seen], 0.0))
    return count, mean, std


def fit_pair_statistics(kb: TemporalKB) -> GadgetStats:
    """Fit per-pair gap distributions from entities sharing a subject or object."""
    n_rel = kb.vocabulary.n_relations
    sub_groups: dict[int, list] = defaultdict(list)
    obj_groups: dict[int, list] = defaultdict(list)
    for f in kb.train:
        if f.interval.begin == NEG_UNBOUNDED:
            continue
        sub_groups[f.subject].append((f.relation, f.interval.begin))
        obj_groups[f.object].append((f.relation, f.interval.begin))
    sc, sm, ss = _fit_side(sub_groups, n_rel)
    oc, om, os_ = _fit_side(obj_groups, n_rel)
    return GadgetStats(sub_count=sc, sub_mean=sm, sub_std=ss,
                       obj_count=oc, obj_mean=om, obj_std=os_)


@dataclass
class PairParams:
    """Relation-pair gadget parameters, one table per side.

    mu/sigma come from GadgetStats and stay frozen; b and w are trained.
    has_* marks pairs with fitted statistics; pairs without fall back to the
    bias alone.
    """

    sub_mu: np.ndarray
    sub_sigma: np.ndarray
    sub_b: np.ndarray
    sub_w: np.ndarray
    sub_has: np.ndarray
    obj_mu: np.ndarray
    obj_sigma: np.ndarray
    obj_b: np.ndarray
    obj_w: np.ndarray
    obj_has: np.ndarray

    @classmethod
    def from_stats(cls, stats: GadgetStats) -> "PairParams":
        def side(count, mean, std):
            has = count > 0
            sigma = np.where(has, np.maximum(std, SIGMA_FLOOR), SIGMA_FLOOR)
            return mean.copy(), sigma, np.zeros_like(mean), np.zeros_like(mean), has

        sm, ss, sb, sw, sh = side(stats.sub_count, stats.sub_mean, stats.sub_std)
        om, osig, ob, ow, oh = side(stats.obj_count, stats.obj_mean, stats.obj_std)
        return cls(sub_mu=sm, sub_sigma=ss, sub_b=sb, sub_w=sw, sub_has=sh,
                   obj_mu=om, obj_sigma=osig, obj_b=ob, obj_w=ow, obj_has=oh)

    def trainable(self) -> dict[str, np.ndarray]:
        return {"pair_sub_b": self.sub_b, "pair_sub_w": self.sub_w,
                "pair_obj_b": self.obj_b, "pair_obj_w": self.obj_w}


def _score_side(neighbors: list[Fact], qrel: int, qt: int,
                mu, sigma, bias, wgt, has) -> float:
    items = [(f.relation, f.interval.begin) for f in neighbors
             if f.relation != qrel and f.interval.begin != NEG_UNBOUNDED]
    if not items:
        return 0.0
    rels = np.array([it[0] for it in items], dtype=np.int64)
    times = np.array([it[1] for it in items], dtype=np.float64)
    z = wgt[qrel, rels]
    a = np.exp(z - z.max())
    a /= a.sum()
    # density evaluated per neighbor with its own (mu, sigma)
    dens = np.zeros_like(times)
    m = has[qrel, rels]
    if m.any():
        dens[m] = (_INV_SQRT_2PI / sigma[qrel, rels][m]
                   * np.exp(-0.5 * ((qt - times[m] - mu[qrel, rels][m])
                                    / sigma[qrel, rels][m]) ** 2))
    sc = dens + bias[qrel, rels]
    return float(a @ sc)


def score_pair(kb: TemporalKB, pair: PairParams, s: int, r: int, o: int, t: int) -> float:
    """Relation-pair score: subject-side plus object-side weighted averages.

    Neighbor facts sharing the query relation are excluded on both sides (the
    recurrence gadget owns same-relation evidence); an empty side scores 0.
    """
    sub = _score_side(kb.by_subject().get(s, []), r, t,
                      pair.sub_mu, pair.sub_sigma, pair.sub_b, pair.sub_w, pair.sub_has)
    obj = _score_side(kb.by_object().get(o, []), r, t,
                      pair.obj_mu, pair.obj_sigma, pair.obj_b, pair.obj_w, pair.obj_has)
    return sub + obj


@dataclass
class Gadgets:
    """Fitted gadget parameter bundle with its mixing weights."""

    rec: RecurrenceParams
    pair: PairParams
    kappa: float = 0.0
    lam: float = 0.0

    @classmethod
    def fit(cls, kb: TemporalKB, k_rec: int = 1, kappa: float = 0.0,
            lam: float = 0.0) -> "Gadgets":
        rec = RecurrenceParams.fit(kb, k_rec)
        pair = PairParams.from_stats(fit_pair_statistics(kb))
        return cls(rec=rec, pair=pair, kappa=kappa, lam=lam)

    def trainable(self) -> dict[str, np.ndarray]:
        out = {"rec_b": self.rec.b, "rec_w": self.rec.w}
        out.update(self.pair.trainable())
        return out

    def copy(self) -> "Gadgets":
        import copy as _copy

        return _copy.deepcopy(self)


def score_timeplex(kb: TemporalKB, model, gadgets: Gadgets, s: int, r: int, o: int,
                   interval: TimeInterval, kappa: float, lam: float) -> float:
    """Combined score: interval base score plus weighted gadget scores at begin."""
    from .scoring import score_tx_interval

    clipped = kb.clip_interval(interval)
    if clipped is None:
        raise ValueError(f"interval {interval} clips to empty domain")
    base = score_tx_interval(model, s, r, o, clipped)
    t = clipped.begin
    if kappa:
        base += kappa * score_pair(kb, gadgets.pair, s, r, o, t)
    if lam:
        base += lam * score_recurrence(kb, gadgets.rec, s, r, o, t)
    return base


class GadgetIndex:
    """CSR neighbor layout over the train fold for batched gadget scoring.

    Per entity: the begin-bounded train facts where it appears as subject
    (resp. object), as parallel relation/time arrays.  Also groups occurrence
    times by (s, r) for recurrence lookups over candidate objects.
    """

    def __init__(self, kb: TemporalKB):
        self.kb = kb
        n_ent = kb.vocabulary.n_entities
        self.sub_indptr, self.sub_rel, self.sub_time = self._csr(
            kb, n_ent, lambda f: f.subject)
        self.obj_indptr, self.obj_rel, self.obj_time = self._csr(
            kb, n_ent, lambda f: f.object)
        groups: dict = defaultdict(lambda: ([], []))
        for f in kb.train:
            if f.interval.begin == NEG_UNBOUNDED:
                continue
            objs, times = groups[(f.subject, f.relation)]
            objs.append(f.object)
            times.append(f.interval.begin)
        self.sr_groups = {
            key: (np.asarray(objs, dtype=np.int64), np.asarray(times, dtype=np.int64))
            for key, (objs, times) in groups.items()
        }

    @staticmethod
    def _csr(kb: TemporalKB, n_ent: int, key):
        rows: list[list[tuple[int, int]]] = [[] for _ in range(n_ent)]
        for f in kb.train:
            if f.interval.begin == NEG_UNBOUNDED:
                continue
            rows[key(f)].append((f.relation, f.interval.begin))
        indptr = np.zeros(n_ent + 1, dtype=np.int64)
        for e, items in enumerate(rows):
            indptr[e + 1] = indptr[e] + len(items)
        rels = np.empty(indptr[-1], dtype=np.int64)
        times = np.empty(indptr[-1], dtype=np.float64)
        pos = 0
        for items in rows:
            for rel, t in items:
                rels[pos] = rel
                times[pos] = t
                pos += 1
        return indptr, rels, times

    def pair_object_scores(self, pair: PairParams, r: int, t: int,
                           cands: np.ndarray) -> np.ndarray:
        out = np.empty(cands.shape[0], dtype=np.float64)
        _kernels.pair_side_scores(
            self.obj_indptr, self.obj_rel, self.obj_time,
            np.ascontiguousarray(cands, dtype=np.int64), r, float(t),
            pair.obj_mu, pair.obj_sigma, pair.obj_b, pair.obj_w, pair.obj_has, out)
        return out

    def pair_subject_scores(self, pair: PairParams, r: int, t: int,
                            cands: np.ndarray) -> np.ndarray:
        out = np.empty(cands.shape[0], dtype=np.float64)
        _kernels.pair_side_scores(
            self.sub_indptr, self.sub_rel, self.sub_time,
            np.ascontiguousarray(cands, dtype=np.int64), r, float(t),
            pair.sub_mu, pair.sub_sigma, pair.sub_b, pair.sub_w, pair.sub_has, out)
        return out

    def pair_scores_over_times(self, pair: PairParams, s: int, r: int, o: int,
                               t_ids: np.ndarray) -> np.ndarray:
        """Pair score at each candidate instant; softmax weights are t-independent."""
        total = np.zeros(t_ids.shape[0], dtype=np.float64)
        for entity, indptr, rels, times, mu, sigma, bias, wgt, has in (
            (s, self.sub_indptr, self.sub_rel, self.sub_time,
             pair.sub_mu, pair.sub_sigma, pair.sub_b, pair.sub_w, pair.sub_has),
            (o, self.obj_indptr, self.obj_rel, self.obj_time,
             pair.obj_mu, pair.obj_sigma, pair.obj_b, pair.obj_w, pair.obj_has),
        ):
            ri = rels[indptr[entity]:indptr[entity + 1]]
            ti = times[indptr[entity]:indptr[entity + 1]]
            keep = ri != r
            if not keep.any():
                continue
            ri, ti = ri[keep], ti[keep]
            z = wgt[r, ri]
            a = np.exp(z - z.max())
            a /= a.sum()
            diffs = t_ids[None, :] - ti[:, None]
            dens = np.where(
                has[r, ri][:, None],
                _INV_SQRT_2PI / sigma[r, ri][:, None]
                * np.exp(-0.5 * ((diffs - mu[r, ri][:, None]) / sigma[r, ri][:, None]) ** 2),
                0.0,
            )
            total += a @ (dens + bias[r, ri][:, None])
        return total

    def recurrence_object_scores(self, rec: RecurrenceParams, s: int, r: int,
                                 t: int, n_entities: int) -> np.ndarray:
        """Recurrence score per candidate object; zero for unseen (s, r, o)."""
        out = np.zeros(n_entities, dtype=np.float64)
        group = self.sr_groups.get((s, r))
        if group is None:
            return out
        objs, times = group
        for o in np.unique(objs):
            mask = objs == o
            ts = times[mask]
            if not rec.recurrent[r]:
                out[o] = rec.b[r]
                continue
            gaps = np.abs(t - ts[ts != t])
            if gaps.size == 0:
                out[o] = rec.b[r]
            else:
                out[o] = rec.w[r] * gaussian_density(
                    float(gaps.min()), rec.mu[r], rec.sigma[r]) + rec.b[r]
        return out

    def recurrence_scores_over_times(self, rec: RecurrenceParams, s: int, r: int,
                                     o: int, t_ids: np.ndarray) -> np.ndarray:
        group = self.kb.by_sro().get((s, r, o))
        if group is None:
            return np.zeros(t_ids.shape[0], dtype=np.float64)
        if not rec.recurrent[r]:
            return np.full(t_ids.shape[0], rec.b[r], dtype=np.float64)
        times = np.asarray([iv.begin for iv in group if iv.begin != NEG_UNBOUNDED],
                           dtype=np.float64)
        out = np.empty(t_ids.shape[0], dtype=np.float64)
        for i, t in enumerate(t_ids):
            gaps = np.abs(t - times[times != t])
            if gaps.size == 0:
                out[i] = rec.b[r]
            else:
                out[i] = rec.w[r] * gaussian_density(
                    float(gaps.min()), rec.mu[r], rec.sigma[r]) + rec.b[r]
        return out


@dataclass(frozen=True)
class OrderingConstraint:
    """Mined rule: the earlier relation's begin precedes the later's for an entity."""

    earlier: int
    later: int
    confidence: float
    support: int


def mine_ordering_constraints(kb: TemporalKB, confidence: float = 0.99,
                              min_support: int = 100) -> list[OrderingConstraint]:
    """Extract high-confidence relation orderings from per-subject begin times.

    An entity having both relations votes once: it counts as ordered when every
    begin time of the earlier relation precedes every begin time of the later.
    """
    per_subject: dict[int, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for f in kb.train:
        if f.interval.begin != NEG_UNBOUNDED:
            per_subject[f.subject][f.relation].append(f.interval.begin)
    cooc: dict[tuple[int, int], int] = defaultdict(int)
    ordered: dict[tuple[int, int], int] = defaultdict(int)
    for rel_times in per_subject.values():
        rels = sorted(rel_times)
        for r1 in rels:
            for r2 in rels:
                if r1 == r2:
                    continue
                cooc[(r1, r2)] += 1
                if max(rel_times[r1]) < min(rel_times[r2]):
                    ordered[(r1, r2)] += 1
    out = []
    for (r1, r2), support in cooc.items():
        if support < min_support:
            continue
        conf = ordered[(r1, r2)] / support
        if conf >= confidence:
            out.append(OrderingConstraint(earlier=r1, later=r2,
                                          confidence=conf, support=support))
    out.sort(key=lambda c: (-c.confidence, -c.support, c.earlier, c.later))
    return out


def constraints_to_json(constraints: list[OrderingConstraint], kb: TemporalKB) -> list[dict]:
    names = kb.vocabulary.relation_names
    return [
        {"earlier": names[c.earlier], "later": names[c.later],
         "earlier_id": c.earlier, "later_id": c.later,
         "confidence": c.confidence, "support": c.support}
        for c in constraints
    ]


def write_constraints(constraints: list[OrderingConstraint], kb: TemporalKB,
                      path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(constraints_to_json(constraints, kb), indent=2) + "\n",
        encoding="utf-8")


def read_constraints(path: str | Path) -> list[OrderingConstraint]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    return [OrderingConstraint(earlier=r["earlier_id"], later=r["later_id"],
                               confidence=r["confidence"], support=r["support"])
            for r in records]
