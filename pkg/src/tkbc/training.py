"""Two-phase training: embeddings first, then gadget weights over frozen embeddings.

Phase 1 minimizes the summed negative log-likelihood of the object, subject
and instant of each training fact under full softmaxes (every entity or
instant is a candidate), with L2 applied only to embeddings touched by the
batch and optional smoothing between consecutive instant embeddings.  Interval
facts contribute one uniformly sampled instant per epoch.

Phase 2 freezes all embeddings and fits the gadget biases and weights with the
same loss over sampled negative candidates.

All gradients are closed form; AdaGrad applies the updates.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import _kernels
from .gadgets import Gadgets, gaussian_density
from .kb import NEG_UNBOUNDED, TemporalKB, sample_instant
from .scoring import (ModelParams, _cmul, _cmul_bconj, _cmul_conj,
                      object_queries, subject_queries, time_queries)

ADAGRAD_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


class NumericalError(TrainingError):
    """Loss or gradients became non-finite."""


@dataclass
class TrainingConfig:
    dim: int = 100
    learning_rate: float = 0.1
    reg_weight: float = 0.03
    batch_size: int = 1000
    temporal_smoothing_weight: float = 0.0
    epochs_max: int = 500
    early_stop_patience: int = 10
    validate_every: int = 5
    alpha: float = 5.0
    beta: float = 5.0
    gamma: float = 5.0
    kappa: float = 3.0
    lam: float = 5.0
    k_rec: int = 1
    phase2_neg_samples: int = 100
    phase2_reg: float = 0.002
    phase2_epochs: int = 10
    phase2_learning_rate: float = 0.1
    seed: int = 0
    init_std: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("learning_rate", "reg_weight", "temporal_smoothing_weight",
                     "alpha", "beta", "gamma", "kappa", "lam", "phase2_reg",
                     "phase2_learning_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_json(cls, path) -> "TrainingConfig":
        raw = json.loads(open(path, encoding="utf-8").read())
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["lambda"] = out.pop("lam")
        return out


# --- phase 1: embedding loss ------------------------------------------------------


def _nll_rows(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Row NLL under a max-shifted softmax; returns (loss, softmax-minus-onehot)."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1)
    rows = np.arange(scores.shape[0])
    loss = float(np.sum(np.log(denom) - shifted[rows, targets]))
    weights = exp / denom[:, None]
    weights[rows, targets] -= 1.0
    return loss, weights


def _zero_grads(model: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.arrays().items()}


def loss_instant_batch(model: ModelParams, s_ids, r_ids, o_ids, t_ids
                       ) -> tuple[float, dict[str, np.ndarray]]:
    """Summed NLL of object, subject and instant targets, with full gradients.

    Each candidate set is the whole entity (or instant) table; the score of a
    candidate row is real-linear in that row, so each term reduces to one
    query-matrix product and a rank-structured gradient.
    """
    s_ids = np.asarray(s_ids, dtype=np.int64)
    r_ids = np.asarray(r_ids, dtype=np.int64)
    o_ids = np.asarray(o_ids, dtype=np.int64)
    t_ids = np.asarray(t_ids, dtype=np.int64)
    if s_ids.size == 0:
        raise TrainingError("empty batch")
    ent_re, ent_im = model.ent_re, model.ent_im
    time_re, time_im = model.time_re, model.time_im
    a, b, g = model.alpha, model.beta, model.gamma

    S = (ent_re[s_ids], ent_im[s_ids])
    O = (ent_re[o_ids], ent_im[o_ids])
    T = (time_re[t_ids], time_im[t_ids])
    Rso = (model.rel_so_re[r_ids], model.rel_so_im[r_ids])
    Rst = (model.rel_st_re[r_ids], model.rel_st_im[r_ids])
    Rot = (model.rel_ot_re[r_ids], model.rel_ot_im[r_ids])

    grads = _zero_grads(model)
    total = 0.0

    # objects:   phi(e) = Re(qA . conj(e)) + const
    qA = object_queries(model, s_ids, r_ids, t_ids)[:2]
    scores = qA[0] @ ent_re.T + qA[1] @ ent_im.T
    loss, W = _nll_rows(scores, o_ids)
    total += loss
    grads["ent_re"] += W.T @ qA[0]
    grads["ent_im"] += W.T @ qA[1]
    ohat = (W @ ent_re, W @ ent_im)
    dS = _cmul_conj(*Rso, *ohat)
    if g:
        extra = _cmul_bconj(*T, *ohat)
        dS = (dS[0] + g * extra[0], dS[1] + g * extra[1])
    np.add.at(grads["ent_re"], s_ids, dS[0])
    np.add.at(grads["ent_im"], s_ids, dS[1])
    dRso = _cmul_conj(*S, *ohat)
    np.add.at(grads["rel_so_re"], r_ids, dRso[0])
    np.add.at(grads["rel_so_im"], r_ids, dRso[1])
    if b:
        dRot = _cmul_bconj(*T, *ohat)
        np.add.at(grads["rel_ot_re"], r_ids, b * dRot[0])
        np.add.at(grads["rel_ot_im"], r_ids, b * dRot[1])
        dT = _cmul(*Rot, *ohat)
        np.add.at(grads["time_re"], t_ids, b * dT[0])
        np.add.at(grads["time_im"], t_ids, b * dT[1])
    if g:
        dT = _cmul(*S, *ohat)
        np.add.at(grads["time_re"], t_ids, g * dT[0])
        np.add.at(grads["time_im"], t_ids, g * dT[1])

    # subjects:  phi(e) = Re(qB . conj(e)) + const
    qB = subject_queries(model, o_ids, r_ids, t_ids)[:2]
    scores = qB[0] @ ent_re.T + qB[1] @ ent_im.T
    loss, W = _nll_rows(scores, s_ids)
    total += loss
    grads["ent_re"] += W.T @ qB[0]
    grads["ent_im"] += W.T @ qB[1]
    shat = (W @ ent_re, W @ ent_im)
    dO = _cmul(*Rso, *shat)
    if g:
        extra = _cmul_bconj(*T, *shat)
        dO = (dO[0] + g * extra[0], dO[1] + g * extra[1])
    np.add.at(grads["ent_re"], o_ids, dO[0])
    np.add.at(grads["ent_im"], o_ids, dO[1])
    dRso = _cmul_conj(*shat, *O)
    np.add.at(grads["rel_so_re"], r_ids, dRso[0])
    np.add.at(grads["rel_so_im"], r_ids, dRso[1])
    if a:
        dRst = _cmul_conj(*shat, *T)
        np.add.at(grads["rel_st_re"], r_ids, a * dRst[0])
        np.add.at(grads["rel_st_im"], r_ids, a * dRst[1])
        dT = _cmul(*shat, *Rst)
        np.add.at(grads["time_re"], t_ids, a * dT[0])
        np.add.at(grads["time_im"], t_ids, a * dT[1])
    if g:
        dT = _cmul(*shat, *O)
        np.add.at(grads["time_re"], t_ids, g * dT[0])
        np.add.at(grads["time_im"], t_ids, g * dT[1])

    # instants:  phi(t) = Re(qC . conj(t)) + const
    qC = time_queries(model, s_ids, r_ids, o_ids)[:2]
    scores = qC[0] @ time_re.T + qC[1] @ time_im.T
    loss, W = _nll_rows(scores, t_ids)
    total += loss
    grads["time_re"] += W.T @ qC[0]
    grads["time_im"] += W.T @ qC[1]
    that = (W @ time_re, W @ time_im)
    if a:
        dS = _cmul_conj(*Rst, *that)
        np.add.at(grads["ent_re"], s_ids, a * dS[0])
        np.add.at(grads["ent_im"], s_ids, a * dS[1])
        dRst = _cmul_conj(*S, *that)
        np.add.at(grads["rel_st_re"], r_ids, a * dRst[0])
        np.add.at(grads["rel_st_im"], r_ids, a * dRst[1])
    if b:
        dO = _cmul_conj(*Rot, *that)
        np.add.at(grads["ent_re"], o_ids, b * dO[0])
        np.add.at(grads["ent_im"], o_ids, b * dO[1])
        dRot = _cmul_conj(*O, *that)
        np.add.at(grads["rel_ot_re"], r_ids, b * dRot[0])
        np.add.at(grads["rel_ot_im"], r_ids, b * dRot[1])
    if g:
        dS = _cmul_conj(*O, *that)
        np.add.at(grads["ent_re"], s_ids, g * dS[0])
        np.add.at(grads["ent_im"], s_ids, g * dS[1])
        dO = _cmul_conj(*S, *that)
        np.add.at(grads["ent_re"], o_ids, g * dO[0])
        np.add.at(grads["ent_im"], o_ids, g * dO[1])

    return total, grads


def l2_batch_regularizer(model: ModelParams, s_ids, r_ids, o_ids, t_ids,
                         reg_weight: float) -> tuple[float, dict[str, np.ndarray]]:
    """Squared-norm penalty over the distinct embeddings used by the batch.

    Entities and instants regularize their rows; a relation in the batch
    regularizes all three of its vectors.  Rows touched repeatedly are
    penalized once.
    """
    grads = _zero_grads(model)
    ents = np.unique(np.concatenate([np.asarray(s_ids), np.asarray(o_ids)]))
    rels = np.unique(np.asarray(r_ids))
    ts = np.unique(np.asarray(t_ids))
    penalty = 0.0
    for re_name, im_name, idx in (
        ("ent_re", "ent_im", ents),
        ("rel_so_re", "rel_so_im", rels),
        ("rel_st_re", "rel_st_im", rels),
        ("rel_ot_re", "rel_ot_im", rels),
        ("time_re", "time_im", ts),
    ):
        re_arr = model.arrays()[re_name]
        im_arr = model.arrays()[im_name]
        penalty += float((re_arr[idx] ** 2).sum() + (im_arr[idx] ** 2).sum())
        grads[re_name][idx] = 2.0 * reg_weight * re_arr[idx]
        grads[im_name][idx] = 2.0 * reg_weight * im_arr[idx]
    return reg_weight * penalty, grads


def temporal_smoothing_penalty(model: ModelParams, weight: float
                               ) -> tuple[float, dict[str, np.ndarray]]:
    """weight * sum of squared differences between consecutive instant embeddings."""
    grads = _zero_grads(model)
    if weight == 0.0 or model.n_instants < 2:
        return 0.0, grads
    dre = model.time_re[1:] - model.time_re[:-1]
    dim_ = model.time_im[1:] - model.time_im[:-1]
    penalty = weight * float((dre ** 2).sum() + (dim_ ** 2).sum())
    grads["time_re"][:-1] -= 2.0 * weight * dre
    grads["time_re"][1:] += 2.0 * weight * dre
    grads["time_im"][:-1] -= 2.0 * weight * dim_
    grads["time_im"][1:] += 2.0 * weight * dim_
    return penalty, grads


def _merge_grads(into: dict[str, np.ndarray], extra: dict[str, np.ndarray]) -> None:
    for name, arr in extra.items():
        into[name] += arr


def init_optimizer(arrays: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in arrays.items()}


def adagrad_step(arrays: dict[str, np.ndarray], state: dict[str, np.ndarray],
                 grads: dict[str, np.ndarray], lr: float,
                 eps: float = ADAGRAD_EPS) -> None:
    """In-place AdaGrad update: acc += g^2; theta -= lr * g / (sqrt(acc) + eps)."""
    for name, g in grads.items():
        acc = state[name]
        acc += g * g
        arrays[name] -= lr * g / (np.sqrt(acc) + eps)


def _clipped_spans(kb: TemporalKB, fold: str) -> tuple[np.ndarray, np.ndarray]:
    arrs = kb.fold_arrays(fold)
    lo = np.clip(arrs["begin"], 0, kb.n_instants - 1)
    hi = np.clip(arrs["end"], 0, kb.n_instants - 1)
    return lo, hi


def _check_finite(value: float, what: str) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite {what}: {value}")


def train_phase1(kb: TemporalKB, config: TrainingConfig,
                 rng: np.random.Generator | None = None,
                 log_sink=None) -> tuple[ModelParams, list[dict]]:
    """Fit embeddings with per-epoch instant sampling and early stopping on dev MRR.

    Returns the best-on-dev model (the final model when the valid fold is
    empty) together with the per-epoch training log.
    """
    from .evaluation import FilterIndex

    if not kb.has_inverses:
        raise TrainingError("training expects an inverse-augmented KB")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    vocab = kb.vocabulary
    model = ModelParams.init_random(
        vocab.n_entities, vocab.n_relations, vocab.n_instants, config.dim, rng,
        std=config.init_std, alpha=config.alpha, beta=config.beta, gamma=config.gamma)
    state = init_optimizer(model.arrays())
    arrs = kb.fold_arrays("train")
    lo, hi = _clipped_spans(kb, "train")
    n = arrs["s"].shape[0]
    if n == 0:
        raise TrainingError("empty train fold")
    index = FilterIndex(kb) if kb.valid else None
    best_mrr = -np.inf
    best_model = None
    patience_left = config.early_stop_patience
    log: list[dict] = []
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs_max + 1):
        perm = rng.permutation(n)
        sampled = rng.integers(lo, hi + 1)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            s, r, o, t = arrs["s"][idx], arrs["r"][idx], arrs["o"][idx], sampled[idx]
            loss, grads = loss_instant_batch(model, s, r, o, t)
            if config.reg_weight:
                pen, g2 = l2_batch_regularizer(model, s, r, o, t, config.reg_weight)
                loss += pen
                _merge_grads(grads, g2)
            if config.temporal_smoothing_weight:
                pen, g3 = temporal_smoothing_penalty(model, config.temporal_smoothing_weight)
                loss += pen
                _merge_grads(grads, g3)
            _check_finite(loss, "batch loss")
            adagrad_step(model.arrays(), state, grads, config.learning_rate)
            epoch_loss += loss
        record = {"epoch": epoch, "loss": epoch_loss,
                  "wall_time": time.perf_counter() - t0}
        if index is not None and epoch % config.validate_every == 0:
            mrr = quick_dev_mrr(model, kb, index)
            record["dev_mrr"] = mrr
            if mrr > best_mrr:
                best_mrr = mrr
                best_model = model.copy()
                patience_left = config.early_stop_patience
            else:
                patience_left -= 1
        log.append(record)
        if log_sink is not None:
            log_sink(record)
        if index is not None and patience_left <= 0:
            break
    if best_model is not None:
        model = best_model
    return model, log


def quick_dev_mrr(model: ModelParams, kb: TemporalKB, index,
                  max_queries: int | None = None) -> float:
    """Time-insensitive filtered MRR on the valid fold, both query directions.

    Counting-based (no full sort): the rank is one plus the number of
    unfiltered entities strictly above the gold, ties by lower id.
    """
    from .scoring import score_all_objects

    vocab = kb.vocabulary
    facts = kb.valid[:max_queries] if max_queries else kb.valid
    recip = []
    for f in facts:
        clipped = kb.clip_interval(f.interval)
        if clipped is None:
            continue
        when = clipped if clipped.volume() > 1 else clipped.begin
        for s, r, gold in ((f.subject, f.relation, f.object),
                           (f.object, vocab.inverse_relation(f.relation), f.subject)):
            scores = score_all_objects(model, s, r, when)
            gold_score = scores[gold]
            above = (scores > gold_score) | (
                (scores == gold_score) & (np.arange(scores.shape[0]) < gold))
            for e in np.flatnonzero(above):
                if index.seen_any(s, r, int(e)):
                    above[e] = False
            recip.append(1.0 / (1 + int(above.sum())))
    if not recip:
        return 0.0
    return float(np.mean(recip))


# --- phase 2: gadget weight training ----------------------------------------------


def _model_digest(model: ModelParams) -> str:
    h = hashlib.sha256()
    for name in sorted(model.arrays()):
        h.update(model.arrays()[name].tobytes())
    return h.hexdigest()


def _tx_scores_candidates(model: ModelParams, s: int, r: int, lo: int, hi: int,
                          cands: np.ndarray) -> np.ndarray:
    """Base interval scores of candidate objects for fixed (s, r, [lo, hi])."""
    t_ids = np.arange(lo, hi + 1)
    qr, qi, const = object_queries(
        model, np.full(t_ids.shape, s), np.full(t_ids.shape, r), t_ids)
    qr, qi, const = qr.sum(axis=0), qi.sum(axis=0), float(const.sum())
    return model.ent_re[cands] @ qr + model.ent_im[cands] @ qi + const


def _tx_scores_time_candidates(model: ModelParams, s: int, r: int, o: int,
                               t_cands: np.ndarray) -> np.ndarray:
    qr, qi, const = time_queries(model, s, r, o)
    return model.time_re[t_cands] @ qr + model.time_im[t_cands] @ qi + const


def train_phase2(kb: TemporalKB, model: ModelParams, gadgets: Gadgets,
                 config: TrainingConfig, rng: np.random.Generator | None = None,
                 log_sink=None) -> tuple[Gadgets, list[dict]]:
    """Fit gadget biases/weights with frozen embeddings and sampled negatives.

    Each train fact contributes an object-corruption term and an instant-
    corruption term; mu/sigma stay at their fitted values.  Embeddings are
    digest-checked before and after.
    """
    from .gadgets import GadgetIndex

    if rng is None:
        rng = np.random.default_rng(config.seed + 1)
    gadgets = gadgets.copy()
    digest_before = _model_digest(model)
    index = GadgetIndex(kb)
    params = gadgets.trainable()
    state = init_optimizer(params)
    kappa, lam = gadgets.kappa, gadgets.lam
    rec, pair = gadgets.rec, gadgets.pair
    n_ent = kb.vocabulary.n_entities
    n_time = kb.n_instants
    arrs = kb.fold_arrays("train")
    facts = kb.train
    lo, hi = _clipped_spans(kb, "train")
    usable = np.flatnonzero(arrs["begin"] != NEG_UNBOUNDED)
    if usable.size == 0:
        raise TrainingError("no begin-bounded train facts for gadget training")
    by_sro = kb.by_sro()
    log: list[dict] = []
    t0 = time.perf_counter()
    for epoch in range(1, config.phase2_epochs + 1):
        perm = usable[rng.permutation(usable.size)]
        epoch_loss = 0.0
        for start in range(0, perm.size, config.batch_size):
            batch = perm[start:start + config.batch_size]
            grads = {name: np.zeros_like(arr) for name, arr in params.items()}
            batch_loss = 0.0
            for i in batch:
                s, r, o = int(arrs["s"][i]), int(arrs["r"][i]), int(arrs["o"][i])
                span_lo, span_hi = int(lo[i]), int(hi[i])
                t = span_lo
                example_iv = facts[i].interval
                batch_loss += _phase2_object_term(
                    model, kb, index, rec, pair, by_sro, s, r, o, example_iv,
                    span_lo, span_hi, t, kappa, lam, n_ent,
                    config.phase2_neg_samples, rng, grads)
                batch_loss += _phase2_time_term(
                    model, kb, index, rec, pair, s, r, o, example_iv, t, kappa,
                    lam, n_time, config.phase2_neg_samples, rng, grads)
            if config.phase2_reg:
                for name, arr in params.items():
                    batch_loss += config.phase2_reg * float((arr ** 2).sum())
                    grads[name] += 2.0 * config.phase2_reg * arr
            _check_finite(batch_loss, "gadget batch loss")
            adagrad_step(params, state, grads, config.phase2_learning_rate)
            epoch_loss += batch_loss
        record = {"epoch": epoch, "loss": epoch_loss, "phase": 2,
                  "wall_time": time.perf_counter() - t0}
        log.append(record)
        if log_sink is not None:
            log_sink(record)
    if _model_digest(model) != digest_before:
        raise TrainingError("embedding mutation detected during phase 2")
    return gadgets, log


def _rec_evidence(by_sro, s, r, o, exclude=None):
    """(seen, begin-times) for (s, r, o), optionally dropping one occurrence.

    Phase-2 scoring must not let a training fact count as its own recurrence
    evidence; `exclude` removes one instance of the example's interval so the
    repetition bias is learned from genuinely repeated facts.
    """
    intervals = by_sro.get((s, r, o))
    if not intervals:
        return False, ()
    remaining = list(intervals)
    if exclude is not None and exclude in remaining:
        remaining.remove(exclude)
    if not remaining:
        return False, ()
    return True, tuple(iv.begin for iv in remaining if iv.begin != NEG_UNBOUNDED)


def _rec_score_and_density(rec, seen, begins, r, t) -> tuple[float, bool, float]:
    """Recurrence score plus the pieces its b/w gradients need."""
    if not seen:
        return 0.0, False, 0.0
    if not rec.recurrent[r]:
        return float(rec.b[r]), True, 0.0
    gaps = [abs(t - tb) for tb in begins if tb != t]
    if not gaps:
        return float(rec.b[r]), True, 0.0
    dens = gaussian_density(min(gaps), rec.mu[r], rec.sigma[r])
    return float(rec.w[r] * dens + rec.b[r]), True, float(dens)


def _phase2_object_term(model, kb, index, rec, pair, by_sro, s, r, o, example_iv,
                        span_lo, span_hi, t, kappa, lam, n_ent, n_neg, rng,
                        grads) -> float:
    negs = rng.integers(0, n_ent, size=n_neg)
    cands = np.concatenate(([o], negs)).astype(np.int64)
    phi = _tx_scores_candidates(model, s, r, span_lo, span_hi, cands)
    seen = np.zeros(cands.shape[0], dtype=bool)
    dens = np.zeros(cands.shape[0])
    if lam:
        rec_scores = np.empty(cands.shape[0])
        for j, e in enumerate(cands):
            sj, begins = _rec_evidence(by_sro, s, r, int(e),
                                       exclude=example_iv if int(e) == o else None)
            rec_scores[j], seen[j], dens[j] = _rec_score_and_density(
                rec, sj, begins, r, t)
        phi = phi + lam * rec_scores
    if kappa:
        phi = phi + kappa * index.pair_object_scores(pair, r, t, cands)
        # subject-side term is candidate-independent; it cancels in the softmax
    loss, w = _nll_rows(phi[None, :], np.array([0]))
    w = w[0]
    if lam:
        grads["rec_b"][r] += lam * float(w[seen].sum())
        grads["rec_w"][r] += lam * float((w * dens).sum())
    if kappa:
        _kernels.pair_side_grads(
            index.obj_indptr, index.obj_rel, index.obj_time, cands,
            kappa * w, r, float(t), pair.obj_mu, pair.obj_sigma,
            pair.obj_b, pair.obj_w, pair.obj_has,
            grads["pair_obj_b"], grads["pair_obj_w"])
    return loss


def _phase2_time_term(model, kb, index, rec, pair, s, r, o, example_iv, t,
                      kappa, lam, n_time, n_neg, rng, grads) -> float:
    tneg = rng.integers(0, n_time, size=n_neg)
    t_cands = np.concatenate(([t], tneg)).astype(np.int64)
    phi = _tx_scores_time_candidates(model, s, r, o, t_cands)
    seen, begins = _rec_evidence(kb.by_sro(), s, r, o, exclude=example_iv)
    if kappa:
        phi = phi + kappa * index.pair_scores_over_times(pair, s, r, o, t_cands)
    if lam:
        rec_scores = np.array([
            _rec_score_and_density(rec, seen, begins, r, int(tc))[0]
            for tc in t_cands])
        phi = phi + lam * rec_scores
    loss, w = _nll_rows(phi[None, :], np.array([0]))
    w = w[0]
    if kappa:
        for entity, indptr, rels, times, side in (
            (s, index.sub_indptr, index.sub_rel, index.sub_time, "sub"),
            (o, index.obj_indptr, index.obj_rel, index.obj_time, "obj"),
        ):
            ri = rels[indptr[entity]:indptr[entity + 1]]
            ti = times[indptr[entity]:indptr[entity + 1]]
            keep = ri != r
            if not keep.any():
                continue
            ri, ti = ri[keep], ti[keep]
            mu = getattr(pair, f"{side}_mu")
            sigma = getattr(pair, f"{side}_sigma")
            bias = getattr(pair, f"{side}_b")
            wgt = getattr(pair, f"{side}_w")
            has = getattr(pair, f"{side}_has")
            z = wgt[r, ri]
            a_soft = np.exp(z - z.max())
            a_soft /= a_soft.sum()
            diffs = t_cands[None, :] - ti[:, None]
            dmat = np.where(
                has[r, ri][:, None],
                (1.0 / (sigma[r, ri][:, None] * np.sqrt(2 * np.pi)))
                * np.exp(-0.5 * ((diffs - mu[r, ri][:, None]) / sigma[r, ri][:, None]) ** 2),
                0.0)
            sc = dmat + bias[r, ri][:, None]
            phi_side = a_soft @ sc
            coef = kappa * w
            gb = a_soft * coef.sum()
            gw = a_soft * ((sc - phi_side[None, :]) @ coef)
            np.add.at(grads[f"pair_{side}_b"][r], ri, gb)
            np.add.at(grads[f"pair_{side}_w"][r], ri, gw)
    if lam and seen:
        grads["rec_b"][r] += lam * float(w.sum())
        if rec.recurrent[r]:
            starts = np.asarray(begins, dtype=np.float64)
            dens = np.zeros(t_cands.shape[0])
            for j, tc in enumerate(t_cands):
                other = starts[starts != tc]
                if other.size:
                    dens[j] = gaussian_density(
                        float(np.abs(tc - other).min()), rec.mu[r], rec.sigma[r])
            grads["rec_w"][r] += lam * float((w * dens).sum())
    return loss
