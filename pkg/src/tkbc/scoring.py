"""Complex-vector algebra and instant/interval scoring over embeddings.

Embeddings are stored structure-of-arrays: one float64 real matrix and one
imaginary matrix per table.  Every score reduces to the real part of a 3-way
inner product Re(sum_d a[d] b[d] conj(c[d])); full-table scoring exploits that
the score is real-linear in the candidate row, so one query vector and a
matrix product cover all candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kb import TimeInterval


@dataclass(frozen=True)
class ComplexVector:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape or self.re.ndim != 1:
            raise ValueError("real and imaginary parts must be equal-length 1-D arrays")

    @property
    def dim(self) -> int:
        return self.re.shape[0]


def _cmul(ar, ai, br, bi):
    """a * b componentwise."""
    return ar * br - ai * bi, ar * bi + ai * br


def _cmul_conj(ar, ai, br, bi):
    """conj(a) * b componentwise."""
    return ar * br + ai * bi, ar * bi - ai * br


def _cmul_bconj(ar, ai, br, bi):
    """a * conj(b) componentwise."""
    return ar * br + ai * bi, ai * br - ar * bi


def _rowwise_product_re(ar, ai, br, bi, cr, ci):
    """Row sums of Re(a * b * conj(c)) for (B, D) component blocks."""
    pr, pi = _cmul(ar, ai, br, bi)
    return np.sum(pr * cr + pi * ci, axis=-1)


def three_way_product(a: ComplexVector, b: ComplexVector, c: ComplexVector) -> float:
    """Re(sum_d a[d] b[d] conj(c[d])), the 3-way inner product with c conjugated."""
    if not (a.dim == b.dim == c.dim):
        raise ValueError(f"dimension mismatch: {a.dim}, {b.dim}, {c.dim}")
    re_ab, im_ab = _cmul(a.re, a.im, b.re, b.im)
    return float(np.dot(re_ab, c.re) + np.dot(im_ab, c.im))


@dataclass
class ModelParams:
    """Entity, relation and time-instant embeddings plus fixed term weights.

    Each relation carries three complex vectors (entity-entity, subject-time
    and object-time interactions); alpha, beta, gamma scale the time terms.
    """

    ent_re: np.ndarray
    ent_im: np.ndarray
    rel_so_re: np.ndarray
    rel_so_im: np.ndarray
    rel_st_re: np.ndarray
    rel_st_im: np.ndarray
    rel_ot_re: np.ndarray
    rel_ot_im: np.ndarray
    time_re: np.ndarray
    time_im: np.ndarray
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @classmethod
    def init_random(
        cls,
        n_entities: int,
        n_relations: int,
        n_instants: int,
        dim: int,
        rng: np.random.Generator,
        std: float = 0.05,
        alpha: float = 0.0,
        beta: float = 0.0,
        gamma: float = 0.0,
    ) -> "ModelParams":
        def draw(n):
            return rng.normal(0.0, std, size=(n, dim))

        return cls(
            ent_re=draw(n_entities), ent_im=draw(n_entities),
            rel_so_re=draw(n_relations), rel_so_im=draw(n_relations),
            rel_st_re=draw(n_relations), rel_st_im=draw(n_relations),
            rel_ot_re=draw(n_relations), rel_ot_im=draw(n_relations),
            time_re=draw(n_instants), time_im=draw(n_instants),
            alpha=alpha, beta=beta, gamma=gamma,
        )

    @property
    def n_entities(self) -> int:
        return self.ent_re.shape[0]

    @property
    def n_relations(self) -> int:
        return self.rel_so_re.shape[0]

    @property
    def n_instants(self) -> int:
        return self.time_re.shape[0]

    @property
    def dim(self) -> int:
        return self.ent_re.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "ent_re": self.ent_re, "ent_im": self.ent_im,
            "rel_so_re": self.rel_so_re, "rel_so_im": self.rel_so_im,
            "rel_st_re": self.rel_st_re, "rel_st_im": self.rel_st_im,
            "rel_ot_re": self.rel_ot_re, "rel_ot_im": self.rel_ot_im,
            "time_re": self.time_re, "time_im": self.time_im,
        }

    def copy(self) -> "ModelParams":
        return ModelParams(
            **{k: v.copy() for k, v in self.arrays().items()},
            alpha=self.alpha, beta=self.beta, gamma=self.gamma,
        )

    def param_count(self) -> int:
        """Total scalar parameters, 2d(|E| + |T|) + 6d|R| over all tables."""
        return sum(a.size for a in self.arrays().values())

    def entity(self, i: int) -> ComplexVector:
        self._check(i, self.n_entities, "entity")
        return ComplexVector(self.ent_re[i], self.ent_im[i])

    def relation_so(self, r: int) -> ComplexVector:
        self._check(r, self.n_relations, "relation")
        return ComplexVector(self.rel_so_re[r], self.rel_so_im[r])

    def relation_st(self, r: int) -> ComplexVector:
        self._check(r, self.n_relations, "relation")
        return ComplexVector(self.rel_st_re[r], self.rel_st_im[r])

    def relation_ot(self, r: int) -> ComplexVector:
        self._check(r, self.n_relations, "relation")
        return ComplexVector(self.rel_ot_re[r], self.rel_ot_im[r])

    def time(self, t: int) -> ComplexVector:
        self._check(t, self.n_instants, "instant")
        return ComplexVector(self.time_re[t], self.time_im[t])

    @staticmethod
    def _check(i: int, n: int, what: str) -> None:
        if not 0 <= i < n:
            raise IndexError(f"{what} id {i} out of range [0, {n})")


def score_cx(params: ModelParams, s: int, r: int, o: int) -> float:
    """Time-agnostic score Re<s, r_so, conj(o)>."""
    return three_way_product(params.entity(s), params.relation_so(r), params.entity(o))


def score_tx_instant(params: ModelParams, s: int, r: int, o: int, t: int) -> float:
    """Base temporal score: CX plus the three weighted time interaction terms."""
    es, eo, et = params.entity(s), params.entity(o), params.time(t)
    score = three_way_product(es, params.relation_so(r), eo)
    if params.alpha:
        score += params.alpha * three_way_product(es, params.relation_st(r), et)
    if params.beta:
        score += params.beta * three_way_product(eo, params.relation_ot(r), et)
    if params.gamma:
        score += params.gamma * three_way_product(es, eo, et)
    return score


def score_tx_interval(params: ModelParams, s: int, r: int, o: int,
                      interval: TimeInterval) -> float:
    """Sum of instant scores over a bounded interval."""
    if not interval.bounded:
        raise ValueError(f"interval {interval} must be bounded; clip before scoring")
    return float(sum(score_tx_instant(params, s, r, o, t)
                     for t in range(interval.begin, interval.end + 1)))


# --- vectorized query-vector construction -------------------------------------
#
# For fixed (s, r, t) the object-candidate score is Re(q . conj(e)) + const with
#   q = s*r_so + beta*conj(r_ot)*t + gamma*conj(s)*t
# and const the candidate-independent subject-time term.  Subject and instant
# candidates factor the same way.


def object_queries(params: ModelParams, s_ids, r_ids, t_ids):
    """Query vectors for scoring all objects; returns (q_re, q_im, const)."""
    sr, si = params.ent_re[s_ids], params.ent_im[s_ids]
    tr, ti = params.time_re[t_ids], params.time_im[t_ids]
    qr, qi = _cmul(sr, si, params.rel_so_re[r_ids], params.rel_so_im[r_ids])
    if params.beta:
        br, bi = _cmul_conj(params.rel_ot_re[r_ids], params.rel_ot_im[r_ids], tr, ti)
        qr = qr + params.beta * br
        qi = qi + params.beta * bi
    if params.gamma:
        gr, gi = _cmul_conj(sr, si, tr, ti)
        qr = qr + params.gamma * gr
        qi = qi + params.gamma * gi
    if params.alpha:
        const = params.alpha * _rowwise_product_re(
            sr, si, params.rel_st_re[r_ids], params.rel_st_im[r_ids], tr, ti)
    else:
        const = np.zeros(np.shape(s_ids), dtype=np.float64)
    return qr, qi, const


def subject_queries(params: ModelParams, o_ids, r_ids, t_ids):
    """Query vectors for scoring all subjects; returns (q_re, q_im, const)."""
    orr, oi = params.ent_re[o_ids], params.ent_im[o_ids]
    tr, ti = params.time_re[t_ids], params.time_im[t_ids]
    qr, qi = _cmul_conj(params.rel_so_re[r_ids], params.rel_so_im[r_ids], orr, oi)
    if params.alpha:
        ar, ai = _cmul_conj(params.rel_st_re[r_ids], params.rel_st_im[r_ids], tr, ti)
        qr = qr + params.alpha * ar
        qi = qi + params.alpha * ai
    if params.gamma:
        gr, gi = _cmul_conj(orr, oi, tr, ti)
        qr = qr + params.gamma * gr
        qi = qi + params.gamma * gi
    if params.beta:
        const = params.beta * _rowwise_product_re(
            orr, oi, params.rel_ot_re[r_ids], params.rel_ot_im[r_ids], tr, ti)
    else:
        const = np.zeros(np.shape(o_ids), dtype=np.float64)
    return qr, qi, const


def time_queries(params: ModelParams, s_ids, r_ids, o_ids):
    """Query vectors for scoring all instants; returns (q_re, q_im, const)."""
    sr, si = params.ent_re[s_ids], params.ent_im[s_ids]
    orr, oi = params.ent_re[o_ids], params.ent_im[o_ids]
    qr = np.zeros_like(sr)
    qi = np.zeros_like(si)
    if params.alpha:
        ar, ai = _cmul(sr, si, params.rel_st_re[r_ids], params.rel_st_im[r_ids])
        qr += params.alpha * ar
        qi += params.alpha * ai
    if params.beta:
        br, bi = _cmul(orr, oi, params.rel_ot_re[r_ids], params.rel_ot_im[r_ids])
        qr += params.beta * br
        qi += params.beta * bi
    if params.gamma:
        gr, gi = _cmul(sr, si, orr, oi)
        qr += params.gamma * gr
        qi += params.gamma * gi
    const = _rowwise_product_re(
        sr, si, params.rel_so_re[r_ids], params.rel_so_im[r_ids], orr, oi)
    return qr, qi, const


def _object_query_interval(params: ModelParams, s: int, r: int, interval: TimeInterval):
    """Object query vector summed over every instant of a bounded interval."""
    t_ids = np.arange(interval.begin, interval.end + 1)
    s_ids = np.full(t_ids.shape, s)
    r_ids = np.full(t_ids.shape, r)
    qr, qi, const = object_queries(params, s_ids, r_ids, t_ids)
    return qr.sum(axis=0), qi.sum(axis=0), float(const.sum())


def score_all_objects(params: ModelParams, s: int, r: int,
                      when: int | TimeInterval) -> np.ndarray:
    """Scores of every entity as the object of (s, r, ?, when).

    `when` is an instant id or a bounded interval (interval scores are the sum
    of instant scores).  Matches per-candidate scalar scoring to fp accuracy.
    """
    ModelParams._check(s, params.n_entities, "entity")
    ModelParams._check(r, params.n_relations, "relation")
    if isinstance(when, TimeInterval):
        if not when.bounded:
            raise ValueError("interval must be bounded; clip before scoring")
        qr, qi, const = _object_query_interval(params, s, r, when)
    else:
        ModelParams._check(when, params.n_instants, "instant")
        qr, qi, const = object_queries(params, s, r, when)
    return params.ent_re @ qr + params.ent_im @ qi + const


def score_all_subjects(params: ModelParams, o: int, r: int,
                       when: int | TimeInterval) -> np.ndarray:
    """Scores of every entity as the subject of (?, r, o, when)."""
    ModelParams._check(o, params.n_entities, "entity")
    ModelParams._check(r, params.n_relations, "relation")
    if isinstance(when, TimeInterval):
        if not when.bounded:
            raise ValueError("interval must be bounded; clip before scoring")
        t_ids = np.arange(when.begin, when.end + 1)
        qr, qi, const = subject_queries(
            params, np.full(t_ids.shape, o), np.full(t_ids.shape, r), t_ids)
        qr, qi, const = qr.sum(axis=0), qi.sum(axis=0), float(const.sum())
    else:
        ModelParams._check(when, params.n_instants, "instant")
        qr, qi, const = subject_queries(params, o, r, when)
    return params.ent_re @ qr + params.ent_im @ qi + const


def score_all_times(params: ModelParams, s: int, r: int, o: int) -> np.ndarray:
    """Scores of (s, r, o, t) for every instant t."""
    ModelParams._check(s, params.n_entities, "entity")
    ModelParams._check(o, params.n_entities, "entity")
    ModelParams._check(r, params.n_relations, "relation")
    qr, qi, const = time_queries(params, s, r, o)
    return params.time_re @ qr + params.time_im @ qi + const
