"""Temporal KB ingestion: vocabulary management, fold handling and interval algebra.

Facts are quadruples (subject, relation, object, interval) over dense integer
ids.  Time instants are dense ids at the dataset granularity (year or day),
offset from the minimum observed time label.  Unbounded interval endpoints are
kept symbolic via the NEG_UNBOUNDED / POS_UNBOUNDED sentinels and only clipped
to the observed instant domain when enumerating or sampling.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NEG_UNBOUNDED = -(2**62)
POS_UNBOUNDED = 2**62

FOLD_NAMES = ("train", "valid", "test")
INVERSE_SUFFIX = "_inverse"

GRANULARITIES = ("year", "day")

_MAX_YEAR = 9999


class KbError(Exception):
    """Base class for dataset and interval errors."""


class DatasetParseError(KbError):
    """A dataset line could not be parsed."""


class TimeRangeError(KbError):
    """A time label is outside the representable range for the granularity."""


class UnboundedIntervalError(KbError):
    """An operation requiring bounded endpoints received an unbounded interval."""


def _is_bounded(begin: int, end: int) -> bool:
    return begin != NEG_UNBOUNDED and end != POS_UNBOUNDED


@dataclass(frozen=True)
class TimeInterval:
    """Inclusive interval over integer instants, possibly half-open.

    A single instant t is the degenerate interval [t, t].
    """

    begin: int
    end: int

    def __post_init__(self):
        if _is_bounded(self.begin, self.end) and self.begin > self.end:
            raise KbError(f"interval begin {self.begin} after end {self.end}")

    @property
    def bounded(self) -> bool:
        return _is_bounded(self.begin, self.end)

    def volume(self) -> int:
        """Inclusive discrete size, end - begin + 1."""
        if not self.bounded:
            raise UnboundedIntervalError(f"volume of unbounded interval {self}")
        return self.end - self.begin + 1

    def contains(self, t: int) -> bool:
        return self.begin <= t <= self.end

    def clip(self, lo: int, hi: int) -> "TimeInterval | None":
        """Restrict to [lo, hi]; None if the restriction is empty."""
        b = max(self.begin, lo)
        e = min(self.end, hi)
        if b > e:
            return None
        return TimeInterval(b, e)


def interval_volume(interval: TimeInterval) -> int:
    return interval.volume()


def interval_hull(a: TimeInterval, b: TimeInterval) -> TimeInterval:
    """Smallest single contiguous interval containing both inputs."""
    return TimeInterval(min(a.begin, b.begin), max(a.end, b.end))


def interval_intersection(a: TimeInterval, b: TimeInterval) -> TimeInterval | None:
    lo = max(a.begin, b.begin)
    hi = min(a.end, b.end)
    if lo > hi:
        return None
    return TimeInterval(lo, hi)


def interval_union_volume(a: TimeInterval, b: TimeInterval) -> int:
    inter = interval_intersection(a, b)
    shared = inter.volume() if inter is not None else 0
    return a.volume() + b.volume() - shared


@dataclass(frozen=True)
class Fact:
    subject: int
    relation: int
    object: int
    interval: TimeInterval


def parse_time_label(token: str, granularity: str) -> int:
    """Map a raw time token to an integer label (year number or day ordinal)."""
    if granularity == "year":
        try:
            year = int(token)
        except ValueError:
            raise DatasetParseError(f"invalid year label {token!r}") from None
        if abs(year) > _MAX_YEAR:
            raise TimeRangeError(f"year {year} outside representable range ±{_MAX_YEAR}")
        return year
    if granularity == "day":
        try:
            return date.fromisoformat(token).toordinal()
        except ValueError:
            raise TimeRangeError(f"day label {token!r} is not a representable ISO date") from None
    raise KbError(f"unknown granularity {granularity!r}")


def format_time_label(label: int, granularity: str) -> str:
    if granularity == "year":
        return str(label)
    return date.fromordinal(label).isoformat()


class Vocabulary:
    """Bijective name/id maps for entities, relations and the instant range.

    Relation ids [0, n_base) are the dataset relations; inverse relations, when
    allocated, occupy [n_base, 2*n_base) with id r + n_base and a name suffix.
    Instant ids are offsets from the minimum observed time label.
    """

    def __init__(
        self,
        entity_names: Sequence[str],
        relation_names: Sequence[str],
        n_base_relations: int,
        granularity: str,
        min_label: int,
        max_label: int,
    ):
        if granularity not in GRANULARITIES:
            raise KbError(f"unknown granularity {granularity!r}")
        if min_label > max_label:
            raise KbError("empty time label range")
        self.entity_names = list(entity_names)
        self.relation_names = list(relation_names)
        self.n_base_relations = n_base_relations
        self.granularity = granularity
        self.min_label = min_label
        self.max_label = max_label
        self._entity_ids = {name: i for i, name in enumerate(self.entity_names)}
        self._relation_ids = {name: i for i, name in enumerate(self.relation_names)}
        if len(self._entity_ids) != len(self.entity_names):
            raise KbError("duplicate entity names")
        if len(self._relation_ids) != len(self.relation_names):
            raise KbError("duplicate relation names")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    @property
    def n_instants(self) -> int:
        return self.max_label - self.min_label + 1

    @property
    def has_inverses(self) -> bool:
        return len(self.relation_names) == 2 * self.n_base_relations

    def entity_id(self, name: str) -> int:
        return self._entity_ids[name]

    def relation_id(self, name: str) -> int:
        return self._relation_ids[name]

    def inverse_relation(self, rid: int) -> int:
        """Id of the inverse relation; an involution once inverses are allocated."""
        if not self.has_inverses:
            raise KbError("inverse relations not allocated; call add_inverse_facts first")
        n = self.n_base_relations
        return rid + n if rid < n else rid - n

    def is_inverse(self, rid: int) -> bool:
        return self.has_inverses and rid >= self.n_base_relations

    def with_inverse_relations(self) -> "Vocabulary":
        if self.has_inverses:
            raise KbError("inverse relations already allocated")
        names = self.relation_names + [n + INVERSE_SUFFIX for n in self.relation_names]
        return Vocabulary(
            self.entity_names, names, self.n_base_relations,
            self.granularity, self.min_label, self.max_label,
        )

    def label_to_instant(self, label: int) -> int:
        if label == NEG_UNBOUNDED or label == POS_UNBOUNDED:
            return label
        if not (self.min_label <= label <= self.max_label):
            raise TimeRangeError(f"time label {label} outside vocabulary range "
                                 f"[{self.min_label}, {self.max_label}]")
        return label - self.min_label

    def instant_to_label(self, instant: int) -> int:
        if instant == NEG_UNBOUNDED or instant == POS_UNBOUNDED:
            return instant
        return instant + self.min_label

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name in self.entity_names:
            h.update(name.encode("utf-8") + b"\x00")
        h.update(b"\x01")
        for name in self.relation_names:
            h.update(name.encode("utf-8") + b"\x00")
        h.update(f"{self.granularity}:{self.min_label}:{self.max_label}".encode())
        return h.hexdigest()


_DEFAULT_COLUMNS = ("subject", "relation", "object", "begin", "end")
_INSTANT_COLUMNS = ("subject", "relation", "object", "time")


@dataclass
class DatasetConfig:
    """Declares how a dataset directory is laid out and discretized."""

    path: str | Path
    granularity: str = "year"
    missing_token: str = "-"
    columns: tuple[str, ...] = _DEFAULT_COLUMNS
    add_inverses: bool = False

    def __post_init__(self):
        self.columns = tuple(self.columns)
        required = {"subject", "relation", "object"}
        if not required <= set(self.columns):
            raise KbError(f"columns must include {sorted(required)}")
        has_span = "begin" in self.columns and "end" in self.columns
        has_instant = "time" in self.columns
        if has_span == has_instant:
            raise KbError("columns must include either begin+end or a single time column")

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetConfig":
        path = Path(path)
        cfg_file = path / "dataset.json"
        fields: dict = {}
        if cfg_file.exists():
            fields = json.loads(cfg_file.read_text(encoding="utf-8"))
        return cls(
            path=path,
            granularity=fields.get("granularity", "year"),
            missing_token=fields.get("missing_token", "-"),
            columns=tuple(fields.get("columns", _DEFAULT_COLUMNS)),
            add_inverses=bool(fields.get("add_inverses", False)),
        )


class TemporalKB:
    """Immutable fact store with train/valid/test folds and train-fold indexes.

    Index structures cover the train fold, which is the evidence store used by
    scoring; evaluation-time filtering over all folds lives in FilterIndex.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        folds: Mapping[str, Sequence[Fact]],
        granularity: str,
        has_inverses: bool = False,
    ):
        self.vocabulary = vocabulary
        self.folds = {name: list(folds.get(name, ())) for name in FOLD_NAMES}
        self.granularity = granularity
        self.has_inverses = has_inverses
        self._by_sro: dict | None = None
        self._by_subject: dict | None = None
        self._by_object: dict | None = None
        self._fold_arrays: dict[str, dict[str, np.ndarray]] = {}

    @property
    def train(self) -> list[Fact]:
        return self.folds["train"]

    @property
    def valid(self) -> list[Fact]:
        return self.folds["valid"]

    @property
    def test(self) -> list[Fact]:
        return self.folds["test"]

    @property
    def n_instants(self) -> int:
        return self.vocabulary.n_instants

    def by_sro(self) -> Mapping[tuple[int, int, int], list[TimeInterval]]:
        if self._by_sro is None:
            idx: dict = defaultdict(list)
            for f in self.train:
                idx[(f.subject, f.relation, f.object)].append(f.interval)
            self._by_sro = dict(idx)
        return self._by_sro

    def by_subject(self) -> Mapping[int, list[Fact]]:
        if self._by_subject is None:
            idx: dict = defaultdict(list)
            for f in self.train:
                idx[f.subject].append(f)
            self._by_subject = dict(idx)
        return self._by_subject

    def by_object(self) -> Mapping[int, list[Fact]]:
        if self._by_object is None:
            idx: dict = defaultdict(list)
            for f in self.train:
                idx[f.object].append(f)
            self._by_object = dict(idx)
        return self._by_object

    def asserted_at(self, s: int, r: int, o: int, t: int) -> bool:
        """True when some train fact (s, r, o, T) has t inside T."""
        return any(iv.contains(t) for iv in self.by_sro().get((s, r, o), ()))

    def clip_interval(self, interval: TimeInterval) -> TimeInterval | None:
        return interval.clip(0, self.n_instants - 1)

    def fold_arrays(self, fold: str) -> dict[str, np.ndarray]:
        """Dense id arrays (s, r, o, begin, end) for a fold; endpoints unclipped."""
        if fold not in self._fold_arrays:
            facts = self.folds[fold]
            self._fold_arrays[fold] = {
                "s": np.array([f.subject for f in facts], dtype=np.int64),
                "r": np.array([f.relation for f in facts], dtype=np.int64),
                "o": np.array([f.object for f in facts], dtype=np.int64),
                "begin": np.array([f.interval.begin for f in facts], dtype=np.int64),
                "end": np.array([f.interval.end for f in facts], dtype=np.int64),
            }
        return self._fold_arrays[fold]


def _fold_file(path: Path, fold: str) -> Path:
    return path / f"{fold}.txt"


def parse_dataset(config: DatasetConfig) -> TemporalKB:
    """Load train/valid/test files into a TemporalKB.

    Missing begin/end tokens map to the unbounded sentinels.  The vocabulary
    covers all three folds; the instant range spans every bounded label seen.
    """
    path = Path(config.path)
    raw: dict[str, list] = {}
    for fold in FOLD_NAMES:
        file = _fold_file(path, fold)
        if not file.exists():
            raise DatasetParseError(f"missing dataset file {file}")
        rows = []
        with open(file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != len(config.columns):
                    raise DatasetParseError(
                        f"{file.name}:{lineno}: expected {len(config.columns)} "
                        f"tab-separated columns, got {len(parts)}"
                    )
                rec = dict(zip(config.columns, parts))
                where = f"{file.name}:{lineno}"
                if "time" in config.columns:
                    b_label = e_label = _parse_endpoint(
                        rec["time"], config, where, allow_missing=False)
                else:
                    b_label = _parse_endpoint(rec["begin"], config, where, missing=NEG_UNBOUNDED)
                    e_label = _parse_endpoint(rec["end"], config, where, missing=POS_UNBOUNDED)
                if _is_bounded(b_label, e_label) and b_label > e_label:
                    raise DatasetParseError(f"{where}: begin {rec.get('begin')} after end {rec.get('end')}")
                rows.append((rec["subject"], rec["relation"], rec["object"], b_label, e_label))
        raw[fold] = rows

    entity_names: list[str] = []
    relation_names: list[str] = []
    ent_seen: dict[str, int] = {}
    rel_seen: dict[str, int] = {}
    bounded_labels: list[int] = []
    for fold in FOLD_NAMES:
        for subj, rel, obj, b, e in raw[fold]:
            for name in (subj, obj):
                if name not in ent_seen:
                    ent_seen[name] = len(entity_names)
                    entity_names.append(name)
            if rel not in rel_seen:
                rel_seen[rel] = len(relation_names)
                relation_names.append(rel)
            if b != NEG_UNBOUNDED:
                bounded_labels.append(b)
            if e != POS_UNBOUNDED:
                bounded_labels.append(e)
    if not bounded_labels:
        raise DatasetParseError("dataset contains no bounded time labels")

    vocab = Vocabulary(
        entity_names, relation_names, len(relation_names),
        config.granularity, min(bounded_labels), max(bounded_labels),
    )
    folds = {}
    for fold in FOLD_NAMES:
        facts = []
        for subj, rel, obj, b, e in raw[fold]:
            interval = TimeInterval(vocab.label_to_instant(b), vocab.label_to_instant(e))
            facts.append(Fact(ent_seen[subj], rel_seen[rel], ent_seen[obj], interval))
        folds[fold] = facts
    kb = TemporalKB(vocab, folds, config.granularity)
    if config.add_inverses:
        kb = add_inverse_facts(kb)
    return kb


def _parse_endpoint(token: str, config: DatasetConfig, where: str,
                    missing: int | None = None, allow_missing: bool = True) -> int:
    if token == config.missing_token:
        if not allow_missing or missing is None:
            raise DatasetParseError(f"{where}: missing time not allowed in instant column")
        return missing
    try:
        return parse_time_label(token, config.granularity)
    except TimeRangeError as exc:
        raise TimeRangeError(f"{where}: {exc}") from None
    except DatasetParseError as exc:
        raise DatasetParseError(f"{where}: {exc}") from None


def load_dataset(path: str | Path) -> TemporalKB:
    """Parse a dataset directory using its dataset.json declaration."""
    return parse_dataset(DatasetConfig.from_json(path))


def write_dataset(kb: TemporalKB, path: str | Path) -> None:
    """Serialize folds back to tab-separated files plus a dataset.json.

    Only non-augmented KBs round-trip; call before add_inverse_facts.
    """
    if kb.has_inverses:
        raise KbError("refusing to serialize an inverse-augmented KB")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    vocab = kb.vocabulary
    cfg = {
        "granularity": kb.granularity,
        "missing_token": "-",
        "columns": list(_DEFAULT_COLUMNS),
        "add_inverses": False,
    }
    (path / "dataset.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    for fold in FOLD_NAMES:
        with open(_fold_file(path, fold), "w", encoding="utf-8") as fh:
            for f in kb.folds[fold]:
                b, e = f.interval.begin, f.interval.end
                b_tok = "-" if b == NEG_UNBOUNDED else format_time_label(
                    vocab.instant_to_label(b), kb.granularity)
                e_tok = "-" if e == POS_UNBOUNDED else format_time_label(
                    vocab.instant_to_label(e), kb.granularity)
                fh.write("\t".join((
                    vocab.entity_names[f.subject],
                    vocab.relation_names[f.relation],
                    vocab.entity_names[f.object],
                    b_tok, e_tok,
                )) + "\n")


def add_inverse_facts(kb: TemporalKB) -> TemporalKB:
    """Return a new KB whose train fold also holds (o, r_inv, s, T) for every fact.

    Doubles the relation vocabulary; valid/test folds are left as stored and
    evaluated in both directions through the inverse relation ids.
    """
    if kb.has_inverses:
        raise KbError("inverse facts already added")
    vocab = kb.vocabulary.with_inverse_relations()
    n_base = vocab.n_base_relations
    train = list(kb.train)
    train.extend(
        Fact(f.object, f.relation + n_base, f.subject, f.interval) for f in kb.train
    )
    folds = {"train": train, "valid": list(kb.valid), "test": list(kb.test)}
    return TemporalKB(vocab, folds, kb.granularity, has_inverses=True)


def enumerate_instant_facts(fact: Fact, n_instants: int) -> list[tuple[int, int, int, int]]:
    """Expand a fact into (s, r, o, t) rows, clipping unbounded ends to the domain."""
    clipped = fact.interval.clip(0, n_instants - 1)
    if clipped is None:
        return []
    return [(fact.subject, fact.relation, fact.object, t)
            for t in range(clipped.begin, clipped.end + 1)]


def sample_instant(fact: Fact, n_instants: int, rng: np.random.Generator) -> int:
    """Draw one instant uniformly from the fact's domain-clipped interval."""
    clipped = fact.interval.clip(0, n_instants - 1)
    if clipped is None:
        raise KbError(f"fact interval {fact.interval} clips to empty domain")
    return int(rng.integers(clipped.begin, clipped.end + 1))
