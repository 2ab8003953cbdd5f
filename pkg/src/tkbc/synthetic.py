"""Synthetic temporal KB generators for tests, benchmarks and desk-scale runs.

Two families:

* planted_gadget_kb: a small KB with a hard-wired relation ordering (one
  relation follows another after a Gaussian gap) and a fixed-period recurring
  relation, used to probe whether the gap gadgets recover planted structure.

* shaped_corpus: a larger corpus imitating the shape of interval-based
  benchmark KBs (people with lifespans, organizations with activity windows,
  era-dependent memberships, year granularity).  Not real data; it stands in
  where licensed benchmark files are unavailable.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .kb import (Fact, TemporalKB, TimeInterval, Vocabulary, write_dataset)


def _build_kb(entities, relations, folds, min_label, max_label,
              granularity="year") -> TemporalKB:
    vocab = Vocabulary(entities, relations, len(relations), granularity,
                       min_label, max_label)
    return TemporalKB(vocab, folds, granularity)


def planted_gadget_kb(n_persons: int = 48, n_orgs: int = 6,
                      gap_mean: float = 30.0, gap_std: float = 2.0,
                      recur_period: int = 4, seed: int = 0) -> TemporalKB:
    """KB where `joined` precedes `departed` by ~N(gap_mean, gap_std) and
    `awarded` recurs every recur_period instants for half the persons.

    Entities: persons, orgs, 2 prizes and 4 cities.  Relations: joined,
    departed, awarded, residence.  Instant labels span 0..119.  Joins are in
    the train fold; departures split 30/30/40 across folds so most departure
    times are genuinely held out.
    """
    rng = np.random.default_rng(seed)
    persons = [f"P{i:03d}" for i in range(n_persons)]
    orgs = [f"G{i}" for i in range(n_orgs)]
    prizes = ["Z0", "Z1"]
    cities = ["C0", "C1", "C2", "C3"]
    entities = persons + orgs + prizes + cities
    relations = ["joined", "departed", "awarded", "residence"]
    eid = {name: i for i, name in enumerate(entities)}
    rid = {name: i for i, name in enumerate(relations)}

    train, valid, test = [], [], []

    def instant(t):
        return TimeInterval(int(t), int(t))

    for i, p in enumerate(persons):
        org = orgs[i % n_orgs]
        t1 = int(rng.integers(5, 76))
        gap = int(np.clip(np.rint(rng.normal(gap_mean, gap_std)),
                          gap_mean - 4 * gap_std, gap_mean + 4 * gap_std))
        t2 = t1 + gap
        train.append(Fact(eid[p], rid["joined"], eid[org], instant(t1)))
        departed = Fact(eid[p], rid["departed"], eid[org], instant(t2))
        bucket = i % 10
        if bucket < 3:
            train.append(departed)
        elif bucket < 6:
            valid.append(departed)
        else:
            test.append(departed)
        if i % 2 == 0:
            ta = int(rng.integers(10, 96))
            for k in range(3):
                train.append(Fact(eid[p], rid["awarded"], eid[prizes[0]],
                                  instant(ta + k * recur_period)))
            if i % 4 == 0:
                follow = Fact(eid[p], rid["awarded"], eid[prizes[0]],
                              instant(ta + 3 * recur_period))
                (valid if i % 8 == 0 else test).append(follow)
        city = cities[int(rng.integers(0, len(cities)))]
        train.append(Fact(eid[p], rid["residence"], eid[city],
                          instant(int(rng.integers(0, 120)))))

    # pin the instant domain to 0..119 regardless of sampling
    train.append(Fact(eid[persons[0]], rid["residence"], eid[cities[0]], instant(0)))
    train.append(Fact(eid[persons[1]], rid["residence"], eid[cities[1]], instant(119)))

    folds = {"train": train, "valid": valid, "test": test}
    return _build_kb(entities, relations, folds, 0, 119)


def shaped_corpus(n_persons: int = 3400, seed: int = 0,
                  year_range: tuple[int, int] = (1770, 2020)) -> TemporalKB:
    """Year-granularity corpus shaped like interval TKB benchmarks.

    Persons live inside an era; organizations, clubs and parties carry
    activity windows; memberships rotate across eras so the right object for a
    query depends on the query interval.  About 6 facts per person across 10
    relations, split 80/10/10 into folds.
    """
    rng = np.random.default_rng(seed)
    lo, hi = year_range
    span = hi - lo

    persons = [f"person_{i:05d}" for i in range(n_persons)]
    cities = [f"city_{i:03d}" for i in range(160)]
    unis = [f"university_{i:03d}" for i in range(120)]
    orgs = [f"org_{i:03d}" for i in range(240)]
    clubs = [f"club_{i:03d}" for i in range(100)]
    parties = [f"party_{i:02d}" for i in range(24)]
    prizes = [f"prize_{i:02d}" for i in range(60)]
    entities = persons + cities + unis + orgs + clubs + parties + prizes
    relations = ["wasBornIn", "diedIn", "graduatedFrom", "worksAt", "playsFor",
                 "isAffiliatedTo", "hasWonPrize", "livesIn", "isMarriedTo",
                 "foundedOrg"]
    eid = {name: i for i, name in enumerate(entities)}
    rid = {name: i for i, name in enumerate(relations)}

    def window(names, width):
        out = {}
        for name in names:
            start = int(rng.integers(lo, hi - width))
            out[name] = (start, start + width)
        return out

    org_win = window(orgs, 80)
    club_win = window(clubs, 60)
    party_win = window(parties, 120)

    def active(pool, wins, year):
        # deterministic candidate scan from a random offset keeps draws O(1)
        n = len(pool)
        start = int(rng.integers(0, n))
        for k in range(n):
            name = pool[(start + k) % n]
            w = wins[name]
            if w[0] <= year <= w[1]:
                return name
        return pool[start]

    facts = []

    def interval(b, e):
        # clamp to the year range, then shift into instant-id space
        b = max(lo, min(hi, int(b)))
        e = max(lo, min(hi, int(e)))
        if e < b:
            b, e = e, b
        return TimeInterval(b - lo, e - lo)

    for i, p in enumerate(persons):
        born = int(rng.integers(lo + 20, hi - 60))
        died = min(born + int(rng.integers(55, 90)), hi)
        birthplace = cities[int(rng.integers(0, 40)) if rng.random() < 0.5
                            else int(rng.integers(0, len(cities)))]
        facts.append(Fact(eid[p], rid["wasBornIn"], eid[birthplace],
                          interval(born, born)))
        if rng.random() < 0.75:
            facts.append(Fact(eid[p], rid["diedIn"],
                              eid[cities[int(rng.integers(0, len(cities)))]],
                              interval(died, died)))
        grad = born + int(rng.integers(20, 28))
        if rng.random() < 0.6:
            facts.append(Fact(eid[p], rid["graduatedFrom"],
                              eid[unis[int(rng.integers(0, len(unis)))]],
                              interval(grad, grad)))
        career_start = grad + int(rng.integers(0, 4))
        career_end = min(died - 2, career_start + int(rng.integers(20, 35)))
        # era-rotating memberships: consecutive sub-spans with distinct objects
        cursor = career_start
        kind = rng.random()
        while cursor < career_end - 4:
            length = int(rng.integers(4, 12))
            stop = min(cursor + length, career_end)
            if kind < 0.45:
                club = active(clubs, club_win, cursor)
                facts.append(Fact(eid[p], rid["playsFor"], eid[club],
                                  interval(cursor, stop)))
            elif kind < 0.8:
                org = active(orgs, org_win, cursor)
                facts.append(Fact(eid[p], rid["worksAt"], eid[org],
                                  interval(cursor, stop)))
            else:
                party = active(parties, party_win, cursor)
                facts.append(Fact(eid[p], rid["isAffiliatedTo"], eid[party],
                                  interval(cursor, stop)))
            cursor = stop + 1
        if rng.random() < 0.45:
            married = born + int(rng.integers(22, 40))
            spouse = persons[int(rng.integers(0, n_persons))]
            facts.append(Fact(eid[p], rid["isMarriedTo"], eid[spouse],
                              interval(married, min(married + int(rng.integers(5, 40)),
                                                    died))))
        if rng.random() < 0.35:
            t = career_start + int(rng.integers(2, 25))
            facts.append(Fact(eid[p], rid["hasWonPrize"],
                              eid[prizes[int(rng.integers(0, len(prizes)))]],
                              interval(t, t)))
            if rng.random() < 0.4:
                facts.append(Fact(eid[p], rid["hasWonPrize"],
                                  eid[prizes[int(rng.integers(0, len(prizes)))]],
                                  interval(t + int(rng.integers(3, 8)),
                                           t + int(rng.integers(3, 8)))))
        if rng.random() < 0.5:
            move = born + int(rng.integers(18, 45))
            facts.append(Fact(eid[p], rid["livesIn"],
                              eid[cities[int(rng.integers(0, len(cities)))]],
                              interval(move, min(move + int(rng.integers(5, 30)), died))))
        if rng.random() < 0.08:
            t = career_start + int(rng.integers(5, 20))
            facts.append(Fact(eid[p], rid["foundedOrg"],
                              eid[orgs[int(rng.integers(0, len(orgs)))]],
                              interval(t, t)))

    order = rng.permutation(len(facts))
    train, valid, test = [], [], []
    for pos, j in enumerate(order):
        bucket = pos % 10
        if bucket == 8:
            valid.append(facts[j])
        elif bucket == 9:
            test.append(facts[j])
        else:
            train.append(facts[j])
    folds = {"train": train, "valid": valid, "test": test}
    return _build_kb(entities, relations, folds, lo, hi)


def subsample_by_subject(kb: TemporalKB, fraction: float,
                         rng: np.random.Generator) -> TemporalKB:
    """Keep the facts of a random fraction of subject entities, then re-index.

    Subsampling by entity preserves per-entity fact density, unlike dropping
    facts uniformly.
    """
    subjects = sorted({f.subject for fold in kb.folds.values() for f in fold})
    keep_n = max(1, int(round(len(subjects) * fraction)))
    keep = set(rng.choice(np.asarray(subjects), size=keep_n, replace=False).tolist())

    old_names = kb.vocabulary.entity_names
    used: list[int] = []
    seen = set()
    survivors = {fold: [f for f in facts if f.subject in keep]
                 for fold, facts in kb.folds.items()}
    for fold in ("train", "valid", "test"):
        for f in survivors[fold]:
            for e in (f.subject, f.object):
                if e not in seen:
                    seen.add(e)
                    used.append(e)
    remap = {old: new for new, old in enumerate(used)}
    entities = [old_names[e] for e in used]
    folds = {fold: [Fact(remap[f.subject], f.relation, remap[f.object], f.interval)
                    for f in facts]
             for fold, facts in survivors.items()}
    vocab = kb.vocabulary
    new_vocab = Vocabulary(entities, list(vocab.relation_names),
                           vocab.n_base_relations, vocab.granularity,
                           vocab.min_label, vocab.max_label)
    return TemporalKB(new_vocab, folds, kb.granularity)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="write a synthetic dataset directory")
    parser.add_argument("--out", required=True)
    parser.add_argument("--kind", choices=("planted", "shaped"), default="planted")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--persons", type=int)
    args = parser.parse_args(argv)
    if args.kind == "planted":
        kb = planted_gadget_kb(seed=args.seed,
                               **({"n_persons": args.persons} if args.persons else {}))
    else:
        kb = shaped_corpus(seed=args.seed,
                           **({"n_persons": args.persons} if args.persons else {}))
    write_dataset(kb, Path(args.out))
    sizes = {fold: len(kb.folds[fold]) for fold in kb.folds}
    print(f"wrote {args.kind} dataset to {args.out}: {sizes}, "
          f"{kb.vocabulary.n_entities} entities, "
          f"{kb.vocabulary.n_relations} relations, {kb.n_instants} instants")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
