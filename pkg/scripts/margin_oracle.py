"""Brute-force oracle bounds for the planted fixture's time-prediction margin.

Computes, without any learned model:
  * gap-oracle: predict [t_join + mean-train-gap] for each held-out departure
    (the information the pair gadget can exploit);
  * period-oracle: predict [last-known-occurrence + mean-train-period] for each
    held-out recurrence follow-up (the information the recurrence gadget can
    exploit);
  * constant-oracle: the single interval maximizing mean aeIOU on the train
    departures / recurrences, evaluated on the held-out queries (the best any
    time-agnostic constant predictor can do).

The difference between the structure-aware oracles and the constant oracle
bounds the achievable gadget-over-base margin; the acceptance suite freezes a
conservative fraction of it.
"""

import numpy as np

from tkbc.evaluation import metric_aeiou
from tkbc.kb import TimeInterval
from tkbc.synthetic import planted_gadget_kb


def best_constant_interval(train_golds, n_instants):
    """Exhaustive search for the constant interval with best mean train aeIOU."""
    best = (None, -1.0)
    for a in range(n_instants):
        for b in range(a, n_instants):
            pred = TimeInterval(a, b)
            score = float(np.mean([metric_aeiou(g, pred) for g in train_golds]))
            if score > best[1]:
                best = (pred, score)
    return best[0]


def main(seed=0):
    kb = planted_gadget_kb(seed=seed)
    joined = {}
    for f in kb.train:
        if f.relation == 0:
            joined[f.subject] = f.interval.begin
    train_dep = [f for f in kb.train if f.relation == 1]
    test_dep = [f for f in kb.test if f.relation == 1]
    gaps = [f.interval.begin - joined[f.subject] for f in train_dep]
    mean_gap = int(round(float(np.mean(gaps))))

    gap_scores = []
    for f in test_dep:
        pred_t = joined[f.subject] + mean_gap
        gap_scores.append(metric_aeiou(f.interval, TimeInterval(pred_t, pred_t)))

    const = best_constant_interval([f.interval for f in train_dep], kb.n_instants)
    const_scores = [metric_aeiou(f.interval, const) for f in test_dep]

    awarded_train = {}
    for f in kb.train:
        if f.relation == 2:
            awarded_train.setdefault(f.subject, []).append(f.interval.begin)
    periods = []
    for times in awarded_train.values():
        ts = sorted(set(times))
        periods.extend(b - a for a, b in zip(ts, ts[1:]))
    mean_period = int(round(float(np.mean(periods))))
    test_aw = [f for f in kb.test if f.relation == 2]
    period_scores = []
    const_aw = best_constant_interval(
        [f.interval for f in kb.train if f.relation == 2], kb.n_instants)
    const_aw_scores = [metric_aeiou(f.interval, const_aw) for f in test_aw]
    for f in test_aw:
        pred_t = max(awarded_train[f.subject]) + mean_period
        period_scores.append(metric_aeiou(f.interval, TimeInterval(pred_t, pred_t)))

    n = len(test_dep) + len(test_aw)
    oracle = (sum(gap_scores) + sum(period_scores)) / n
    const_mean = (sum(const_scores) + sum(const_aw_scores)) / n
    print(f"seed {seed}: {len(test_dep)} departure + {len(test_aw)} recurrence queries")
    print(f"  gap-oracle mean aeIOU      {np.mean(gap_scores):.3f} (mean gap {mean_gap})")
    print(f"  period-oracle mean aeIOU   {np.mean(period_scores):.3f} (period {mean_period})")
    print(f"  constant-oracle mean aeIOU {const_mean:.3f} "
          f"(dep {const}, awarded {const_aw})")
    print(f"  structure-aware combined   {oracle:.3f}")
    print(f"  oracle margin              {oracle - const_mean:.3f}")
    return oracle - const_mean


if __name__ == "__main__":
    import sys

    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
