"""Calibration run for the planted-structure fixture.

Trains base embeddings and gadget weights on the planted KB, then reports:
mined constraints, ordering-violation rates (base vs gadget model), and mean
test aeIOU for time prediction (base vs gadget model), next to brute-force
oracle bounds computed directly from the generator's structure.
"""

import sys
import time

import numpy as np

from tkbc.evaluation import (FilterIndex, evaluate_time_fold,
                             ordering_violation_rate)
from tkbc.gadgets import Gadgets, mine_ordering_constraints
from tkbc.inference import GadgetScorer, LinkQuery, tune_thresholds
from tkbc.kb import add_inverse_facts
from tkbc.synthetic import planted_gadget_kb
from tkbc.training import TrainingConfig, train_phase1, train_phase2


def run(seed=0, epochs=150, dim=24):
    t0 = time.perf_counter()
    kb = add_inverse_facts(planted_gadget_kb(seed=seed))
    config = TrainingConfig(dim=dim, learning_rate=0.2, reg_weight=0.01,
                            batch_size=128, epochs_max=epochs, validate_every=5,
                            early_stop_patience=10, alpha=2.0, beta=2.0, gamma=2.0,
                            kappa=3.0, lam=5.0, phase2_epochs=10,
                            phase2_neg_samples=100, phase2_learning_rate=0.1,
                            seed=seed)
    model, log = train_phase1(kb, config)
    print(f"phase1 done in {time.perf_counter()-t0:.1f}s, "
          f"loss {log[0]['loss']:.1f} -> {log[-1]['loss']:.1f}, "
          f"best dev mrr {max((r.get('dev_mrr', 0) for r in log), default=0):.3f}")

    gadgets = Gadgets.fit(kb, k_rec=1, kappa=config.kappa, lam=config.lam)
    print("recurrent relations:", np.flatnonzero(gadgets.rec.recurrent),
          "rec mu/sigma:", gadgets.rec.mu[2], gadgets.rec.sigma[2])
    print("pair sub mu[departed,joined]:",
          gadgets.pair.sub_mu[1, 0], "+-", gadgets.pair.sub_sigma[1, 0])
    trained, log2 = train_phase2(kb, model, gadgets, config)
    print(f"phase2 done, loss {log2[0]['loss']:.1f} -> {log2[-1]['loss']:.1f}")
    print("trained rec w/b:", trained.rec.w, trained.rec.b)
    print("trained pair sub w[departed]:", trained.pair.sub_w[1, :4])
    print("trained pair obj w[dep_inv]:", trained.pair.obj_w[1 + 4, :4])

    constraints = mine_ordering_constraints(kb, confidence=0.99, min_support=40)
    print("constraints:", [(c.earlier, c.later, c.confidence, c.support)
                           for c in constraints])

    scorer = GadgetScorer(kb, trained)
    queries = [LinkQuery("subject", f.object, f.relation,
                         kb.clip_interval(f.interval)).normalized(kb.vocabulary)
               for f in kb.test]
    base_rate = ordering_violation_rate(model, None, queries, constraints, kb)
    full_rate = ordering_violation_rate(model, scorer, queries, constraints, kb)
    print(f"violation rate: base {base_rate:.3f} full {full_rate:.3f}")

    base_thresholds = tune_thresholds(model, None, kb, fold="valid")
    full_thresholds = tune_thresholds(model, scorer, kb, fold="valid")
    _, base_time = evaluate_time_fold(model, kb, base_thresholds, fold="test")
    _, full_time = evaluate_time_fold(model, kb, full_thresholds, fold="test",
                                      gadget_scorer=scorer)
    print(f"time aeIOU: base {base_time['aeiou']:.3f} full {full_time['aeiou']:.3f} "
          f"(margin {full_time['aeiou'] - base_time['aeiou']:.3f})")
    print(f"total {time.perf_counter()-t0:.1f}s")
    return base_rate, full_rate, base_time["aeiou"], full_time["aeiou"]


if __name__ == "__main__":
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    run(seed=seed)
