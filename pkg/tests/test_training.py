"""Loss values, closed-form gradients vs finite differences, and the two phases."""

import math

import numpy as np
import pytest

from tkbc.gadgets import Gadgets
from tkbc.kb import add_inverse_facts
from tkbc.scoring import ModelParams
from tkbc.synthetic import planted_gadget_kb
from tkbc.training import (TrainingConfig, TrainingError, adagrad_step,
                           init_optimizer, l2_batch_regularizer,
                           loss_instant_batch, temporal_smoothing_penalty,
                           train_phase1, train_phase2)


def toy_model(n_ent=4, n_rel=2, n_time=3, dim=2, seed=0, std=0.5,
              alpha=5.0, beta=5.0, gamma=5.0):
    rng = np.random.default_rng(seed)
    return ModelParams.init_random(n_ent, n_rel, n_time, dim, rng, std=std,
                                   alpha=alpha, beta=beta, gamma=gamma)


BATCH = (np.array([0, 1]), np.array([0, 1]), np.array([1, 2]), np.array([0, 2]))


def fd_gradients(model, fn, step=1e-3):
    """Central finite differences of fn() w.r.t. every scalar parameter."""
    grads = {}
    for name, arr in model.arrays().items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn()
            flat[i] = orig - step
            lo = fn()
            flat[i] = orig
            g.ravel()[i] = (hi - lo) / (2 * step)
        grads[name] = g
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        a = analytic[name]
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestLossValues:
    def test_uniform_softmax_loss_for_zero_embeddings(self):
        m = toy_model(std=0.0)
        batch = (np.array([0]), np.array([0]), np.array([1]), np.array([0]))
        loss, _ = loss_instant_batch(m, *batch)
        assert loss == pytest.approx(2 * math.log(4) + math.log(3), rel=1e-12)

    def test_duplicated_example_doubles_loss(self):
        m = toy_model(seed=3)
        single = (np.array([0]), np.array([1]), np.array([2]), np.array([1]))
        double = tuple(np.repeat(a, 2) for a in single)
        l1, _ = loss_instant_batch(m, *single)
        l2, _ = loss_instant_batch(m, *double)
        assert l2 == pytest.approx(2 * l1, rel=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(TrainingError):
            loss_instant_batch(toy_model(), np.array([], dtype=int),
                               np.array([], dtype=int), np.array([], dtype=int),
                               np.array([], dtype=int))

    def test_softmax_rows_sum_to_one(self):
        from tkbc.training import _nll_rows

        rng = np.random.default_rng(0)
        scores = rng.normal(scale=30, size=(8, 50))
        _, w = _nll_rows(scores, np.zeros(8, dtype=int))
        # weights are softmax minus one-hot: rows must sum to zero
        np.testing.assert_allclose(w.sum(axis=1), 0.0, atol=1e-6)

    def test_extreme_scores_stay_finite(self):
        m = toy_model(std=40.0)  # produces scores in the thousands
        loss, grads = loss_instant_batch(m, *BATCH)
        assert np.isfinite(loss)
        assert all(np.all(np.isfinite(g)) for g in grads.values())


class TestGradients:
    def test_loss_gradients_match_finite_differences(self):
        m = toy_model(seed=1)
        _, analytic = loss_instant_batch(m, *BATCH)
        numeric = fd_gradients(m, lambda: loss_instant_batch(m, *BATCH)[0])
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_loss_gradients_without_time_terms(self):
        m = toy_model(seed=2, alpha=0.0, beta=0.0, gamma=0.0)
        _, analytic = loss_instant_batch(m, *BATCH)
        numeric = fd_gradients(m, lambda: loss_instant_batch(m, *BATCH)[0])
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_l2_gradients_match_finite_differences(self):
        m = toy_model(seed=4)
        _, analytic = l2_batch_regularizer(m, *BATCH, reg_weight=0.03)
        numeric = fd_gradients(
            m, lambda: l2_batch_regularizer(m, *BATCH, reg_weight=0.03)[0])
        assert max_rel_error(analytic, numeric) <= 1e-4

    def test_smoothing_gradients_match_finite_differences(self):
        m = toy_model(seed=5)
        _, analytic = temporal_smoothing_penalty(m, 0.7)
        numeric = fd_gradients(m, lambda: temporal_smoothing_penalty(m, 0.7)[0])
        assert max_rel_error(analytic, numeric) <= 1e-4


class TestRegularizers:
    def test_l2_single_unit_norm_embedding(self):
        m = toy_model(std=0.0)
        m.ent_re[0, 0] = 1.0
        batch = (np.array([0]), np.array([0]), np.array([0]), np.array([0]))
        penalty, _ = l2_batch_regularizer(m, *batch, reg_weight=0.03)
        assert penalty == pytest.approx(0.03)

    def test_untouched_embeddings_get_zero_gradient(self):
        m = toy_model(seed=6)
        batch = (np.array([0]), np.array([0]), np.array([1]), np.array([0]))
        _, grads = l2_batch_regularizer(m, *batch, reg_weight=0.1)
        assert np.all(grads["ent_re"][2:] == 0.0)
        assert np.all(grads["rel_so_re"][1:] == 0.0)
        assert np.all(grads["time_re"][1:] == 0.0)

    def test_repeated_rows_regularized_once(self):
        m = toy_model(seed=7)
        once = (np.array([0]), np.array([0]), np.array([1]), np.array([0]))
        twice = tuple(np.repeat(a, 2) for a in once)
        p1, _ = l2_batch_regularizer(m, *once, reg_weight=0.5)
        p2, _ = l2_batch_regularizer(m, *twice, reg_weight=0.5)
        assert p1 == pytest.approx(p2)

    def test_smoothing_zero_for_identical_rows(self):
        m = toy_model(std=0.0)
        assert temporal_smoothing_penalty(m, 1.0)[0] == 0.0

    def test_smoothing_unit_difference(self):
        m = toy_model(std=0.0, n_time=2)
        m.time_re[1, 0] = 1.0
        penalty, _ = temporal_smoothing_penalty(m, 1.0)
        assert penalty == pytest.approx(1.0)

    def test_smoothing_weight_zero(self):
        m = toy_model(seed=8)
        assert temporal_smoothing_penalty(m, 0.0)[0] == 0.0


class TestAdagrad:
    def test_first_step_magnitude(self):
        params = {"w": np.array([1.0])}
        state = init_optimizer(params)
        adagrad_step(params, state, {"w": np.array([1.0])}, lr=0.1)
        assert params["w"][0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8))

    def test_zero_gradient_is_noop(self):
        params = {"w": np.array([2.5])}
        state = init_optimizer(params)
        adagrad_step(params, state, {"w": np.array([0.0])}, lr=0.1)
        assert params["w"][0] == 2.5
        assert state["w"][0] == 0.0

    def test_second_identical_step_shrinks(self):
        params = {"w": np.array([0.0])}
        state = init_optimizer(params)
        adagrad_step(params, state, {"w": np.array([1.0])}, lr=0.1)
        first = -params["w"][0]
        adagrad_step(params, state, {"w": np.array([1.0])}, lr=0.1)
        second = -params["w"][0] - first
        assert second == pytest.approx(0.1 / math.sqrt(2.0), rel=1e-6)

    def test_accumulators_never_decrease(self):
        rng = np.random.default_rng(9)
        params = {"w": rng.normal(size=8)}
        state = init_optimizer(params)
        prev = state["w"].copy()
        for _ in range(20):
            adagrad_step(params, state, {"w": rng.normal(size=8)}, lr=0.05)
            assert np.all(state["w"] >= prev)
            prev = state["w"].copy()


def small_config(**kw):
    defaults = dict(dim=8, learning_rate=0.2, reg_weight=0.01, batch_size=64,
                    epochs_max=40, validate_every=5, early_stop_patience=4,
                    alpha=2.0, beta=2.0, gamma=2.0, kappa=3.0, lam=5.0,
                    phase2_neg_samples=40, phase2_epochs=4, seed=7)
    defaults.update(kw)
    return TrainingConfig(**defaults)


@pytest.fixture(scope="module")
def small_kb():
    return add_inverse_facts(planted_gadget_kb(n_persons=20, n_orgs=4, seed=1))


class TestPhase1:
    def test_zero_learning_rate_keeps_model(self, small_kb):
        config = small_config(learning_rate=0.0, epochs_max=2, reg_weight=0.0)
        rng = np.random.default_rng(config.seed)
        init = ModelParams.init_random(
            small_kb.vocabulary.n_entities, small_kb.vocabulary.n_relations,
            small_kb.n_instants, config.dim, np.random.default_rng(config.seed),
            std=config.init_std, alpha=config.alpha, beta=config.beta,
            gamma=config.gamma)
        model, _ = train_phase1(small_kb, config, rng=rng)
        for name, arr in model.arrays().items():
            np.testing.assert_array_equal(arr, init.arrays()[name])

    def test_seeded_runs_are_bit_identical(self, small_kb):
        config = small_config(epochs_max=6)
        m1, log1 = train_phase1(small_kb, config)
        m2, log2 = train_phase1(small_kb, config)
        for name, arr in m1.arrays().items():
            np.testing.assert_array_equal(arr, m2.arrays()[name])
        assert [r["loss"] for r in log1] == [r["loss"] for r in log2]

    def test_loss_decreases_and_beats_random_ranking(self, small_kb):
        from tkbc.evaluation import FilterIndex
        from tkbc.training import quick_dev_mrr

        config = small_config(epochs_max=60)
        model, log = train_phase1(small_kb, config)
        assert log[-1]["loss"] < log[0]["loss"]
        index = FilterIndex(small_kb)
        trained_mrr = quick_dev_mrr(model, small_kb, index)
        # random-model baseline: expected MRR of shuffled scores
        rng = np.random.default_rng(0)
        random_model = ModelParams.init_random(
            small_kb.vocabulary.n_entities, small_kb.vocabulary.n_relations,
            small_kb.n_instants, config.dim, rng, std=0.05,
            alpha=config.alpha, beta=config.beta, gamma=config.gamma)
        random_mrr = quick_dev_mrr(random_model, small_kb, index)
        assert trained_mrr > random_mrr

    def test_requires_inverse_augmentation(self):
        kb = planted_gadget_kb(n_persons=8, seed=2)
        with pytest.raises(TrainingError):
            train_phase1(kb, small_config(epochs_max=1))


@pytest.fixture(scope="module")
def trained(small_kb):
    config = small_config(epochs_max=30)
    model, _ = train_phase1(small_kb, config)
    gadgets = Gadgets.fit(small_kb, k_rec=1, kappa=config.kappa, lam=config.lam)
    return small_kb, model, gadgets, config


class TestPhase2:

    def test_zero_epochs_keeps_gadgets(self, trained):
        kb, model, gadgets, config = trained
        cfg = small_config(phase2_epochs=0)
        out, _ = train_phase2(kb, model, gadgets, cfg)
        for name, arr in out.trainable().items():
            np.testing.assert_array_equal(arr, gadgets.trainable()[name])

    def test_embeddings_frozen_bit_for_bit(self, trained):
        kb, model, gadgets, config = trained
        before = {k: v.copy() for k, v in model.arrays().items()}
        train_phase2(kb, model, gadgets, config)
        for name, arr in model.arrays().items():
            np.testing.assert_array_equal(arr, before[name])

    def test_zero_mixing_weights_give_zero_gradients(self, trained):
        kb, model, gadgets, config = trained
        silent = Gadgets.fit(kb, kappa=0.0, lam=0.0)
        out, _ = train_phase2(kb, model, silent, small_config(phase2_epochs=2))
        for name, arr in out.trainable().items():
            np.testing.assert_array_equal(arr, silent.trainable()[name])

    def test_training_moves_gadget_weights(self, trained):
        kb, model, gadgets, config = trained
        out, log = train_phase2(kb, model, gadgets, config)
        moved = any(not np.allclose(out.trainable()[name], gadgets.trainable()[name])
                    for name in out.trainable())
        assert moved
        assert np.isfinite(log[-1]["loss"])
