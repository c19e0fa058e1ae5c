"""Nuisance learners: regressions, propensities, simplex-weighted stacks."""

import numpy as np
import pytest

from seqdr.numerics import DomainError
from seqdr.nuisance import (
    LearnerSpec,
    fit_ensemble,
    fit_outcome,
    fit_propensity,
    project_simplex,
)
from seqdr.splitting import NotReady


class TestFitOutcome:
    def test_linear_interpolates_exact_line(self):
        x = np.arange(10.0)[:, None]
        y = 2.0 * x[:, 0] + 1.0
        pred = fit_outcome(x, y, LearnerSpec("linear"))
        assert float(pred(np.array([[3.0]]))[0]) == pytest.approx(7.0, abs=1e-8)

    def test_mean_only(self):
        pred = fit_outcome(np.zeros((2, 1)), np.array([1.0, 3.0]),
                           LearnerSpec("mean_only"))
        assert float(pred(np.array([[123.0]]))[0]) == pytest.approx(2.0)

    def test_empty_arm_not_ready(self):
        with pytest.raises(NotReady):
            fit_outcome(np.zeros((0, 2)), np.array([]), LearnerSpec("linear"))

    def test_knn_recovers_local_structure(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, (2000, 1))
        y = x[:, 0] ** 2
        pred = fit_outcome(x, y, LearnerSpec("knn", k=10))
        got = pred(np.array([[1.0], [0.0]]))
        assert abs(got[0] - 1.0) < 0.1
        assert abs(got[1] - 0.0) < 0.1

    def test_knn_with_tiny_sample_degrades_to_mean(self):
        x = np.array([[0.0], [1.0], [2.0]])
        y = np.array([1.0, 2.0, 3.0])
        pred = fit_outcome(x, y, LearnerSpec("knn", k=10))
        assert float(pred(np.array([[5.0]]))[0]) == pytest.approx(2.0)

    def test_predictors_are_pure(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((50, 2))
        y = rng.standard_normal(50)
        pred = fit_outcome(x, y, LearnerSpec("linear"))
        q = rng.standard_normal((5, 2))
        assert np.array_equal(pred(q), pred(q))

    def test_logistic_rejected_for_regression(self):
        with pytest.raises(DomainError):
            fit_outcome(np.zeros((4, 1)), np.ones(4), LearnerSpec("logistic"))

    def test_knn_k1_returns_training_point_exactly(self):
        x = np.array([[0.0], [1.0], [2.5]])
        y = np.array([4.0, -1.0, 9.0])
        pred = fit_outcome(x, y, LearnerSpec("knn", k=1))
        assert float(pred(np.array([[1.0]]))[0]) == -1.0

    def test_spline_recovers_quadratic(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((800, 1))
        y = 1.0 - x[:, 0] ** 2 + 0.1 * rng.standard_normal(800)
        pred = fit_outcome(x, y, LearnerSpec("spline"))
        got = pred(np.array([[0.0], [1.5]]))
        assert abs(got[0] - 1.0) < 0.05
        assert abs(got[1] - (1.0 - 2.25)) < 0.1

    def test_spline_recovers_kink(self):
        # hinge features capture |x|, which no global polynomial of the
        # raw coordinates matches
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2000, 1))
        y = 3.0 * np.abs(x[:, 0]) + 0.1 * rng.standard_normal(2000)
        pred = fit_outcome(x, y, LearnerSpec("spline"))
        got = pred(np.array([[-1.0], [0.0], [1.0]]))
        assert abs(got[0] - 3.0) < 0.2
        assert abs(got[1]) < 0.2
        assert abs(got[2] - 3.0) < 0.2


class TestFitPropensity:
    def test_balanced_labels_near_half(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2000, 3))
        labels = np.tile([0, 1], 1000)
        pred = fit_propensity(x, labels, LearnerSpec("logistic"))
        at_mean = float(pred(x.mean(axis=0)[None, :])[0])
        assert abs(at_mean - 0.5) < 0.05

    def test_clipping_contract(self):
        x = np.linspace(-5, 5, 200)[:, None]
        labels = (x[:, 0] > 0).astype(float)
        pred = fit_propensity(x, labels, LearnerSpec("logistic"))
        out = pred(np.array([[-100.0], [100.0]]))
        assert np.all(out >= 0.01) and np.all(out <= 0.99)

    def test_separable_data_stays_finite(self):
        x = np.concatenate([np.full(30, -1.0), np.full(30, 1.0)])[:, None]
        labels = np.concatenate([np.zeros(30), np.ones(30)])
        pred = fit_propensity(x, labels, LearnerSpec("logistic"))
        out = pred(x)
        assert np.all(np.isfinite(out))
        assert np.all((out >= 0.01) & (out <= 0.99))

    def test_single_class_not_ready(self):
        with pytest.raises(NotReady):
            fit_propensity(np.zeros((5, 1)), np.ones(5), LearnerSpec("logistic"))

    def test_linear_rejected_for_propensity(self):
        with pytest.raises(DomainError):
            fit_propensity(np.zeros((4, 1)), np.array([0, 1, 0, 1]),
                           LearnerSpec("linear"))

    def test_spline_propensity_tracks_smooth_score(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((3000, 1))
        p_true = 0.2 + 0.6 / (1.0 + np.exp(x[:, 0] ** 2 - 1.0))
        labels = (rng.random(3000) < p_true).astype(float)
        pred = fit_propensity(x, labels, LearnerSpec("spline"))
        got = pred(x)
        assert np.sqrt(np.mean((got - p_true) ** 2)) < 0.1


class TestProjectSimplex:
    def test_already_on_simplex(self):
        v = np.array([0.2, 0.3, 0.5])
        assert np.allclose(project_simplex(v), v)

    def test_contract_fuzz(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            v = rng.standard_normal(rng.integers(1, 8)) * 10
            p = project_simplex(v)
            assert p.sum() == pytest.approx(1.0, abs=1e-8)
            assert np.all(p >= -1e-10)

    def test_matches_quadratic_program_oracle(self):
        # tiny dimension: brute-force the projection on a fine simplex grid
        v = np.array([0.9, 0.4, -0.2])
        p = project_simplex(v)
        grid = np.linspace(0, 1, 201)
        best, best_d = None, np.inf
        for a in grid:
            for b in grid:
                c = 1.0 - a - b
                if c < 0:
                    continue
                w = np.array([a, b, c])
                d = float(np.sum((w - v) ** 2))
                if d < best_d:
                    best, best_d = w, d
        assert np.allclose(p, best, atol=1e-2)


class TestFitEnsemble:
    def test_single_candidate_unit_weight(self):
        x = np.arange(20.0)[:, None]
        y = x[:, 0] * 3.0
        pred, w = fit_ensemble(x, y, (LearnerSpec("linear"),))
        assert np.allclose(w, [1.0])
        assert float(pred(np.array([[4.0]]))[0]) == pytest.approx(12.0, abs=1e-6)

    def test_weights_on_simplex(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((200, 2))
        y = x[:, 0] + rng.standard_normal(200)
        spec = LearnerSpec("ensemble")
        pred, w = fit_ensemble(x, y, spec.resolved_candidates("outcome"), spec)
        assert w.sum() == pytest.approx(1.0, abs=1e-8)
        assert np.all(w >= -1e-10)

    def test_no_regret_against_vertices(self):
        # the stack's holdout loss never exceeds the best single candidate
        rng = np.random.default_rng(5)
        x = rng.standard_normal((400, 3))
        y = 1.0 - x[:, 0] ** 2 + 0.5 * rng.standard_normal(400)
        spec = LearnerSpec("ensemble")
        cands = spec.resolved_candidates("outcome")
        pred, w = fit_ensemble(x, y, cands, spec)
        n = y.size
        split = int(np.floor(0.8 * n))
        x_fit, y_fit = x[:split], y[:split]
        x_val, y_val = x[split:], y[split:]
        stack_loss = float(np.mean((pred(x_val) - y_val) ** 2))
        for cand in cands:
            single = fit_outcome(x_fit, y_fit, cand)
            loss = float(np.mean((single(x_val) - y_val) ** 2))
            assert stack_loss <= loss + 1e-10

    def test_favors_correct_model(self):
        # data from an exact linear model: the linear candidate should
        # carry nearly all the weight
        rng = np.random.default_rng(6)
        x = rng.standard_normal((500, 2))
        y = 2.0 * x[:, 0] - x[:, 1] + 0.01 * rng.standard_normal(500)
        spec = LearnerSpec("ensemble")
        cands = (LearnerSpec("mean_only"), LearnerSpec("linear"),
                 LearnerSpec("knn"))
        _, w = fit_ensemble(x, y, cands, spec)
        assert w[1] > 0.9  # (mean_only, linear, knn) candidate order

    def test_default_candidates_include_spline(self):
        kinds = [c.kind for c in
                 LearnerSpec("ensemble").resolved_candidates("outcome")]
        assert kinds == ["mean_only", "linear", "spline", "knn"]
        kinds = [c.kind for c in
                 LearnerSpec("ensemble").resolved_candidates("propensity")]
        assert kinds == ["mean_only", "logistic", "spline", "knn"]

    def test_too_small_not_ready(self):
        with pytest.raises(NotReady):
            fit_ensemble(np.zeros((6, 1)), np.zeros(6),
                         LearnerSpec("ensemble").resolved_candidates("outcome"))

    def test_no_candidates_domain_error(self):
        with pytest.raises(DomainError):
            fit_ensemble(np.zeros((30, 1)), np.zeros(30), ())

    def test_propensity_stack_is_probability(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((300, 2))
        labels = (rng.random(300) < 0.5).astype(float)
        pred = fit_propensity(x, labels, LearnerSpec("ensemble"))
        out = pred(x)
        assert np.all((out >= 0.01) & (out <= 0.99))
