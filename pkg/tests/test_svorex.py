import json

import numpy as np
import pytest

import nestedrap as nr
from nestedrap.oracle import projection_check
from nestedrap.svorex import (
    OrdinalDataset,
    SvorexConfig,
    SvorexModel,
    TrainLog,
    WorkingSet,
    equal_frequency_labels,
    kernel_matrix,
    load_dataset,
    max_violation,
    predict,
    project_working_set,
    projection_instance,
    save_dataset,
    select_working_set,
    synthetic_dataset,
    train,
)


def dual_objective(K, alpha, alpha_star):
    beta = alpha_star - alpha
    return np.sum(alpha + alpha_star) - 0.5 * beta @ K @ beta


def monotone_1d(n=60, r=3, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-2, 2, n))
    return OrdinalDataset(x[:, None], equal_frequency_labels(x, r))


def tiny_binary():
    return OrdinalDataset([[0.0], [0.5], [2.0], [2.5]], [1, 1, 2, 2])


class TestDataset:
    def test_missing_class(self):
        with pytest.raises(ValueError):
            OrdinalDataset([[0], [1]], [1, 3])

    def test_equal_frequency(self):
        y = equal_frequency_labels(np.arange(100.0)[::-1], 5)
        np.testing.assert_array_equal(np.bincount(y)[1:], [20] * 5)
        assert y[0] == 5 and y[-1] == 1

    def test_synthetic(self):
        ds = synthetic_dataset(200, 5, 5, seed=0)
        assert ds.X.shape == (200, 5) and ds.r == 5
        np.testing.assert_allclose(ds.X.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(ds.X.std(axis=0), 1, atol=1e-12)

    def test_text_round_trip(self, tmp_path):
        ds = synthetic_dataset(30, 3, 3, seed=4)
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        np.testing.assert_allclose(back.X, ds.X, rtol=1e-11)
        np.testing.assert_array_equal(back.y, ds.y)


class TestKernel:
    def test_unit_diagonal(self):
        K = kernel_matrix(np.random.default_rng(0).normal(size=(20, 4)), 0.7)
        np.testing.assert_array_equal(np.diag(K), 1.0)
        np.testing.assert_allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() > -1e-10

    def test_zero_width(self):
        np.testing.assert_array_equal(kernel_matrix(np.eye(3) * 5, 0.0), np.ones((3, 3)))

    def test_orthogonal_unit_vectors(self):
        K = kernel_matrix(np.eye(2), 1.0)
        assert K[0, 1] == pytest.approx(np.exp(-2.0))


class TestGradient:
    def test_zero_model(self):
        ga, gs = SvorexModel(synthetic_dataset(40, 3, 4)).gradient()
        np.testing.assert_array_equal(ga, 1.0)
        np.testing.assert_array_equal(gs, 1.0)

    def test_single_alpha(self):
        ds = synthetic_dataset(40, 3, 4)
        model = SvorexModel(ds)
        i = int(np.flatnonzero(ds.y == 1)[0])
        alpha = np.zeros(len(ds))
        alpha[i] = 0.3
        model.set_duals(alpha, np.zeros(len(ds)))
        assert model.gradient()[0][i] == pytest.approx(0.7)

    def test_finite_differences(self):
        rng = np.random.default_rng(1)
        ds = synthetic_dataset(25, 3, 3, seed=1)
        model = SvorexModel(ds)
        a, s = rng.uniform(0, 10, (2, len(ds)))
        # the top class has no alpha and class 1 no alpha*
        a[ds.y == ds.r] = 0.0
        s[ds.y == 1] = 0.0
        model.set_duals(a, s)
        ga, gs = model.gradient()
        h = 1e-5
        for i in range(len(ds)):
            e = np.zeros(len(ds))
            e[i] = h
            fd_a = (dual_objective(model.K, a + e, s) - dual_objective(model.K, a - e, s)) / (2 * h)
            fd_s = (dual_objective(model.K, a, s + e) - dual_objective(model.K, a, s - e)) / (2 * h)
            assert ga[i] == pytest.approx(fd_a, abs=1e-6)
            assert gs[i] == pytest.approx(fd_s, abs=1e-6)

    def test_objective_matches_formula(self):
        ds = synthetic_dataset(30, 3, 3, seed=2)
        model = SvorexModel(ds)
        rng = np.random.default_rng(2)
        a, s = rng.uniform(0, 1, (2, len(ds)))
        a[ds.y == ds.r] = 0.0
        s[ds.y == 1] = 0.0
        model.set_duals(a, s)
        assert model.objective() == pytest.approx(dual_objective(model.K, a, s))


class TestSelection:
    def test_zero_model_has_violations(self):
        model = SvorexModel(synthetic_dataset(40, 3, 4))
        ws = select_working_set(model)
        assert len(ws) == 2 and len(ws.pairs) == 1
        assert ws.violations[0] == pytest.approx(max_violation(model))

    def test_pairs_are_distinct(self):
        model = SvorexModel(synthetic_dataset(40, 3, 4))
        ws = select_working_set(model, 10)
        assert len(ws) == 10
        assert len(np.unique(ws.positions)) == 10
        assert all(v1 >= v2 for v1, v2 in zip(ws.violations, ws.violations[1:]))

    def test_converged_model(self):
        model = train(monotone_1d(), SvorexConfig(n_ws=4))
        assert len(select_working_set(model)) == 0
        assert max_violation(model) <= model.config.kkt_tol


class TestProjection:
    def test_feasible_target_unchanged(self):
        model = SvorexModel(tiny_binary())
        ws = WorkingSet(np.arange(4))
        np.testing.assert_allclose(project_working_set(model, ws, np.array([1.0, 1.0, -1.0, -1.0])),
                                   [1, 1, -1, -1], atol=1e-12)

    def test_uniform_shift_onto_total(self):
        model = SvorexModel(tiny_binary())
        ws = WorkingSet(np.arange(4))
        x = project_working_set(model, ws, np.array([1.0, 2.0, -0.5, -0.5]))
        np.testing.assert_allclose(x, [0.5, 1.5, -1.0, -1.0], atol=1e-12)

    def test_random_targets_pass_oracle(self):
        rng = np.random.default_rng(3)
        ds = synthetic_dataset(40, 3, 4, seed=3)
        model = SvorexModel(ds)
        for _ in range(20):
            ws = select_working_set(model, 6)
            pos = ws.positions
            target = model.u[pos] + rng.normal(0, 3, len(pos))
            x = project_working_set(model, ws, target)
            inst = projection_instance(model, ws, target)
            assert projection_check(inst, target, x, samples=1000, tol=1e-8, rng=0)
            model.u[pos] = x
            model.kb = model.K @ model.beta
            assert model.feasibility_residual() <= 1e-9


class TestTrain:
    def test_single_class(self):
        ds = OrdinalDataset(np.zeros((5, 2)), np.ones(5))
        model = train(ds)
        assert model.selections == 0 and model.objective() == 0
        np.testing.assert_array_equal(predict(model), 1)

    def test_one_dimensional_monotone(self):
        ds = monotone_1d()
        log = TrainLog()
        model = train(ds, SvorexConfig(), log)
        assert max(log.residuals) <= 1e-9
        assert np.all(model.prefix_slack()[:-1] >= -1e-9)
        assert np.all(np.diff(model.thresholds) >= 0)
        assert np.mean(predict(model) == ds.y) >= 0.9

    def test_working_set_sizes_agree(self):
        ds = monotone_1d()
        objs = [train(ds, SvorexConfig(n_ws=k)).objective() for k in (2, 6)]
        assert objs[0] == pytest.approx(objs[1], rel=1e-3)

    def test_iteration_cap(self):
        with pytest.raises(nr.IterationLimitExceeded) as err:
            train(synthetic_dataset(60, 3, 3), SvorexConfig(max_iter=2))
        assert err.value.model is not None and err.value.model.selections == 2


class TestPredict:
    def test_zero_model(self):
        model = SvorexModel(synthetic_dataset(40, 3, 4))
        np.testing.assert_array_equal(predict(model), 1)

    def test_training_accuracy(self):
        ds = synthetic_dataset(120, 3, 3, noise=0.0, seed=5)
        model = train(ds, SvorexConfig(n_ws=6))
        assert np.mean(predict(model) != ds.y) < 0.1

    def test_monotone_in_feature(self):
        ds = monotone_1d()
        model = train(ds, SvorexConfig(n_ws=6))
        grid = np.linspace(-2, 2, 200)[:, None]
        assert np.all(np.diff(predict(model, grid)) >= 0)

    def test_dump_round_trip(self):
        ds = monotone_1d()
        model = train(ds, SvorexConfig(n_ws=6))
        back = SvorexModel.from_dict(json.loads(model.dumps()), ds)
        np.testing.assert_array_equal(back.alpha, model.alpha)
        np.testing.assert_array_equal(back.thresholds, model.thresholds)
        np.testing.assert_array_equal(predict(back), predict(model))
