import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushpull import objectives
from pushpull.objectives import (
    check_lipschitz_and_convexity,
    contraction_factor,
    load_problem,
    make_sensor_fusion,
    optimum,
    save_problem,
    sensor_fusion_from_arrays,
)


class TestSensorFusion:

    def test_scalar_example(self):
        f = sensor_fusion_from_arrays(H=[[[1.0]]], z=[[0.0]], lambdas=[1.0])
        np.testing.assert_allclose(f.grad(0, np.array([3.0])), [12.0])
        assert f.value(0, np.array([3.0])) == pytest.approx(18.0)
        assert (f.L, f.mu) == pytest.approx((4.0, 4.0))
        np.testing.assert_allclose(optimum(f), [0.0])

    @pytest.mark.parametrize("lam", [0.01, 0.5])
    def test_generated_smoothness_is_normalized(self, lam):
        f = make_sensor_fusion(n=6, p=4, s=2, lam=lam, seed=3)
        assert f.L == pytest.approx(1.0 + 2.0 * lam, rel=1e-12)
        eigs = np.linalg.eigvalsh(f.hessians)
        np.testing.assert_allclose(eigs[:, -1], 1.0 + 2.0 * lam, rtol=1e-12)
        assert 2.0 * lam <= f.mu <= f.L

    def test_seeded_generation_is_reproducible(self):
        a = make_sensor_fusion(n=4, p=3, s=1, lam=0.1, seed=9)
        b = make_sensor_fusion(n=4, p=3, s=1, lam=0.1, seed=9)
        np.testing.assert_array_equal(a.H, b.H)
        np.testing.assert_array_equal(a.z, b.z)
        assert a.seed == 9

    def test_optimum_zeroes_the_summed_gradient(self):
        f = make_sensor_fusion(n=5, p=4, s=2, lam=0.05, seed=2)
        x_star = optimum(f)
        grads = f.grad_all(np.tile(x_star, (f.n, 1)))
        np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(f.average_grad(x_star), 0.0, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        f = make_sensor_fusion(n=3, p=4, s=2, lam=0.1, seed=5)
        x = np.random.Generator(np.random.PCG64(0)).standard_normal(f.p)
        h = 1e-6
        for i in range(f.n):
            numeric = np.array(
                [(f.value(i, x + h * e) - f.value(i, x - h * e)) / (2 * h) for e in np.eye(f.p)]
            )
            np.testing.assert_allclose(f.grad(i, x), numeric, rtol=1e-6, atol=1e-7)

    def test_batched_and_single_agent_agree(self):
        f = make_sensor_fusion(n=4, p=3, s=2, lam=0.1, seed=1)
        X = np.random.Generator(np.random.PCG64(4)).standard_normal((f.n, f.p))
        G = f.grad_all(X)
        values = f.value_all(X)
        for i in range(f.n):
            np.testing.assert_allclose(G[i], f.grad(i, X[i]), rtol=1e-13)
            assert values[i] == pytest.approx(f.value(i, X[i]), rel=1e-13)

    def test_grad_all_checks_shape(self, small_problem):
        with pytest.raises(ValueError, match="shape"):
            small_problem.grad_all(np.zeros((small_problem.n + 1, small_problem.p)))

    @pytest.mark.parametrize(
        "H, z, lambdas",
        [
            (np.ones((2, 1)), np.ones((2, 1)), [0.1, 0.1]),
            (np.ones((2, 1, 3)), np.ones((2, 2)), [0.1, 0.1]),
            (np.ones((2, 1, 3)), np.ones((2, 1)), [0.1, 0.1, 0.1]),
            (np.ones((2, 1, 3)), np.ones((2, 1)), [0.1, -0.1]),
        ],
    )
    def test_rejects_bad_arrays(self, H, z, lambdas):
        with pytest.raises(ValueError):
            sensor_fusion_from_arrays(H, z, lambdas)

    def test_scalar_lambda_broadcasts(self):
        f = sensor_fusion_from_arrays(np.ones((2, 1, 1)), np.zeros((2, 1)), 0.5)
        np.testing.assert_array_equal(f.lambdas, [0.5, 0.5])

    @pytest.mark.parametrize("kwargs", [{"n": 0, "p": 2, "s": 1, "lam": 0.1}, {"n": 2, "p": 2, "s": 1, "lam": 0.0}])
    def test_generation_rejects(self, kwargs):
        with pytest.raises(ValueError):
            make_sensor_fusion(seed=0, **kwargs)

    def test_optimum_needs_strong_convexity(self):
        # one rank-one agent without regularization cannot pin down two coordinates
        f = sensor_fusion_from_arrays(np.array([[[1.0, 0.0]]]), np.zeros((1, 1)), [0.0])
        with pytest.raises(ValueError, match="strongly convex"):
            optimum(f)


class TestConditions:

    def test_contraction_factor(self):
        assert contraction_factor(0.1, L=4.0, mu=1.0) == pytest.approx(0.9)
        assert contraction_factor(0.45, L=4.0, mu=1.0) == pytest.approx(0.8)

    def test_sampled_conditions_hold(self):
        f = make_sensor_fusion(n=5, p=3, s=2, lam=0.1, seed=7)
        report = check_lipschitz_and_convexity(f, trials=1000, seed=11)
        assert report, report.first_violation
        assert report.checks == {"lipschitz": 5000, "strong_convexity": 1000, "contraction": 10000}

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**16), lam=st.floats(0.01, 1.0))
    def test_conditions_hold_for_random_instances(self, seed, lam):
        f = make_sensor_fusion(n=3, p=2, s=1, lam=lam, seed=seed)
        assert check_lipschitz_and_convexity(f, trials=50, seed=seed)

    def test_an_overstated_mu_is_caught(self):
        f = make_sensor_fusion(n=3, p=2, s=1, lam=0.1, seed=0)

        class Overstated:
            n, p = f.n, f.p
            L, mu = f.L, 2.0 * f.L
            hessians, linear = f.hessians, f.linear

            def grad_all(self, X):
                return f.grad_all(X)

            def average_grad(self, x):
                return f.average_grad(x)

        report = check_lipschitz_and_convexity(Overstated(), trials=20)
        assert not report
        assert report.first_violation.startswith("strong_convexity violated at trial 0")

    def test_trials_must_be_positive(self, small_problem):
        with pytest.raises(ValueError):
            check_lipschitz_and_convexity(small_problem, trials=0)


class TestProblemFiles:

    def test_save_then_load(self, tmp_path):
        f = make_sensor_fusion(n=3, p=4, s=2, lam=0.05, seed=6)
        path = tmp_path / "problem.yaml"
        save_problem(f, path)
        g = load_problem(path)
        np.testing.assert_array_equal(g.H, f.H)
        np.testing.assert_array_equal(g.z, f.z)
        np.testing.assert_array_equal(g.lambdas, f.lambdas)
        assert g.seed == 6

    def test_missing_key(self, tmp_path):
        path = tmp_path / "problem.yaml"
        path.write_text("n: 1\np: 1\ns: 1\nlambdas: [0.1]\nH: [[1.0]]\n", encoding="utf-8")
        with pytest.raises(ValueError, match="missing 'z' key"):
            load_problem(path)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "problem.yaml"
        path.write_text("n: 1\np: 2\ns: 1\nlambdas: [0.1]\nH: [[1.0]]\nz: [[0.0]]\n", encoding="utf-8")
        with pytest.raises(ValueError, match="declared dimensions"):
            load_problem(path)

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "problem.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected a mapping"):
            objectives.load_problem(path)
