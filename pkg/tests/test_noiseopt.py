import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from chaospriv.noiseopt import (NoiseDesignProblem, OptimalNoiseDesigner, SolverOptions,
                                brute_force_solve, cost, cost_gradient, project_simplex, solve)
from chaospriv.probmodel import Alphabet, ConditionalPmf, Pmf

from conftest import random_problem


def two_point_problem(base=2):
    xa = Alphabet.range(0, 1)
    return NoiseDesignProblem(Pmf(xa, [0.5, 0.5]),
                              ConditionalPmf(xa, Alphabet.range(0, 1), [[1, 0], [0, 1]]), base=base)


def independent_problem(rng, n_x=3, n_y=4):
    xa = Alphabet.range(0, n_x - 1)
    row = rng.dirichlet(np.ones(n_y))
    return NoiseDesignProblem(Pmf(xa, rng.dirichlet(np.ones(n_x))),
                              ConditionalPmf(xa, Alphabet.range(1, n_y), np.tile(row, (n_x, 1))))


class TestProjection:
    def test_already_on_simplex(self):
        p = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_simplex(p), p, atol=1e-15)

    def test_known(self):
        np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
        np.testing.assert_allclose(project_simplex([0.5, 0.5, 0.5]), [1 / 3] * 3)

    @settings(max_examples=200)
    @given(arrays(float, st.integers(1, 8), elements=st.floats(-5, 5)))
    def test_is_projection(self, v):
        w = project_simplex(v)
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-12)
        # optimality: <v - w, q - w> <= 0 for vertices q
        for i in range(v.size):
            q = np.zeros(v.size)
            q[i] = 1
            assert (v - w) @ (q - w) <= 1e-9


class TestCost:
    def test_two_point_hand_value(self):
        assert cost(two_point_problem(), [0.5, 0.5]) == pytest.approx(0.5, abs=1e-14)

    def test_independent_is_zero(self, rng):
        pr = independent_problem(rng)
        for _ in range(5):
            assert cost(pr, rng.dirichlet(np.ones(4))) == pytest.approx(0, abs=1e-14)

    def test_singleton_query(self):
        xa = Alphabet.range(0, 2)
        pr = NoiseDesignProblem(Pmf(xa, [0.2, 0.3, 0.5]), ConditionalPmf(xa, Alphabet([[3.0]]), [[1], [1], [1]]))
        assert cost(pr, [1.0]) == 0

    def test_point_mass_equals_leakage(self, rng):
        pr = random_problem(rng, 4, 5)
        for v in range(5):
            assert cost(pr, np.eye(5)[v]) == pytest.approx(pr.leakage_without_noise(), abs=1e-12)

    def test_alphabet_mismatch(self, rng):
        pr = random_problem(rng, 2, 3)
        with pytest.raises(ValueError):
            cost(pr, Pmf(Alphabet.range(0, 2), [0.2, 0.3, 0.5]))
        with pytest.raises(ValueError):
            cost(pr, [0.5, 0.5])

    def test_nats_and_bits(self, rng):
        pb = random_problem(np.random.default_rng(3), 3, 3, base=2)
        pe = random_problem(np.random.default_rng(3), 3, 3, base="e")
        p = [0.2, 0.5, 0.3]
        assert cost(pe, p) == pytest.approx(cost(pb, p) * np.log(2), rel=1e-12)

    def test_zero_mass_x_is_ignored(self):
        xa = Alphabet.range(0, 2)
        pyx = [[0.9, 0.1], [0.2, 0.8], [0.0, 1.0]]
        full = NoiseDesignProblem(Pmf(xa, [0.4, 0.6, 0.0]), ConditionalPmf(xa, Alphabet.range(1, 2), pyx))
        xb = Alphabet.range(0, 1)
        sub = NoiseDesignProblem(Pmf(xb, [0.4, 0.6]), ConditionalPmf(xb, Alphabet.range(1, 2), pyx[:2]))
        assert cost(full, [0.3, 0.7]) == pytest.approx(cost(sub, [0.3, 0.7]), abs=1e-15)

    def test_convexity_probes(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            pr = random_problem(rng, rng.integers(2, 5), rng.integers(2, 6))
            M = pr.y_alphabet.size
            p, q = rng.dirichlet(np.ones(M)), rng.dirichlet(np.ones(M))
            lam = rng.uniform()
            assert cost(pr, lam * p + (1 - lam) * q) <= lam * cost(pr, p) + (1 - lam) * cost(pr, q) + 1e-9


class TestGradient:
    @staticmethod
    def fd(pr, p, h=1e-6):
        g = np.empty(p.size)
        for i in range(p.size):
            e = np.zeros(p.size)
            e[i] = h
            g[i] = (cost(pr, p + e) - cost(pr, p - e)) / (2 * h)
        return g

    def test_two_point(self):
        pr = two_point_problem()
        p = np.array([0.5, 0.5])
        np.testing.assert_allclose(cost_gradient(pr, p), self.fd(pr, p), atol=1e-6)

    def test_independent_components_equal(self, rng):
        pr = independent_problem(rng)
        g = cost_gradient(pr, rng.dirichlet(np.ones(4)))
        np.testing.assert_allclose(g, g[0], atol=1e-12)

    def test_random_interior(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pr = random_problem(rng, 3, 4)
            p = rng.dirichlet(np.ones(4) * 5)
            g, f = cost_gradient(pr, p), self.fd(pr, p)
            assert np.max(np.abs(g - f) / np.maximum(np.abs(f), 1e-3)) <= 1e-5


class TestSolve:
    def test_independent_value_zero(self, rng):
        sol = solve(independent_problem(rng))
        assert sol.optimal_value == pytest.approx(0, abs=1e-12)
        assert sol.converged

    def test_matches_grid_on_two_by_two(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            pr = random_problem(rng, 2, 2)
            assert solve(pr).optimal_value == pytest.approx(brute_force_solve(pr).optimal_value, abs=1e-4)

    def test_three_point_uniform_toy(self):
        xa = Alphabet.range(0, 2)
        pr = NoiseDesignProblem(Pmf(xa, [1 / 3] * 3), ConditionalPmf(xa, Alphabet.range(1, 3), np.eye(3)))
        s, b = solve(pr), brute_force_solve(pr)
        assert s.optimal_value == pytest.approx(b.optimal_value, abs=1e-3)
        assert s.optimal_value <= b.optimal_value + 1e-9

    def test_monotone_history(self, rng):
        sol = solve(random_problem(rng, 4, 6))
        assert np.all(np.diff(sol.history) <= 1e-12)

    def test_fixed_step_rule(self, rng):
        pr = random_problem(rng, 3, 3)
        a = solve(pr, SolverOptions(step_rule="fixed", step_size=0.5))
        b = solve(pr)
        assert a.optimal_value == pytest.approx(b.optimal_value, abs=1e-6)

    def test_permuting_x_keeps_value(self, rng):
        pr = random_problem(rng, 5, 4)
        perm = rng.permutation(5)
        xa = Alphabet(pr.p_x.alphabet.points[perm])
        pp = NoiseDesignProblem(Pmf(xa, pr.p_x.probs[perm]),
                                ConditionalPmf(xa, pr.y_alphabet, pr.p_y_given_x.probs[perm]))
        assert solve(pp).optimal_value == pytest.approx(solve(pr).optimal_value, abs=1e-9)

    def test_non_convergence_is_flagged(self, rng, caplog):
        sol = solve(random_problem(rng, 4, 6), SolverOptions(max_iterations=1))
        assert not sol.converged
        assert "max_iterations" in caplog.text
        assert np.all(sol.p_v_star.probs >= 0)

    def test_solution_on_simplex(self, rng):
        sol = solve(random_problem(rng, 4, 7))
        assert sol.p_v_star.probs.sum() == pytest.approx(1, abs=1e-10)
        assert sol.optimal_value >= 0
        assert sol.kkt_residual < 1e-6
        d = sol.to_dict()
        assert set(d) >= {"p_v_star", "optimal_value", "base", "iterations", "kkt_residual"}

    def test_bad_options(self):
        with pytest.raises(ValueError):
            SolverOptions(gradient_tol=0)
        with pytest.raises(ValueError):
            SolverOptions(step_rule="newton")


class TestBruteForce:
    def test_singleton(self):
        xa = Alphabet.range(0, 1)
        pr = NoiseDesignProblem(Pmf(xa, [0.5, 0.5]), ConditionalPmf(xa, Alphabet([[1.0]]), [[1], [1]]))
        sol = brute_force_solve(pr)
        assert sol.optimal_value == 0 and sol.p_v_star.probs[0] == 1

    def test_too_large(self, rng):
        with pytest.raises(ValueError):
            brute_force_solve(random_problem(rng, 2, 4))


class TestProblemJson:
    def test_roundtrip(self, rng):
        pr = random_problem(rng, 3, 4, base="e")
        back = NoiseDesignProblem.from_dict(pr.to_dict())
        assert back.base == "e"
        assert cost(back, [0.25] * 4) == pytest.approx(cost(pr, [0.25] * 4), abs=1e-15)

    def test_z_alphabet(self, rng):
        pr = random_problem(rng, 2, 9)
        np.testing.assert_array_equal(pr.z_alphabet.points[:, 0], np.arange(2, 19))


class TestEstimator:
    def test_fit_from_samples(self):
        rng = np.random.default_rng(1)
        x = rng.integers(0, 3, 5000)
        y = np.where(rng.random(5000) < 0.7, x + 1, rng.integers(1, 4, 5000))
        est = OptimalNoiseDesigner(random_state=0).fit(x, y)
        assert est.optimal_value_ < est.leakage_without_noise_
        assert est.p_v_.sum() == pytest.approx(1)
        z = est.transform(y.astype(float))
        assert z.shape == y.shape and np.all(z >= 2) and np.all(z <= 6)

    def test_params_and_clone(self):
        est = OptimalNoiseDesigner(base="e", max_iter=10)
        assert clone(est).get_params()["base"] == "e"

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            OptimalNoiseDesigner().transform([1.0])
