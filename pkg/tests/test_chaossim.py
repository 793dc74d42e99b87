import math
import warnings

import numpy as np
import pytest

from chaospriv.chaossim import (AffineResponder, ConstantDriver, DelayNotFoundError, DivergenceError,
                                Driver, LorenzDriver, OscillatorSystem, Trajectory, autocorrelation,
                                convergence_certificate, default_driver, default_responder,
                                estimate_density, integrate, ks_distance, select_delay,
                                simulate_cascade, stationarity_check, sync_report,
                                zero_one_chaos_test)
from chaospriv.chaossim.io import (TrajectoryFormatError, load_trajectory, read_binary, read_csv,
                                   write_binary, write_csv)


def harmonic():
    return Driver(dimension=2, rhs=lambda x, u, t: np.array([x[1], -x[0]]), name="harmonic")


def endpoint_error(n_steps):
    dt = 2 * math.pi / n_steps
    tr = integrate(harmonic(), [1.0, 0.0], dt=dt, t_end=n_steps * dt)
    return np.abs(tr.states[-1] - [1.0, 0.0]).max()


@pytest.fixture(scope="module")
def lorenz_run():
    return simulate_cascade(default_driver(), [default_responder(), default_responder()],
                            [1.0, 1.0, 1.0], [[150.0, 150.0], [-150.0, -150.0]], t_end=100.0)


class TestIntegrate:
    def test_harmonic_period(self):
        assert endpoint_error(6283) <= 1e-8

    def test_rk4_order(self):
        ratio = endpoint_error(64) / endpoint_error(128)
        assert 12 <= ratio <= 20

    def test_zero_field(self):
        tr = integrate(ConstantDriver(dimension=3), [1.0, -2.0, 3.0], t_end=1.0)
        assert np.all(tr.states == [1.0, -2.0, 3.0])

    def test_lorenz_bounded(self, lorenz_run):
        assert np.all(np.isfinite(lorenz_run.driver.states))
        assert np.abs(lorenz_run.driver.states).max() < 100

    def test_lorenz_kernel_matches_python_rk4(self):
        lz = LorenzDriver()
        generic = Driver(dimension=3, rhs=lz.rhs)
        a = integrate(lz, [1.0, 1.0, 1.0], t_end=2.0)
        b = integrate(generic, [1.0, 1.0, 1.0], t_end=2.0)
        np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-10)

    def test_affine_kernel_matches_python_rk4(self):
        u = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=2.0)
        r = default_responder()
        generic = OscillatorSystem(dimension=2, rhs=r.rhs, output_index=1)
        a = integrate(r, [3.0, -4.0], u, t_end=2.0)
        b = integrate(generic, [3.0, -4.0], u, t_end=2.0)
        np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-10)

    def test_zero_order_hold(self):
        # dz/dt = -z + psi(u) with u held: an input jump mid-run only acts from its own step on
        r = AffineResponder(A=np.diag([-1.0, -1.0]), input_map=lambda u: np.stack([u, u], axis=-1))
        u = np.r_[np.zeros(500), np.ones(500)]
        tr = integrate(r, [0.0, 0.0], u, t_end=1.0)
        assert np.all(tr.states[:501] == 0)
        t = 0.5
        assert tr.states[-1, 0] == pytest.approx(1 - math.exp(-t), abs=1e-12)

    def test_divergence(self):
        r = AffineResponder(A=np.diag([800.0, -1.0]))
        with pytest.raises(DivergenceError) as info:
            integrate(r, [1.0, 0.0], np.zeros(10_000), t_end=10.0)
        assert 0 < info.value.time <= 10.0

    def test_divergence_python_path(self):
        blow = Driver(dimension=1, rhs=lambda x, u, t: x * x)
        with pytest.raises(DivergenceError):
            integrate(blow, [1.0], dt=1e-2, t_end=5.0)

    def test_input_grid_checks(self):
        u = integrate(default_driver(), [1.0, 1.0, 1.0], dt=2e-3, t_end=1.0)
        with pytest.raises(ValueError, match="grid"):
            integrate(default_responder(), [0.0, 0.0], u, dt=1e-3, t_end=1.0)
        with pytest.raises(ValueError):
            integrate(default_responder(), [0.0, 0.0], None, t_end=1.0)
        with pytest.raises(ValueError, match="whole number"):
            integrate(default_driver(), [1.0, 1.0, 1.0], dt=0.3, t_end=1.0)

    def test_output_map(self, lorenz_run):
        s = lorenz_run.responders[0]
        assert np.array_equal(s.outputs, s.states[:, 1])
        assert len(s.outputs) == len(s.states)

    def test_driver_independent_of_responders(self, lorenz_run):
        alone = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=100.0)
        assert np.array_equal(alone.states, lorenz_run.driver.states)

    def test_cascade_chunking_bit_identical(self):
        args = (default_driver(), [default_responder()], [1.0, 2.0, 3.0], [[5.0, -5.0]])
        a = simulate_cascade(*args, t_end=20.0, record_every=7, chunk_steps=999)
        b = simulate_cascade(*args, t_end=20.0)
        assert np.array_equal(a.responders[0].states, b.responders[0].states[::7])
        assert np.array_equal(a.driver.states, b.driver.states[::7])

    def test_trajectory_subsample(self):
        tr = Trajectory(1.0, 0.5, np.arange(10.0))
        sub = tr.subsample(3, start=1)
        assert sub.t0 == 1.5 and sub.dt == 1.5
        np.testing.assert_array_equal(sub.outputs, [1, 4, 7])


class TestCertificate:
    def test_default_responder(self):
        c = convergence_certificate(default_responder(), np.eye(2))
        np.testing.assert_allclose(np.sort(c.q_eigenvalues), [-2.5, -1.0], rtol=0, atol=1e-12)
        assert c.valid and c.c == 1.0 and c.alpha == 1.0

    def test_zero_matrix_invalid(self):
        c = convergence_certificate(AffineResponder(A=np.zeros((2, 2))))
        assert c.max_eigenvalue_of_Q == 0 and not c.valid

    def test_hurwitz_but_not_certified(self):
        c = convergence_certificate(AffineResponder(A=np.array([[-1.0, 10.0], [0.0, -1.0]])), np.eye(2))
        np.testing.assert_allclose(np.sort(c.q_eigenvalues), [-6.0, 4.0], atol=1e-12)
        assert not c.valid

    def test_p_must_be_pd(self):
        with pytest.raises(ValueError, match="positive definite"):
            convergence_certificate(default_responder(), np.diag([1.0, -1.0]))
        with pytest.raises(ValueError, match="symmetric"):
            convergence_certificate(default_responder(), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_alpha_scales_with_p(self):
        c = convergence_certificate(default_responder(), np.diag([2.0, 1.0]))
        # Q = diag(-2, -2.5): c = 2, alpha = c / lambda_max(P) = 1
        assert c.c == pytest.approx(2.0) and c.alpha == pytest.approx(1.0)

    def test_sampled_nonaffine(self):
        sys_ = OscillatorSystem(dimension=1, rhs=lambda x, u, t: np.array([-x[0] - x[0] ** 3 + u]))
        c = convergence_certificate(sys_, sample_box=([-2.0], [2.0], [-1.0], [1.0]), n_samples=200)
        assert c.valid and c.max_eigenvalue_of_Q == pytest.approx(-1.0, abs=0.05)
        with pytest.raises(ValueError):
            convergence_certificate(sys_)


class TestSync:
    def test_identical_ics(self):
        u = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=10.0)
        rep = sync_report(default_responder(), u, [150.0, 150.0], [150.0, 150.0])
        assert rep.error_series.max() <= 1e-13

    def test_antiphase(self):
        u = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=30.0)
        rep = sync_report(default_responder(), u, [150.0, 150.0], [-150.0, -150.0])
        assert rep.time_to_threshold[1e-3] <= 10
        assert rep.time_to_threshold[1e-9] <= 20
        alpha = convergence_certificate(default_responder()).alpha
        assert rep.rate <= -alpha * (1 - 0.2)
        assert np.all(rep.error_series >= 0)
        # non-increasing once the output has caught up
        late = rep.error_series[rep.times >= 2]
        late = late[late > 1e-12]
        assert np.all(np.diff(late) <= 1e-12)

    def test_warns_without_certificate(self):
        u = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=1.0)
        with pytest.warns(UserWarning, match="certificate"):
            sync_report(AffineResponder(A=np.zeros((2, 2))), u, [1.0, 1.0], [0.0, 0.0])


class TestChaosTest:
    def test_sinusoid_regular(self):
        assert zero_one_chaos_test(np.sin(0.3 * np.arange(20_000))) <= 0.2

    def test_constant(self):
        assert zero_one_chaos_test(np.full(6000, 2.5)) == 0.0

    def test_lorenz_chaotic(self):
        tr = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=2050.0, record_every=200)
        assert zero_one_chaos_test(tr.outputs[250:]) >= 0.9

    def test_too_short(self):
        with pytest.raises(ValueError):
            zero_one_chaos_test(np.random.default_rng(0).random(4999))

    def test_quasiperiodic_regular(self):
        n = np.arange(20_000)
        assert zero_one_chaos_test(np.sin(0.3 * n) + np.cos(np.sqrt(2) * 0.3 * n)) <= 0.2


class TestDensity:
    def test_point_mass(self):
        d = estimate_density(np.full(100, 3.0))
        assert d.bin_masses.tolist() == [1.0] and d.support == (3.0, 3.0)

    def test_uniform_bins(self):
        d = estimate_density(np.random.default_rng(0).random(1_000_000), 100)
        assert np.all(np.abs(d.bin_masses - 0.01) <= 0.003)
        assert d.bin_masses.sum() == pytest.approx(1, abs=1e-12)
        assert np.all(np.diff(d.bin_edges) > 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_density([])

    def test_cdf_and_quantile(self):
        d = estimate_density(np.linspace(0, 1, 1001))
        assert d.cdf(0.5) == pytest.approx(501 / 1001)
        assert d.quantile(0.25) == pytest.approx(0.25)


class TestStationarity:
    def test_ks_identical(self):
        x = np.random.default_rng(0).random(1000)
        assert ks_distance(x, x) == 0
        assert ks_distance(x, x + 2) == 1

    def test_identical_ics_zero(self):
        ic = [(np.array([1.0, 1.0, 1.0]), np.array([10.0, 10.0]))] * 2
        rep = stationarity_check(default_responder(), default_driver(), t_end=200.0, delta=0.05,
                                 initial_conditions=ic)
        assert rep.max_ks == 0

    def test_constant_driver_degenerate(self):
        with pytest.warns(UserWarning, match="non-chaotic output"):
            rep = stationarity_check(default_responder(), ConstantDriver(dimension=1), ic_count=2,
                                     t_end=200.0, delta=0.05)
        assert rep.degenerate

    def test_seeded_ic_box(self):
        rep = stationarity_check(default_responder(), default_driver(), ic_count=3, t_end=300.0,
                                 delta=0.05, seed=4)
        for x0, z0 in rep.initial_conditions:
            assert np.all(np.abs(x0) <= 20) and np.all(np.abs(z0) <= 200)
        again = stationarity_check(default_responder(), default_driver(), ic_count=3, t_end=300.0,
                                   delta=0.05, seed=4)
        assert np.array_equal(rep.ks_matrix, again.ks_matrix)

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            stationarity_check(default_responder(), default_driver(), ic_count=1)


class TestAutocorrelation:
    def test_iid(self):
        n = 100_000
        rho = autocorrelation(np.random.default_rng(2).standard_normal(n), 50)
        assert rho[0] == 1
        assert np.all(np.abs(rho[1:]) <= 3 / math.sqrt(n) * 1.5)

    def test_sinusoid_period(self):
        rho = autocorrelation(np.sin(2 * np.pi * np.arange(100_000) / 100), 200)
        assert rho[100] == pytest.approx(1, abs=2e-3)

    def test_zero_variance(self):
        with pytest.raises(ValueError):
            autocorrelation(np.ones(100), 5)


class TestSelectDelay:
    def test_iid(self):
        assert select_delay(np.random.default_rng(3).standard_normal(100_000), threshold=0.05) == 1

    def test_ar1(self):
        rng = np.random.default_rng(0)
        from scipy.signal import lfilter
        x = lfilter([1.0], [1.0, -0.9], rng.standard_normal(4_000_000))
        assert select_delay(x, threshold=0.1, max_lag=100) == 22

    def test_vacuous_threshold(self):
        assert select_delay(np.sin(np.arange(1000) * 0.01), threshold=1.0) == 1

    def test_failure_carries_curve(self):
        with pytest.raises(DelayNotFoundError) as info:
            select_delay(np.arange(1000.0), threshold=0.01, max_lag=10)
        assert info.value.rho.size == 11

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            select_delay(np.arange(10.0), threshold=0)


class TestTrajectoryIO:
    def test_csv_roundtrip(self, tmp_path):
        tr = integrate(default_driver(), [1.0, 1.0, 1.0], t_end=0.1)
        write_csv(tr, tmp_path / "t.csv")
        back = read_csv(tmp_path / "t.csv")
        np.testing.assert_array_equal(back.states, tr.states)
        assert back.output_index == 0 and back.dt == pytest.approx(tr.dt)

    def test_binary_roundtrip(self, tmp_path):
        tr = Trajectory(2.5, 0.05, np.random.default_rng(0).random((100, 2)), output_index=1)
        write_binary(tr, tmp_path / "t.cptj")
        raw = (tmp_path / "t.cptj").read_bytes()
        assert raw[:4] == b"CPTJ" and raw[4] == 1
        back = load_trajectory(tmp_path / "t.cptj")
        assert np.array_equal(back.states, tr.states)
        assert (back.t0, back.dt, back.output_index) == (2.5, 0.05, 1)

    def test_binary_rejections(self, tmp_path):
        tr = Trajectory(0.0, 1.0, np.zeros((3, 2)))
        p = tmp_path / "t.cptj"
        write_binary(tr, p)
        raw = p.read_bytes()
        p.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(TrajectoryFormatError, match="magic"):
            read_binary(p)
        p.write_bytes(raw[:4] + b"\x07" + raw[5:])
        with pytest.raises(TrajectoryFormatError, match="version"):
            read_binary(p)
        p.write_bytes(raw[:-3])
        with pytest.raises(TrajectoryFormatError, match="data bytes"):
            read_binary(p)
