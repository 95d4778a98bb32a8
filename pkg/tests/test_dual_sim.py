import math

import numpy as np
import pytest

from ratchet.models.dual import DualState
from ratchet.schemas.params import Params
from ratchet.services import stats
from ratchet.services.analytic_profile import (
    equilibrium_masses,
    exponent_coefficient,
    finite_exponent_coefficient,
)
from ratchet.services.dual_sim import (
    DualServiceError,
    IntegrationBlowUpError,
    backward_click_times,
    log_z0_extinction_exact,
    logistic_total,
    ode_integrate,
    quasi_stationary_start,
    simulate_hierarchy,
    truncation_level,
    z0_extinction_exact,
    z0_extinction_mc,
)
from ratchet.services.graphical_core import asg_backward, sample_elements


class TestDualState:
    def test_full(self):
        state = DualState.full(10)
        assert state.z == (10,)
        assert state.total == 10
        assert state.lowest_level == 0

    def test_capacity(self):
        with pytest.raises(ValueError):
            DualState((6, 5), 10)
        with pytest.raises(ValueError):
            DualState((-1,), 10)

    def test_lowest_level(self):
        assert DualState((0, 0, 3), 10).lowest_level == 2
        assert DualState((0,), 10).lowest_level is None


class TestHierarchy:
    def test_capacity_mismatch(self, small_params):
        with pytest.raises(DualServiceError):
            simulate_hierarchy(small_params, DualState.full(11), 1.0, seed=0)

    def test_empty_state_is_frozen(self, small_params):
        path = simulate_hierarchy(small_params, DualState((0,), 10), 5.0, seed=0)
        assert path.n_events == 0
        assert path.final.z == (0,)
        assert path.level_extinction_times == []

    def test_counts_stay_bounded(self, small_params):
        path = simulate_hierarchy(small_params, DualState.full(10), 30.0, seed=3, snapshot_times=np.arange(0.0, 30.0, 0.5))
        assert len(path.z_at_times) == 60
        for _, z in path.z_at_times:
            assert 0 <= sum(z) <= 10
            assert min(z) >= 0

    def test_extinctions_are_ordered(self, small_params):
        path = simulate_hierarchy(small_params, DualState.full(10), 100.0, seed=5)
        levels = [level for level, _ in path.level_extinction_times]
        times = [t for _, t in path.level_extinction_times]
        assert levels == list(range(len(levels)))
        assert times == sorted(times)
        if levels:
            assert path.extinction_time(0) == times[0]
        assert path.extinction_time(10 ** 6) is None

    def test_backward_click_times(self, small_params):
        times = backward_click_times(small_params, 100.0, seed=5)
        path = simulate_hierarchy(small_params, DualState.full(10), 100.0, seed=5)
        assert times == [t for _, t in path.level_extinction_times]

    def test_negative_max_level(self, small_params):
        with pytest.raises(DualServiceError):
            simulate_hierarchy(small_params, DualState.full(10), 1.0, seed=0, max_level=-1)

    def test_level_zero_without_selection(self):
        params = Params(N=20, alpha=0.0, mu=0.5)
        reps = 1000
        times = []
        for seed in range(reps):
            path = simulate_hierarchy(params, DualState((5,), 20), 200.0, seed)
            times.append(path.extinction_time(0))
        assert None not in times
        exact = z0_extinction_exact(params, 5)
        assert exact == pytest.approx(2.0 + 1.0 / 1.05 + 1.0 / 1.65 + 1.0 / 2.3 + 1.0 / 3.0)
        assert np.mean(times) == pytest.approx(exact, abs=4 * np.std(times) / math.sqrt(reps))

    def test_level_zero_is_autonomous(self, small_params):
        full, truncated = [], []
        for seed in range(300):
            kept = simulate_hierarchy(small_params, DualState.full(10), 3.0, seed, snapshot_times=[3.0])
            cut = simulate_hierarchy(small_params, DualState.full(10), 3.0, seed + 5000, snapshot_times=[3.0], max_level=0)
            full.append(kept.z_at_times[0][1][0])
            truncated.append(cut.z_at_times[0][1][0])
        assert stats.two_sample_chi2(full, truncated)[1] > 0.001

    def test_same_law_as_backward_graph(self, small_params):
        window = 0.5
        graph, dual = [], []
        for seed in range(2000):
            elements = sample_elements(small_params, 0.0, window, seed)
            counts = asg_backward(elements, range(10)).final.count_vector(2)
            graph.append((int(counts[0]), int(counts[1])))
            path = simulate_hierarchy(small_params, DualState.full(10), window, seed + 50000, snapshot_times=[window])
            z = path.z_at_times[0][1] + (0, 0)
            dual.append((z[0], z[1]))
        assert stats.two_sample_chi2(graph, dual)[1] > 0.001


class TestZ0Extinction:
    def test_single_line_without_selection(self):
        params = Params(N=20, alpha=0.0, mu=0.5)
        assert z0_extinction_exact(params, 1) == pytest.approx(1.0 / params.m_N, rel=1e-12)

    def test_start_bounds(self, small_params):
        with pytest.raises(DualServiceError):
            z0_extinction_exact(small_params, 0)
        with pytest.raises(DualServiceError):
            z0_extinction_exact(small_params, 11)
        with pytest.raises(DualServiceError):
            z0_extinction_exact(Params(N=10, alpha=1.0, mu=0.0), 1)

    def test_increasing_in_start(self, small_params):
        values = [z0_extinction_exact(small_params, n) for n in range(1, 11)]
        assert np.all(np.diff(values) > 0)

    def test_exponent(self):
        estimates = []
        for N in (1000, 1500, 2000):
            params = Params(N=N, alpha=1.0, mu=0.5, f_of_N=50.0)
            log_e = log_z0_extinction_exact(params, quasi_stationary_start(params))
            estimates.append((log_e - math.log(params.f_of_N)) / params.scale)
        # approaches the limit from above
        assert estimates[0] > estimates[1] > estimates[2]
        assert estimates[2] == pytest.approx(exponent_coefficient(1.0, 0.5), rel=0.1)

    def test_log_scale_doubling(self):
        small = Params(N=1000, alpha=1.0, mu=0.5, f_of_N=50.0)
        large = Params(N=2000, alpha=1.0, mu=0.5, f_of_N=50.0)

        def log_rescaled(params):
            return log_z0_extinction_exact(params, quasi_stationary_start(params)) - math.log(params.f_of_N)

        ratio = log_rescaled(large) / (2.0 * log_rescaled(small))
        assert ratio == pytest.approx(0.95, rel=0.15)

    def test_fixed_f_exponent(self):
        def log_e(N):
            params = Params(N=N, alpha=1.0, mu=0.5, f_of_N=5.0)
            return log_z0_extinction_exact(params, quasi_stationary_start(params))

        slope = (log_e(2000) - log_e(1000)) / 200.0
        # sqrt(N/f) prefactor
        expected = finite_exponent_coefficient(1.0, 0.5, 5.0) - 0.5 * math.log(2.0) / 200.0
        assert slope == pytest.approx(expected, rel=0.02)

    def test_monte_carlo_matches_exact(self, small_params):
        start = quasi_stationary_start(small_params)
        summary = z0_extinction_mc(small_params, start, reps=2000, seed=9)
        exact = z0_extinction_exact(small_params, start)
        assert summary.mean_H0 == pytest.approx(exact, abs=4 * summary.std_err)
        assert summary.reps == 2000
        assert len(summary.z1_at_H0) == 2000
        assert np.all(summary.z1_at_H0 >= 0)

    def test_too_few_replicas(self, small_params):
        with pytest.raises(DualServiceError):
            z0_extinction_mc(small_params, 5, reps=9, seed=0)

    def test_level_one_grows_with_scale(self):
        small = Params(N=10, alpha=1.0, mu=0.5)
        large = Params(N=16, alpha=1.0, mu=0.5)
        z1_small = z0_extinction_mc(small, quasi_stationary_start(small), reps=200, seed=1).z1_at_H0
        z1_large = z0_extinction_mc(large, quasi_stationary_start(large), reps=200, seed=1).z1_at_H0
        assert z1_large.mean() > z1_small.mean() > 0

    def test_quasi_stationary_start(self):
        assert quasi_stationary_start(Params(N=2000, alpha=1.0, mu=0.5, f_of_N=50.0)) == 40
        assert quasi_stationary_start(Params(N=10, alpha=1.0, mu=0.95)) == 1


@pytest.mark.slow
class TestQuasiStationaryExit:
    def test_exit_time_is_memoryless(self):
        params = Params(N=200, alpha=1.0, mu=0.5, f_of_N=10.0)
        start = quasi_stationary_start(params)
        summary = z0_extinction_mc(params, start, reps=1000, seed=20)
        assert 0.9 <= summary.cv <= 1.1
        assert summary.mean_H0 == pytest.approx(z0_extinction_exact(params, start), abs=4 * summary.std_err)


class TestLevelMassOde:
    def test_equilibrium_is_fixed(self):
        start = equilibrium_masses(1.0, 0.5, 30).masses
        trajectory = ode_integrate(1.0, 0.5, 30, start, t_max=100.0)
        assert np.max(np.abs(trajectory.states - start)) < 1e-8

    def test_converges_to_equilibrium(self):
        trajectory = ode_integrate(1.0, 0.5, 30, [0.01], t_max=200.0)
        expected = equilibrium_masses(1.0, 0.5, 30).masses
        assert np.max(np.abs(trajectory.final.n - expected)) <= 1e-4
        assert trajectory.final.t == pytest.approx(200.0)

    def test_truncated_equilibrium(self):
        K = truncation_level(1.0, 0.5)
        trajectory = ode_integrate(1.0, 0.5, K, [0.1], t_max=100.0)
        expected = equilibrium_masses(1.0, 0.5, K).masses
        assert np.max(np.abs(trajectory.final.n - expected)) <= 1e-5

    def test_step_halving(self):
        coarse = ode_integrate(1.0, 0.5, 10, [0.5], t_max=5.0, dt=0.01)
        fine = ode_integrate(1.0, 0.5, 10, [0.5], t_max=5.0, dt=0.005)
        assert np.max(np.abs(coarse.final.n - fine.final.n)) <= 1e-7

    def test_total_is_logistic(self):
        trajectory = ode_integrate(1.0, 0.5, 30, [0.5], t_max=10.0, record_every=10)
        expected = logistic_total(1.0, 0.5, trajectory.times)
        assert np.max(np.abs(trajectory.totals - expected)) <= 1e-6

    def test_logistic_limits(self):
        assert logistic_total(1.0, 0.5, 0.0) == pytest.approx(0.5)
        assert logistic_total(1.0, 0.5, 50.0) == pytest.approx(2.0)
        assert np.all(logistic_total(1.0, 0.0, [0.0, 1.0]) == 0.0)

    def test_blow_up(self):
        with pytest.raises(IntegrationBlowUpError):
            ode_integrate(1.0, 0.5, 5, [5.0], t_max=1.0)

    def test_invalid_arguments(self):
        with pytest.raises(DualServiceError):
            ode_integrate(1.0, 0.5, 0, [0.5], t_max=1.0)
        with pytest.raises(DualServiceError):
            ode_integrate(1.0, 0.5, 2, [0.5, 0.1, 0.1, 0.1], t_max=1.0)
        with pytest.raises(DualServiceError):
            ode_integrate(1.0, 0.5, 2, [-0.5], t_max=1.0)
        with pytest.raises(DualServiceError):
            ode_integrate(1.0, 0.5, 2, [0.5], t_max=1.0, dt=0.0)

    def test_truncation_level(self):
        K = truncation_level(1.0, 0.5)
        assert 2.0 * (1.0 / 3.0) ** K < 1e-6
        assert truncation_level(1.0, 0.5, tolerance=1e-12) > K
        assert truncation_level(1.0, 0.9) > K
