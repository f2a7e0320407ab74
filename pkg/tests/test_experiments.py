import math
import warnings

import numpy as np
import pytest

from fslt import batched
from fslt.dynamics import NumericalContractError
from fslt.experiments import (critical_durations, disorder_monte_carlo, disorder_samples, disorder_scan,
                              dissipative_benchmark, draw_disorder, fidelity_heatmap, local_maxima, run_transfer,
                              trajectory_peak, validate_adiabatic_elimination, validate_blockade)
from fslt.model import TWO_PI, PhysicalParams


class TestTransfer:
    def test_sudden_limit(self, params):
        r = run_transfer(params, T=0.01)
        assert r.final_n_optical < 1e-4 and r.fidelity < 1e-4

    def test_closed_system_benchmark(self, params):
        r = run_transfer(params.without_dissipation(), dissipative=True, track_eigen=False)
        assert r.final_n_optical == pytest.approx(4.994, abs=0.01)

    def test_result_invariants(self, params):
        r = run_transfer(params, N=3, T=5.0)
        assert 0 <= r.fidelity <= 1 and r.final_n_optical <= 3
        assert r.trajectory.N == 3

    def test_peak(self, params):
        r = run_transfer(params, N=2, T=6.0)
        t, n = trajectory_peak(r.trajectory)
        assert n == r.trajectory.n_optical.max() and 0 <= t <= 6.0


class TestCriticalDurations:
    def test_area_grid(self, params):
        scan = critical_durations(params, 5, (3.0, 19.0), 0.05, n_steps=2000)
        np.testing.assert_allclose(scan.theoretical, 1 / 0.282 * np.arange(1, 6), rtol=1e-12)
        assert scan.theoretical[0] == pytest.approx(3.546, abs=5e-4)

    def test_scan_near_reference_time(self, params):
        scan = critical_durations(params, 5, (7.5, 9.0), 0.05)
        assert len(scan.T_values) == 31
        assert np.any(np.abs(scan.maxima - 8.2) <= 0.3)

    @pytest.mark.parametrize("rng, res", [((5.0, 5.0), 0.05), ((0.0, 3.0), 0.05), ((1.0, 3.0), 0.1)])
    def test_invalid(self, params, rng, res):
        with pytest.raises(ValueError):
            critical_durations(params, 5, rng, res)

    def test_local_maxima(self):
        x = np.arange(7)
        assert list(local_maxima(x, [0, 2, 1, 1, 3, 3, 0])) == [1, 4]


class TestHeatmap:
    def test_row_reproduces_scan(self, params):
        scan = critical_durations(params, 5, (6.0, 10.0), 0.05)
        hm = fidelity_heatmap(params, [5], scan.T_values, workers=1)
        np.testing.assert_array_equal(hm.values[0], scan.fidelity)
        cols = local_maxima(scan.T_values, hm.values[0])
        for t in scan.maxima:
            assert np.min(np.abs(cols - t)) <= 0.05 + 1e-12

    def test_adiabatic_regime(self, params):
        hm = fidelity_heatmap(params, range(2, 11), [150.0], workers=1)
        assert hm.values.min() > 0.99

    def test_sudden_limit(self, params):
        assert fidelity_heatmap(params, [2], [0.01], workers=1, n_steps=2000).values[0, 0] < 1e-6

    def test_dissipation_penalty(self, params):
        Ts = [4.0, 8.2, 15.0]
        u = fidelity_heatmap(params, [2, 4], Ts, workers=1, n_steps=2000)
        d = fidelity_heatmap(params, [2, 4], Ts, dissipative=True, workers=1, n_steps=2000)
        assert np.all(d.values <= u.values)
        assert d.extra["dissipative"] and not u.extra["dissipative"]

    def test_layout(self, params):
        hm = fidelity_heatmap(params, [2, 3], [1.0, 2.0, 3.0], workers=1, n_steps=500)
        assert hm.values.shape == (2, 3)
        assert list(hm.axes["N"]) == [2, 3]

    def test_convergence_gate(self, params):
        with pytest.raises(NumericalContractError):
            fidelity_heatmap(params, [5], [20.0], workers=1, n_steps=50)

    @pytest.mark.parametrize("Ns, Ts", [([], [1.0]), ([2], []), ([0], [1.0]), ([2], [-1.0])])
    def test_invalid(self, params, Ns, Ts):
        with pytest.raises(ValueError):
            fidelity_heatmap(params, Ns, Ts, workers=1)


class TestDisorder:
    def test_draw_bounds_and_keying(self):
        d = [draw_disorder(3, i, 0.1, 0.02) for i in range(200)]
        assert all(abs(x.eps1) <= 0.1 and abs(x.eps2) <= 0.02 for x in d)
        assert draw_disorder(3, 17, 0.1, 0.02) == d[17]
        assert draw_disorder(4, 17, 0.1, 0.02) != d[17]

    def test_deterministic(self, params):
        a = disorder_monte_carlo(params, 0.1, 0.1, samples=20, master_seed=9, workers=1)
        b = disorder_monte_carlo(params, 0.1, 0.1, samples=20, master_seed=9, workers=1)
        assert a.values.tobytes() == b.values.tobytes() and a.stderr.tobytes() == b.stderr.tobytes()
        assert a.sample_count == 20 and a.master_seed == 9

    def test_worker_count_independent(self, params):
        a = disorder_samples(params, 0.1, 0.1, samples=140, master_seed=1, workers=1)
        b = disorder_samples(params, 0.1, 0.1, samples=140, master_seed=1, workers=2)
        assert a.tobytes() == b.tobytes()

    def test_zero_width_is_unperturbed(self, params):
        r = disorder_monte_carlo(params, 0.0, 0.0, samples=3, workers=1)
        ref = batched.lindblad_transfer(5, params.g, params.T, Gamma0=params.Gamma0, kappa_o=params.kappa_o,
                                        kappa_m=params.kappa_m, n_steps=1000).n_optical[0]
        assert r.values[0] == ref
        assert r.values[0] == pytest.approx(4.4, abs=0.1)

    def test_mirror_symmetry(self, params):
        a = disorder_monte_carlo(params, 0.1, 0.1, samples=128, master_seed=5, workers=1)
        b = disorder_monte_carlo(params, 0.1, 0.1, samples=128, master_seed=5, workers=1, mirror=True)
        assert a.values[0] != b.values[0]
        assert abs(a.values[0] - b.values[0]) < 3 * math.hypot(a.stderr[0], b.stderr[0])

    def test_scan_shape(self, params):
        r = disorder_scan(params, [0.0, 0.05], samples=4, workers=1)
        assert r.values.shape == (2,) and list(r.axes["eta1"]) == [0.0, 0.05]

    @pytest.mark.parametrize("kw", [dict(samples=0), dict(eta1=0.6), dict(eta2=-0.1)])
    def test_invalid(self, params, kw):
        args = dict(eta1=0.1, eta2=0.1, samples=5)
        args.update(kw)
        with pytest.raises(ValueError):
            disorder_samples(params, workers=1, **args)


class TestElimination:
    def test_reference_ratios(self, params):
        rep = validate_adiabatic_elimination(params)
        assert rep.detuning_ratios == pytest.approx((15.81, 17.56), abs=0.01)
        assert not rep.warning
        assert rep.max_deviation < 0.05
        assert rep.full_populations.shape == rep.effective_populations.shape

    def test_without_pumps(self, params):
        p = PhysicalParams(**{**params.__dict__, "Omega1_max": 0.0, "Omega2_max": 0.0})
        assert validate_adiabatic_elimination(p, step=params.T / 2000).max_deviation == 0.0

    def test_small_ratio_warns(self, params):
        p = PhysicalParams(**{**params.__dict__, "Delta": params.Omega1_max * 5})
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = validate_adiabatic_elimination(p, T=1.0)
        assert rep.warning and caught

    @pytest.mark.slow
    def test_larger_detuning_converges(self, params):
        devs = []
        for scale in (1.0, 3.0, 10.0):
            p = PhysicalParams(**{**params.__dict__, "Delta": params.Delta * scale,
                                  "delta": params.delta * scale})
            devs.append(validate_adiabatic_elimination(p).max_deviation)
        assert devs[0] > devs[1] > devs[2]
        assert devs[2] < 1e-4


class TestBlockade:
    def test_strong_blockade(self):
        rep = validate_blockade(TWO_PI * 1.0, TWO_PI * 1000.0)
        assert rep.enhancement_ratio == pytest.approx(math.sqrt(2), rel=0.05)
        assert rep.double_excitation_max < 1e-2

    def test_independent_atoms(self):
        rep = validate_blockade(TWO_PI * 1.0, 0.0)
        assert rep.enhancement_ratio == pytest.approx(1.0, rel=1e-3)
        # both atoms reach |r> together: the product of single-atom peaks
        assert rep.double_excitation_max == pytest.approx(1.0, abs=1e-6)

    def test_no_drive(self):
        rep = validate_blockade(0.0, 100.0)
        assert rep.enhancement_ratio == 1.0 and rep.double_excitation_max == 0.0

    def test_negative_shift(self):
        with pytest.raises(ValueError):
            validate_blockade(1.0, -1.0)


def test_dissipative_benchmark_shape(params):
    tr = dissipative_benchmark(params.with_rates(kappa_o=0.2, kappa_m=0.2, Gamma0=0.2), step=params.T / 2000)
    assert tr.n_optical[-1] < 4.5 and tr.leaked_weight[-1] > 0
