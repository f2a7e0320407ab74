import math

import numpy as np
import pytest

from fslt.dynamics import (NumericalContractError, SectorLeakError, basis_state, collapse_operators,
                           eigen_populations, lindblad_rhs, observables, propagate_lindblad,
                           propagate_schrodinger)
from fslt.fockspace import AtomLevel, annihilation, build_basis, number_operator
from fslt.model import PulseSchedule, jc_drive
from fslt.spectral import instantaneous_spectrum, zero_mode_analytic

G, R = AtomLevel.G, AtomLevel.R


@pytest.fixture(scope="module")
def unitary_run(params):
    b = build_basis(5, "fixed")
    H = jc_drive(b, PulseSchedule(params.g, params.T))
    return propagate_schrodinger(H, basis_state(b, (0, 5, G)), params.T, basis=b, snapshot_every=25)


@pytest.fixture(scope="module")
def lindblad_run(params):
    # stronger decay than the defaults so the dissipator dominates the checks
    p = params.with_rates(kappa_o=0.05, kappa_m=0.03, Gamma0=0.08)
    b = build_basis(3, "all")
    H = jc_drive(b, PulseSchedule(p.g, p.T))
    return propagate_lindblad(H, basis_state(b, (0, 3, G)), collapse_operators(p, b), p.T, p.T / 4000, b,
                              samples=200, snapshot_every=10)


class TestSchrodinger:
    def test_static_zero_hamiltonian(self):
        b = build_basis(2, "fixed")
        psi = np.ones(b.dim, dtype=complex) / math.sqrt(b.dim)
        tr = propagate_schrodinger(lambda t: np.zeros((b.dim, b.dim)), psi, 3.0, basis=b, samples=10)
        np.testing.assert_array_equal(tr.final_state, psi)
        assert np.ptp(tr.n_optical) == 0 and np.ptp(tr.site_populations, axis=0).max() == 0

    def test_unitarity(self, unitary_run):
        assert unitary_run.drift < 1e-9
        np.testing.assert_allclose(unitary_run.populations.sum(axis=1), 1, atol=1e-9)

    def test_series_shapes(self, unitary_run):
        n = len(unitary_run.times)
        for s in (unitary_run.n_optical, unitary_run.n_microwave, unitary_run.atom_excitation,
                  unitary_run.site_populations, unitary_run.eigen_populations):
            assert len(s) == n
        assert unitary_run.times[0] == 0 and unitary_run.times[-1] == pytest.approx(8.2)
        assert np.all((unitary_run.n_optical >= -1e-12) & (unitary_run.n_optical <= 5 + 1e-12))

    def test_transfer_value(self, unitary_run):
        assert unitary_run.n_optical[-1] == pytest.approx(4.994, abs=0.01)

    def test_even_sites_are_the_superatom(self, unitary_run):
        even = unitary_run.site_populations[:, 1::2].sum(axis=1)
        np.testing.assert_allclose(even, unitary_run.atom_excitation, atol=1e-14)
        # regression guard frozen from the first run (max 0.197)
        assert even.max() < 0.25

    def test_eigen_populations(self, unitary_run):
        P = unitary_run.eigen_populations
        assert P[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert P[-1, 0] > 0.99
        assert P[:, 1:].max() > 1e-3  # transient leakage into the flanking levels

    def test_step_halving_changes_little(self, params):
        b = build_basis(5, "fixed")
        H = jc_drive(b, PulseSchedule(params.g, params.T))
        psi = basis_state(b, (0, 5, G))
        a = propagate_schrodinger(H, psi, params.T, basis=b, track_eigen=False).n_optical[-1]
        c = propagate_schrodinger(H, psi, params.T, params.T / 40000, b, track_eigen=False).n_optical[-1]
        assert abs(a - c) < 1e-8

    def test_fourth_order(self, params):
        b = build_basis(5, "fixed")
        H = jc_drive(b, PulseSchedule(params.g, params.T))
        psi = basis_state(b, (0, 5, G))
        x = [propagate_schrodinger(H, psi, params.T, params.T / n, track_eigen=False, max_drift=1.0).final_state
             for n in (200, 400, 800)]
        ratio = np.linalg.norm(x[0] - x[1]) / np.linalg.norm(x[1] - x[2])
        assert 16 * 0.7 < ratio < 16 * 1.3

    def test_coarse_step_raises(self, params):
        b = build_basis(5, "fixed")
        H = jc_drive(b, PulseSchedule(params.g, params.T))
        with pytest.raises(NumericalContractError, match="step too coarse"):
            propagate_schrodinger(H, basis_state(b, (0, 5, G)), params.T, params.T / 5, b)

    @pytest.mark.parametrize("kw", [dict(T=0.0), dict(T=1.0, step=-1.0)])
    def test_bad_times(self, kw):
        b = build_basis(1, "fixed")
        with pytest.raises(ValueError):
            propagate_schrodinger(lambda t: np.zeros((3, 3)), basis_state(b, (0, 1, G)), **kw)

    def test_unnormalised(self):
        with pytest.raises(ValueError):
            propagate_schrodinger(lambda t: np.zeros((2, 2)), np.array([1.0, 1.0]), 1.0)


class TestLindblad:
    def test_closed_limit_matches_schrodinger(self, params):
        p = params.without_dissipation()
        b = build_basis(3, "all")
        H = jc_drive(b, PulseSchedule(p.g, p.T))
        psi = basis_state(b, (0, 3, G))
        assert collapse_operators(p, b) == []
        lt = propagate_lindblad(H, psi, [], p.T, basis=b, samples=50)
        st = propagate_schrodinger(H, psi, p.T, basis=b, samples=50)
        for name in ("n_optical", "n_microwave", "atom_excitation", "site_populations", "eigen_populations"):
            np.testing.assert_allclose(getattr(lt, name), getattr(st, name), rtol=0, atol=1e-8)

    @pytest.mark.parametrize("kappa", [2 * math.pi * 0.002, 0.7])
    def test_damped_cavity(self, params, kappa):
        p = params.with_rates(kappa_o=0.0, kappa_m=kappa, Gamma0=0.0)
        b = build_basis(1, "all")
        T = 3.0
        tr = propagate_lindblad(lambda t: np.zeros((b.dim, b.dim)), basis_state(b, (0, 1, G)),
                                collapse_operators(p, b), T, T / 2000, b, samples=100)
        np.testing.assert_allclose(tr.n_microwave, np.exp(-kappa * tr.times), rtol=0, atol=1e-6)

    def test_trace_and_positivity(self, lindblad_run):
        assert lindblad_run.drift < 1e-8
        assert len(lindblad_run.snapshots) >= 20
        for _, rho in lindblad_run.snapshots:
            assert abs(np.trace(rho) - 1) < 1e-8
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
            assert np.linalg.eigvalsh(rho).min() >= -1e-8

    def test_excitation_monotone(self, lindblad_run):
        total = lindblad_run.n_optical + lindblad_run.n_microwave + lindblad_run.atom_excitation
        assert np.all(np.diff(total) <= 1e-12)
        assert total[-1] < total[0]

    def test_leaked_weight(self, lindblad_run):
        tr = lindblad_run
        assert tr.leaked_weight[0] == 0 and tr.leaked_weight[-1] > 0
        np.testing.assert_allclose(tr.site_populations.sum(axis=1) + tr.leaked_weight, 1, atol=1e-8)

    def test_rejects_leaking_operators(self, params):
        b = build_basis(3, "fixed")
        with pytest.raises(SectorLeakError):
            propagate_lindblad(jc_drive(b, PulseSchedule(params.g, params.T)), basis_state(b, (0, 3, G)),
                               [annihilation("optical", b)], 1.0, basis=b)

    def test_invalid_density_matrix(self):
        with pytest.raises(ValueError):
            propagate_lindblad(lambda t: np.zeros((2, 2)), 0.7 * np.eye(2), [], 1.0)

    def test_rhs_matches_textbook_form(self):
        rng = np.random.default_rng(3)
        d = 4
        H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        H = H + H.conj().T
        A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = A @ A.conj().T
        rho /= np.trace(rho)
        cs = [rng.normal(size=(d, d)) for _ in range(2)]
        want = -1j * (H @ rho - rho @ H)
        for c in cs:
            cd = c.conj().T
            want += (2 * c @ rho @ cd - cd @ c @ rho - rho @ cd @ c) / 2
        np.testing.assert_allclose(lindblad_rhs(H, rho, cs), want, atol=1e-12)

    def test_collapse_convention(self, params):
        b = build_basis(2, "all")
        ops = collapse_operators(params, b)
        assert len(ops) == 3
        K = sum(np.asarray(c).T @ np.asarray(c) for c in ops)
        want = (params.Gamma0 * number_operator("atom", b) + params.kappa_o * number_operator("optical", b)
                + params.kappa_m * number_operator("microwave", b))
        np.testing.assert_allclose(np.diag(K), want, rtol=1e-14)


class TestObservables:
    def test_number_states(self):
        b = build_basis(5, "fixed")
        o = observables(basis_state(b, (0, 5, G)), b)
        assert (o.n_optical, o.n_microwave, o.atom_excitation, o.leaked_weight) == (0, 5, 0, 0)
        np.testing.assert_array_equal(o.site_populations, np.eye(11)[0])
        o = observables(basis_state(b, (5, 0, G)), b)
        assert (o.n_optical, o.n_microwave) == (5, 0)
        np.testing.assert_array_equal(o.site_populations, np.eye(11)[10])

    def test_zero_mode_photon_number(self):
        b = build_basis(5, "fixed")
        zm = zero_mode_analytic(5, 1.0, 1.0).amplitudes
        psi = np.zeros(b.dim)
        psi[b.top_sector] = zm
        assert observables(psi, b).n_optical == pytest.approx(2.5, abs=1e-14)

    def test_density_matrix_input(self):
        b = build_basis(2, "all")
        psi = basis_state(b, (1, 1, G))
        o = observables(np.outer(psi, psi), b)
        assert (o.n_optical, o.n_microwave) == (1, 1)

    def test_eigen_populations(self):
        b = build_basis(5, "fixed")
        snap = instantaneous_spectrum(np.asarray(jc_drive(b, PulseSchedule(1.0, 1.0))(0.0)))
        p = eigen_populations(basis_state(b, (0, 5, G)), snap)
        assert p[0] == pytest.approx(1.0)
        assert sum(p.values()) == pytest.approx(1.0)
        psi = np.ones(b.dim) / math.sqrt(b.dim)
        assert sum(eigen_populations(psi, snap).values()) == pytest.approx(1.0)
        assert sum(eigen_populations(np.outer(psi, psi), snap).values()) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            eigen_populations(np.ones(3), snap)
