"""Scenario runners: transfers, duration scans, disorder Monte Carlo, heatmaps, model checks."""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import batched
from .dynamics import (NumericalContractError, Trajectory, basis_state, collapse_operators, propagate_lindblad,
                       propagate_schrodinger)
from .fockspace import AtomLevel, BasisMode, build_basis
from .model import (PhysicalParams, PulseSchedule, SingleAtomBasis, effective_single_atom_hamiltonian,
                    full_single_atom_hamiltonian, jc_drive, two_atom_blockade_hamiltonian)

MC_CHUNK = 128
MC_STEPS = 1000
HEATMAP_STEPS = 20000
CONVERGENCE_TOL = 1e-6


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _map(fn, items, workers):
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, *zip(*items)))


# --- single transfers ------------------------------------------------------


@dataclass
class TransferResult:
    N: int
    T: float
    dissipative: bool
    final_n_optical: float
    fidelity: float
    trajectory: Trajectory


def run_transfer(params: PhysicalParams, N: int | None = None, T: float | None = None,
                 dissipative: bool = False, step: float | None = None, samples: int = 500,
                 track_eigen: bool = True) -> TransferResult:
    """Pump ``|0,N,G>`` through the FSL under the sin/cos schedule.

    Unitary runs use the fixed ``N``-excitation sector; dissipative runs use
    every sector up to ``N`` with the three decay channels of ``params``.
    """
    N = params.N if N is None else N
    T = params.T if T is None else T
    schedule = PulseSchedule(params.g, T)
    if dissipative:
        basis = build_basis(N, BasisMode.ALL_SECTORS)
        rho0 = basis_state(basis, (0, N, AtomLevel.G))
        traj = propagate_lindblad(jc_drive(basis, schedule), np.outer(rho0, rho0.conj()),
                                  collapse_operators(params, basis), T, step, basis, samples, track_eigen)
    else:
        basis = build_basis(N, BasisMode.FIXED_SECTOR)
        traj = propagate_schrodinger(jc_drive(basis, schedule), basis_state(basis, (0, N, AtomLevel.G)),
                                     T, step, basis, samples, track_eigen)
    return TransferResult(N, T, dissipative, float(traj.n_optical[-1]), float(traj.site_populations[-1, -1]), traj)


def dissipative_benchmark(params: PhysicalParams, step: float | None = None) -> Trajectory:
    """Lindblad run at the configured ``N`` and ``T`` (the reference case is N=5, T=8.2 us)."""
    return run_transfer(params, dissipative=True, step=step).trajectory


def trajectory_peak(traj: Trajectory) -> tuple[float, float]:
    """``(t, n_optical)`` at the maximum of the optical photon number."""
    i = int(np.argmax(traj.n_optical))
    return float(traj.times[i]), float(traj.n_optical[i])


# --- duration scans and heatmaps -------------------------------------------


@dataclass
class CriticalScan:
    T_values: np.ndarray
    fidelity: np.ndarray
    n_optical: np.ndarray
    maxima: np.ndarray
    theoretical: np.ndarray


def local_maxima(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    idx = [i for i in range(1, len(y) - 1) if y[i] > y[i - 1] and y[i] >= y[i + 1]]
    return np.asarray(x)[idx]


def critical_durations(params: PhysicalParams, N: int, T_range: tuple[float, float], resolution: float = 0.05,
                       n_steps: int = HEATMAP_STEPS) -> CriticalScan:
    """Scan unitary last-site fidelity over ``T`` and list its local maxima.

    Also returns the pulse-area grid ``T_n = 2 n pi / g`` inside the range;
    the scanned maxima sit near, not on, this grid.
    """
    lo, hi = T_range
    if not (0 < lo < hi):
        raise ValueError(f"empty or non-positive duration range {T_range}")
    if not 0 < resolution <= 0.05:
        raise ValueError("resolution must be in (0, 0.05] us")
    Ts = lo + resolution * np.arange(int(math.floor((hi - lo) / resolution + 1e-9)) + 1)
    out = batched.unitary_transfer(N, params.g, Ts, n_steps=n_steps)
    period = 2 * math.pi / params.g
    grid = period * np.arange(math.ceil(lo / period), math.floor(hi / period) + 1)
    return CriticalScan(Ts, out.fidelity, out.n_optical, local_maxima(Ts, out.fidelity), grid)


@dataclass
class SweepResult:
    axes: dict[str, np.ndarray]
    values: np.ndarray
    sample_count: int = 1
    master_seed: int | None = None
    stderr: np.ndarray | None = None
    extra: dict[str, object] = field(default_factory=dict)


def _heatmap_row(N, g, Ts, dissipative, rates, n_steps):
    if dissipative:
        return batched.lindblad_transfer(N, g, Ts, n_steps=n_steps, **rates).fidelity
    return batched.unitary_transfer(N, g, Ts, n_steps=n_steps).fidelity


def _rates(params: PhysicalParams) -> dict[str, float]:
    return dict(Gamma0=params.Gamma0, kappa_o=params.kappa_o, kappa_m=params.kappa_m)


def fidelity_heatmap(params: PhysicalParams, N_list, T_list, dissipative: bool = False,
                     workers: int | None = None, n_steps: int = HEATMAP_STEPS,
                     check_convergence: bool = True) -> SweepResult:
    """Last-site population for every ``(N, T)``; rows are ``N``, columns ``T``."""
    N_list = [int(n) for n in N_list]
    Ts = np.asarray(T_list, dtype=float)
    if not N_list or Ts.size == 0:
        raise ValueError("heatmap grids must be non-empty")
    if min(N_list) < 1 or np.any(Ts <= 0):
        raise ValueError("heatmap needs N >= 1 and T > 0")
    rates = _rates(params)
    if check_convergence:
        worst = ([max(N_list)], [float(Ts.max())])
        a = _heatmap_row(max(N_list), params.g, Ts.max(), dissipative, rates, n_steps)
        b = _heatmap_row(max(N_list), params.g, Ts.max(), dissipative, rates, 2 * n_steps)
        if abs(a[0] - b[0]) > CONVERGENCE_TOL:
            raise NumericalContractError(f"heatmap step too coarse at N={worst[0][0]}, T={worst[1][0]}")
    rows = _map(_heatmap_row, [(N, params.g, Ts, dissipative, rates, n_steps) for N in N_list], workers)
    return SweepResult({"N": np.array(N_list), "T_us": Ts}, np.vstack(rows),
                       extra={"dissipative": dissipative, "n_steps": n_steps})


# --- disorder --------------------------------------------------------------


@dataclass(frozen=True)
class DisorderSample:
    eps1: float
    eps2: float


def draw_disorder(master_seed: int, index: int, eta1: float, eta2: float) -> DisorderSample:
    """Sample ``index`` from its own stream keyed by ``(master_seed, index)``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(index,))))
    u = rng.uniform(-1.0, 1.0, size=2)
    return DisorderSample(float(eta1 * u[0]), float(eta2 * u[1]))


def _disorder_chunk(N, g, T, eps1, eps2, rates, n_steps):
    out = batched.lindblad_transfer(N, g, T, 1.0 + np.asarray(eps1), 1.0 + np.asarray(eps2),
                                    n_steps=n_steps, **rates)
    return out.n_optical


def disorder_samples(params: PhysicalParams, eta1: float, eta2: float, samples: int = 1001, master_seed: int = 0,
                     workers: int | None = None, mirror: bool = False, n_steps: int = MC_STEPS) -> np.ndarray:
    """Final optical photon number of every disorder sample, in sample order."""
    if samples < 1:
        raise ValueError("need at least one sample")
    for eta in (eta1, eta2):
        if not 0 <= eta <= 0.5:
            raise ValueError(f"disorder width {eta} outside [0, 0.5]")
    sign = -1.0 if mirror else 1.0
    draws = [draw_disorder(master_seed, i, eta1, eta2) for i in range(samples)]
    e1 = np.array([sign * d.eps1 for d in draws])
    e2 = np.array([sign * d.eps2 for d in draws])
    rates = _rates(params)
    items = [(params.N, params.g, params.T, e1[i:i + MC_CHUNK], e2[i:i + MC_CHUNK], rates, n_steps)
             for i in range(0, samples, MC_CHUNK)]
    return np.concatenate(_map(_disorder_chunk, items, workers))


def disorder_monte_carlo(params: PhysicalParams, eta1: float, eta2: float, samples: int = 1001,
                         master_seed: int = 0, workers: int | None = None, mirror: bool = False,
                         n_steps: int = MC_STEPS) -> SweepResult:
    """Mean final optical photon number under uniform relative coupling errors, with dissipation."""
    _check_mc_convergence(params, n_steps)
    vals = disorder_samples(params, eta1, eta2, samples, master_seed, workers, mirror, n_steps)
    stderr = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return SweepResult({"eta1": np.array([eta1]), "eta2": np.array([eta2])}, np.array([vals.mean()]),
                       samples, master_seed, np.array([stderr]), {"n_steps": n_steps})


def disorder_scan(params: PhysicalParams, etas, samples: int = 1001, master_seed: int = 0,
                  workers: int | None = None, n_steps: int = MC_STEPS) -> SweepResult:
    """``disorder_monte_carlo`` along the diagonal ``eta1 = eta2`` for each ``eta``."""
    etas = np.asarray(etas, dtype=float)
    if etas.size == 0:
        raise ValueError("empty eta grid")
    _check_mc_convergence(params, n_steps)
    means, errs = [], []
    for eta in etas:
        vals = disorder_samples(params, eta, eta, samples, master_seed, workers, False, n_steps)
        means.append(vals.mean())
        errs.append(vals.std(ddof=1) / math.sqrt(samples) if samples > 1 else 0.0)
    return SweepResult({"eta1": etas, "eta2": etas.copy()}, np.array(means), samples, master_seed,
                       np.array(errs), {"n_steps": n_steps})


def _check_mc_convergence(params: PhysicalParams, n_steps: int):
    kw = dict(n_steps=n_steps, **_rates(params))
    a = batched.lindblad_transfer(params.N, params.g, params.T, **kw).n_optical[0]
    kw["n_steps"] = 2 * n_steps
    b = batched.lindblad_transfer(params.N, params.g, params.T, **kw).n_optical[0]
    if abs(a - b) > CONVERGENCE_TOL:
        raise NumericalContractError(f"Monte Carlo step T/{n_steps} too coarse (step-doubling change {abs(a - b):.2e})")


# --- model validations -----------------------------------------------------


@dataclass
class EliminationReport:
    max_deviation: float
    detuning_ratios: tuple[float, float]
    warning: bool
    times: np.ndarray
    full_populations: np.ndarray
    effective_populations: np.ndarray
    shared_states: tuple


def validate_adiabatic_elimination(params: PhysicalParams, n_max: int = 1, T: float | None = None,
                                   step: float | None = None, samples: int = 400) -> EliminationReport:
    """Compare the four-level single-atom model with its two-photon reduction.

    Both start in ``|g; 0_opt, 1_mw>`` and run one pump period with single-atom
    couplings; the report holds the largest population difference on the
    states both models share.
    """
    T = params.T if T is None else T
    p = params if T == params.T else PhysicalParams(**{**params.__dict__, "T": T})
    basis = SingleAtomBasis(n_max)
    ratios = (p.Delta / p.Omega1_max if p.Omega1_max else math.inf,
              p.delta / p.Omega2_max if p.Omega2_max else math.inf)
    warn = min(ratios) < 10
    if warn:
        warnings.warn(f"detuning/Rabi ratios {ratios} below 10; elimination not expected to hold", stacklevel=2)
    if step is None:
        fastest = max(p.Delta, p.delta, p.Omega1_max, p.Omega2_max, 1e-12)
        step = min(T / 20000, 0.05 / fastest)
    # step counts are multiples of ``samples`` so both runs record on the same time grid;
    # the effective model has no fast phases and keeps the default T/20000
    n_full = samples * math.ceil(T / step / samples - 1e-9)
    n_eff = samples * math.ceil(min(n_full, 20000) / samples)
    psi0 = np.zeros(basis.dim, dtype=complex)
    psi0[basis.index(("g", 0, 1))] = 1.0
    full = propagate_schrodinger(lambda t: full_single_atom_hamiltonian(p, t, basis), psi0, T, T / n_full,
                                 samples=samples)
    eff = propagate_schrodinger(lambda t: effective_single_atom_hamiltonian(p, t, basis), psi0, T, T / n_eff,
                                samples=samples)
    if len(full.times) != len(eff.times) or np.max(np.abs(full.times - eff.times)) > 1e-9 * T:
        raise RuntimeError("full and effective runs recorded on different grids")
    shared = tuple(s for s in basis.states if s[0] in ("g", "r2"))
    cols = [basis.index(s) for s in shared]
    dev = float(np.max(np.abs(full.populations[:, cols] - eff.populations[:, cols])))
    return EliminationReport(dev, ratios, warn, full.times, full.populations[:, cols],
                             eff.populations[:, cols], shared)


@dataclass
class BlockadeReport:
    enhancement_ratio: float
    double_excitation_max: float
    single_frequency: float
    pair_frequency: float


def _first_peak_time(times: np.ndarray, y: np.ndarray) -> float:
    """Time of the first interior local maximum, refined by a parabola through three samples."""
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            h = times[1] - times[0]
            denom = y[i - 1] - 2 * y[i] + y[i + 1]
            shift = 0.5 * (y[i - 1] - y[i + 1]) / denom if denom else 0.0
            return float(times[i] + shift * h)
    raise RuntimeError("no oscillation maximum inside the simulated window")


def validate_blockade(drive: float, V: float, periods: float = 1.5, samples: int = 2000) -> BlockadeReport:
    """Two blockaded atoms versus one: collective Rabi frequency and double excitation.

    ``drive`` and ``V`` are in rad/us.  Each atom sees ``drive (|r><g| + h.c.)``;
    ``|rr>`` is shifted by ``V``.  Frequencies come from the first maximum of
    the total Rydberg excitation.
    """
    if V < 0:
        raise ValueError("V must be non-negative")
    if drive == 0:
        return BlockadeReport(1.0, 0.0, 0.0, 0.0)
    T = periods * math.pi / abs(drive)
    step = min(T / 20000, 0.05 / max(abs(V), abs(drive)))
    one = propagate_schrodinger(lambda t: np.array([[0, drive], [drive, 0]], dtype=complex),
                                np.array([1, 0], dtype=complex), T, step, samples=samples)
    H2 = two_atom_blockade_hamiltonian(drive, V).astype(complex)
    two = propagate_schrodinger(lambda t: H2, np.array([1, 0, 0, 0], dtype=complex), T, step, samples=samples)
    exc_one = one.populations[:, 1]
    exc_two = two.populations @ np.array([0.0, 1.0, 1.0, 2.0])
    t1 = _first_peak_time(one.times, exc_one)
    t2 = _first_peak_time(two.times, exc_two)
    f1, f2 = math.pi / t1, math.pi / t2
    return BlockadeReport(f2 / f1, float(two.populations[:, 3].max()), f1, f2)
