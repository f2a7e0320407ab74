"""Fixed-step RK4 propagation of pure states and density matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fockspace import CompositeBasis, OperatorMatrix, annihilation, atom_lowering, number_operator
from .model import PhysicalParams
from .spectral import SpectrumSnapshot, instantaneous_spectrum

DEFAULT_STEPS = 20000
DEFAULT_SAMPLES = 500


class NumericalContractError(RuntimeError):
    """Norm or trace drift beyond the integrator's contract."""


class SectorLeakError(ValueError):
    pass


HamiltonianFn = Callable[[float], np.ndarray]


@dataclass
class Trajectory:
    times: np.ndarray
    populations: np.ndarray
    n_optical: np.ndarray | None = None
    n_microwave: np.ndarray | None = None
    atom_excitation: np.ndarray | None = None
    site_populations: np.ndarray | None = None
    leaked_weight: np.ndarray | None = None
    eigen_populations: np.ndarray | None = None  # columns P0, P+1, P-1
    final_state: np.ndarray | None = None
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)
    drift: float = 0.0

    def __len__(self) -> int:
        return len(self.times)

    @property
    def N(self) -> int:
        return (self.site_populations.shape[1] - 1) // 2


def _n_steps(T: float, step: float | None) -> int:
    if T <= 0:
        raise ValueError(f"duration must be positive, got {T}")
    if step is None:
        return DEFAULT_STEPS
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    return max(1, math.ceil(T / step - 1e-9))


def _record_points(n_steps: int, samples: int) -> set[int]:
    stride = max(1, n_steps // max(1, samples))
    pts = set(range(0, n_steps + 1, stride))
    pts.add(n_steps)
    return pts


class _Recorder:
    """Samples observables of pure states or density matrices."""

    def __init__(self, basis, H_of_t, track_eigen: bool, density: bool, snapshot_every: int):
        self.basis = basis if isinstance(basis, CompositeBasis) else None
        self.H_of_t = H_of_t
        self.track_eigen = track_eigen and self.basis is not None
        self.density = density
        self.snapshot_every = snapshot_every
        self.rows: dict[str, list] = {k: [] for k in ("t", "pop", "obs", "eig")}
        self.snapshots: list[tuple[float, np.ndarray]] = []
        self._snap: SpectrumSnapshot | None = None
        if self.basis is not None:
            self.n_opt = number_operator("optical", self.basis)
            self.n_mw = number_operator("microwave", self.basis)
            self.m = number_operator("atom", self.basis)
            self.top = self.basis.top_sector

    def __call__(self, t: float, y: np.ndarray):
        r = self.rows
        r["t"].append(t)
        pops = np.real(np.diagonal(y)).copy() if self.density else np.abs(y) ** 2
        r["pop"].append(pops)
        if self.basis is not None:
            top = pops[self.top]
            r["obs"].append((pops @ self.n_opt, pops @ self.n_mw, pops @ self.m, top, pops.sum() - top.sum()))
            if self.track_eigen:
                h = np.asarray(self.H_of_t(t))[np.ix_(self.top, self.top)]
                self._snap = instantaneous_spectrum(h, t, self._snap)
                if self.density:
                    rt = y[np.ix_(self.top, self.top)]
                    p = np.real(np.einsum("ik,ij,jk->k", self._snap.eigenvectors.conj(), rt, self._snap.eigenvectors))
                else:
                    p = np.abs(self._snap.eigenvectors.conj().T @ y[self.top]) ** 2
                s = self._snap
                r["eig"].append((p[s.level(0)], p[s.level(1)] if s.dim > 1 else 0.0,
                                 p[s.level(-1)] if s.dim > 1 else 0.0))
        if self.snapshot_every and (len(r["t"]) - 1) % self.snapshot_every == 0:
            self.snapshots.append((t, y.copy()))

    def trajectory(self, final, drift) -> Trajectory:
        r = self.rows
        traj = Trajectory(np.array(r["t"]), np.array(r["pop"]), final_state=final,
                          snapshots=self.snapshots, drift=drift)
        if self.basis is not None:
            traj.n_optical = np.array([o[0] for o in r["obs"]])
            traj.n_microwave = np.array([o[1] for o in r["obs"]])
            traj.atom_excitation = np.array([o[2] for o in r["obs"]])
            traj.site_populations = np.array([o[3] for o in r["obs"]])
            traj.leaked_weight = np.array([o[4] for o in r["obs"]])
            if self.track_eigen:
                traj.eigen_populations = np.array(r["eig"])
        return traj


def _rk4(rhs, y, H_of_t, T, n_steps, record, on_sample):
    h = T / n_steps
    H0 = H_of_t(0.0)
    if 0 in record:
        on_sample(0.0, y)
    for i in range(n_steps):
        t = i * h
        Hm = H_of_t(t + 0.5 * h)
        t1 = T if i == n_steps - 1 else t + h
        H1 = H_of_t(t1)
        k1 = rhs(H0, y)
        k2 = rhs(Hm, y + (0.5 * h) * k1)
        k3 = rhs(Hm, y + (0.5 * h) * k2)
        k4 = rhs(H1, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        H0 = H1
        if i + 1 in record:
            on_sample(t1, y)
    return y


def propagate_schrodinger(H_of_t: HamiltonianFn, psi0, T: float, step: float | None = None,
                          basis: CompositeBasis | None = None, samples: int = DEFAULT_SAMPLES,
                          track_eigen: bool = True, snapshot_every: int = 0,
                          max_drift: float = 1e-6) -> Trajectory:
    """Integrate ``i dpsi/dt = H(t) psi`` on ``[0, T]`` with classical RK4.

    The norm is never renormalised; a final drift above ``max_drift`` raises
    :class:`NumericalContractError`.
    """
    psi = np.array(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("initial state is not normalised")
    n = _n_steps(T, step)
    rec = _Recorder(basis, H_of_t, track_eigen, density=False, snapshot_every=snapshot_every)

    def rhs(H, y):
        return -1j * (H @ y)

    psi = _rk4(rhs, psi, H_of_t, T, n, _record_points(n, samples), rec)
    drift = abs(float(np.linalg.norm(psi)) - 1.0)
    if drift > max_drift:
        raise NumericalContractError(f"norm drift {drift:.3e}: step too coarse")
    return rec.trajectory(psi, drift)


def _as_collapse(c) -> np.ndarray:
    if isinstance(c, OperatorMatrix):
        if c.leaking:
            raise SectorLeakError("collapse operator leaves the fixed-sector basis; use an all-sectors basis")
        return np.asarray(c.entries)
    return np.asarray(c)


def collapse_operators(params: PhysicalParams, basis: CompositeBasis) -> list[OperatorMatrix]:
    """``sqrt(Gamma0) |G><R|``, ``sqrt(kappa_o) a``, ``sqrt(kappa_m) b``; zero rates dropped."""
    ops = []
    for rate, op in ((params.Gamma0, atom_lowering), (params.kappa_o, lambda b: annihilation("optical", b)),
                     (params.kappa_m, lambda b: annihilation("microwave", b))):
        if rate > 0:
            ops.append(op(basis).scaled(math.sqrt(rate)))
    return ops


def lindblad_rhs(H: np.ndarray, rho: np.ndarray, collapse: Sequence[np.ndarray], K: np.ndarray | None = None):
    """``-i[H, rho] + sum_c (c rho c^dag - {c^dag c, rho}/2)`` for Hermitian ``rho``."""
    if K is None:
        K = sum((c.conj().T @ c for c in collapse), np.zeros_like(H))
    x = -1j * (H @ rho) - 0.5 * (K @ rho)
    out = x + x.conj().T
    for c in collapse:
        out += c @ rho @ c.conj().T
    return out


def propagate_lindblad(H_of_t: HamiltonianFn, rho0, collapse: Sequence, T: float, step: float | None = None,
                       basis: CompositeBasis | None = None, samples: int = DEFAULT_SAMPLES,
                       track_eigen: bool = True, snapshot_every: int = 0,
                       max_drift: float = 1e-6) -> Trajectory:
    """Integrate the Lindblad master equation with RK4.

    ``collapse`` holds jump operators already scaled by ``sqrt(rate)``.
    Operators flagged as sector-leaking are rejected.
    """
    cs = [_as_collapse(c) for c in collapse]
    rho = np.array(rho0, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if abs(np.trace(rho).real - 1.0) > 1e-9 or np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise ValueError("initial density matrix must be Hermitian with unit trace")
    K = sum((c.conj().T @ c for c in cs), np.zeros(rho.shape, dtype=complex))
    n = _n_steps(T, step)
    rec = _Recorder(basis, H_of_t, track_eigen, density=True, snapshot_every=snapshot_every)

    def rhs(H, y):
        return lindblad_rhs(H, y, cs, K)

    rho = _rk4(rhs, rho, H_of_t, T, n, _record_points(n, samples), rec)
    drift = abs(float(np.trace(rho).real) - 1.0)
    if drift > max_drift:
        raise NumericalContractError(f"trace drift {drift:.3e}: step too coarse")
    return rec.trajectory(rho, drift)


def eigen_populations(psi, snapshot: SpectrumSnapshot) -> dict[int, float]:
    """``|<phi_k|psi>|^2`` keyed by signed level ``k`` (0 = zero mode)."""
    psi = np.asarray(psi)
    if psi.shape[0] != snapshot.dim:
        raise ValueError(f"state of size {psi.shape[0]} does not match spectrum of size {snapshot.dim}")
    V = snapshot.eigenvectors
    if psi.ndim == 2:
        p = np.real(np.einsum("ik,ij,jk->k", V.conj(), psi, V))
    else:
        p = np.abs(V.conj().T @ psi) ** 2
    mid = (snapshot.dim - 1) // 2
    return {i - mid: float(p[i]) for i in range(snapshot.dim)}


@dataclass(frozen=True)
class Observables:
    n_optical: float
    n_microwave: float
    site_populations: np.ndarray
    atom_excitation: float
    leaked_weight: float


def observables(state, basis: CompositeBasis) -> Observables:
    """Photon numbers, top-sector FSL site populations and superatom excitation."""
    y = np.asarray(state)
    pops = np.real(np.diagonal(y)) if y.ndim == 2 else np.abs(y) ** 2
    top = pops[basis.top_sector]
    return Observables(
        float(pops @ number_operator("optical", basis)),
        float(pops @ number_operator("microwave", basis)),
        top,
        float(pops @ number_operator("atom", basis)),
        float(pops.sum() - top.sum()),
    )


def basis_state(basis: CompositeBasis, state) -> np.ndarray:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index(state)] = 1.0
    return psi
