"""Truncated Hilbert space of an optical mode, a microwave mode and a two-level superatom.

States are written ``|n_opt, n_mw, atom>``.  Inside the sector of total
excitation ``k = n_opt + n_mw + m`` the states form a Fock-state-lattice
(FSL) chain of ``2k + 1`` sites::

    site 2j+1  ->  |j,   k-j, G>      j = 0..k
    site 2j    ->  |j-1, k-j, R>      j = 1..k

so site 1 holds every photon in the microwave resonator and site ``2k+1``
holds every photon in the optical cavity.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np


class AtomLevel(enum.IntEnum):
    """Superatom level; the integer value is its excitation count."""

    G = 0
    R = 1


class BasisState(NamedTuple):
    n_opt: int
    n_mw: int
    atom: AtomLevel

    @property
    def excitation(self) -> int:
        return self.n_opt + self.n_mw + int(self.atom)

    def __str__(self) -> str:
        return f"|{self.n_opt},{self.n_mw},{self.atom.name}>"


class BasisMode(enum.Enum):
    FIXED_SECTOR = "fixed"
    ALL_SECTORS = "all"


class NotAnFSLSite(ValueError):
    pass


def state_of_site(site: int, k: int) -> BasisState:
    """Basis state sitting on FSL ``site`` (1-based) of the ``k``-excitation chain."""
    if not 1 <= site <= 2 * k + 1:
        raise NotAnFSLSite(f"site {site} outside [1, {2 * k + 1}]")
    if site % 2:
        j = (site - 1) // 2
        return BasisState(j, k - j, AtomLevel.G)
    j = site // 2
    return BasisState(j - 1, k - j, AtomLevel.R)


def site_index(state: BasisState, N: int) -> int:
    """FSL site (1-based) of ``state`` within the ``N``-excitation sector."""
    n_opt, n_mw, atom = state
    if n_opt < 0 or n_mw < 0 or n_opt + n_mw + int(atom) != N:
        raise NotAnFSLSite(f"{BasisState(*state)} is not an FSL site of the N={N} sector")
    if atom == AtomLevel.G:
        return 2 * n_opt + 1
    return 2 * (n_opt + 1)


@dataclass(frozen=True, eq=False)
class CompositeBasis:
    """Ordered basis, sector-major by ascending excitation, FSL order inside a sector."""

    N: int
    mode: BasisMode
    states: tuple[BasisState, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, state: BasisState) -> int:
        try:
            return self._index[BasisState(*state)]
        except KeyError:
            raise KeyError(f"{state} not in basis") from None

    def __contains__(self, state) -> bool:
        return BasisState(*state) in self._index

    @cached_property
    def sectors(self) -> np.ndarray:
        return np.array([s.excitation for s in self.states])

    @cached_property
    def top_sector(self) -> np.ndarray:
        """Ordinals of the ``N``-excitation sector, listed in FSL-site order."""
        return np.array([self.index(state_of_site(s, self.N)) for s in range(1, 2 * self.N + 2)])

    @cached_property
    def sector_slices(self) -> dict[int, slice]:
        out = {}
        for k in sorted(set(self.sectors.tolist())):
            idx = np.flatnonzero(self.sectors == k)
            out[k] = slice(int(idx[0]), int(idx[-1]) + 1)
        return out

    def site_of(self, ordinal: int) -> int:
        s = self.states[ordinal]
        return site_index(s, s.excitation)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ordinal", "n_opt", "n_mw", "atom", "sector", "site"])
        for i, s in enumerate(self.states):
            w.writerow([i, s.n_opt, s.n_mw, s.atom.name, s.excitation, self.site_of(i)])
        return buf.getvalue()


def build_basis(N: int, mode: BasisMode | str = BasisMode.FIXED_SECTOR) -> CompositeBasis:
    """Enumerate the truncated basis.

    ``FIXED_SECTOR`` keeps the ``2N+1`` states of total excitation ``N``;
    ``ALL_SECTORS`` keeps every sector ``k <= N``, ``(N+1)**2`` states in all.
    Collapse operators only ever lower the excitation, so the latter is
    closed under dissipative dynamics started in sector ``N``.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    mode = BasisMode(mode)
    sectors = [N] if mode is BasisMode.FIXED_SECTOR else range(N + 1)
    states = tuple(state_of_site(s, k) for k in sectors for s in range(1, 2 * k + 2))
    return CompositeBasis(N, mode, states)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense operator on a :class:`CompositeBasis`.

    ``leaking`` marks operators whose exact image leaves the basis (lowering
    operators on a fixed-sector basis); their truncated matrix is zero and
    dissipative propagation refuses them.
    """

    entries: np.ndarray
    basis: CompositeBasis
    leaking: bool = False

    def __post_init__(self):
        m = np.asarray(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != self.basis.dim:
            raise ValueError(f"operator of shape {m.shape} does not match basis of size {self.basis.dim}")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, self.basis, self.leaking)

    def scaled(self, factor: complex) -> "OperatorMatrix":
        return OperatorMatrix(factor * self.entries, self.basis, self.leaking)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.entries @ other.entries, self.basis, self.leaking or other.leaking)
        return self.entries @ other

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))


def annihilation(mode: str, basis: CompositeBasis) -> OperatorMatrix:
    """Bosonic lowering operator for ``"optical"`` (a) or ``"microwave"`` (b)."""
    if mode not in ("optical", "microwave"):
        raise ValueError(f"unknown mode {mode!r}")
    d = basis.dim
    m = np.zeros((d, d))
    for i, (n_opt, n_mw, atom) in enumerate(basis.states):
        if mode == "optical":
            n, target = n_opt, (n_opt - 1, n_mw, atom)
        else:
            n, target = n_mw, (n_opt, n_mw - 1, atom)
        if n > 0 and target in basis:
            m[basis.index(target), i] = np.sqrt(n)
    return OperatorMatrix(m, basis, leaking=basis.mode is BasisMode.FIXED_SECTOR and basis.N > 0)


def atom_lowering(basis: CompositeBasis) -> OperatorMatrix:
    """``|G><R|`` tensored with the identity on both modes."""
    d = basis.dim
    m = np.zeros((d, d))
    for i, (n_opt, n_mw, atom) in enumerate(basis.states):
        if atom == AtomLevel.R and (n_opt, n_mw, AtomLevel.G) in basis:
            m[basis.index((n_opt, n_mw, AtomLevel.G)), i] = 1.0
    return OperatorMatrix(m, basis, leaking=basis.mode is BasisMode.FIXED_SECTOR and basis.N > 0)


def number_operator(mode: str, basis: CompositeBasis) -> np.ndarray:
    """Diagonal of ``a^dag a`` (``"optical"``), ``b^dag b`` (``"microwave"``) or ``|R><R|`` (``"atom"``)."""
    col = {"optical": 0, "microwave": 1, "atom": 2}[mode]
    return np.array([float(s[col]) for s in basis.states])


def excitation_operator(basis: CompositeBasis) -> np.ndarray:
    return np.diag(basis.sectors.astype(float))
