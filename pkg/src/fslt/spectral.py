"""Instantaneous eigenstructure of the dual-mode JC model and its FSL chain."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ChainModel, PulseSchedule, chain_model, envelopes


class NonHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumSnapshot:
    """Sorted eigenvalues with phase-fixed eigenvectors (columns) at time ``t``."""

    t: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def level(self, k: int) -> int:
        """Column of signed level ``k`` (0 = middle of an odd-sized spectrum)."""
        if self.dim % 2 == 0:
            raise ValueError("signed levels need an odd-sized spectrum")
        i = k + (self.dim - 1) // 2
        if not 0 <= i < self.dim:
            raise IndexError(f"level {k} out of range")
        return i


def _degenerate_groups(evals: np.ndarray, tol: float) -> list[slice]:
    groups, start = [], 0
    for i in range(1, len(evals) + 1):
        if i == len(evals) or evals[i] - evals[i - 1] > tol:
            groups.append(slice(start, i))
            start = i
    return groups


def instantaneous_spectrum(H, t: float = 0.0, previous: SpectrumSnapshot | None = None,
                           degeneracy_tol: float = 1e-9) -> SpectrumSnapshot:
    """Dense eigendecomposition with deterministic eigenvector gauge.

    Without ``previous`` each eigenvector gets its largest component real and
    positive.  With ``previous`` the vectors are rotated (a phase, or an
    orthogonal-Procrustes unitary inside a degenerate block) to maximise the
    overlap with the previous snapshot.
    """
    h = np.asarray(H)
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-10 * scale:
        raise NonHermitianError("matrix is not Hermitian")
    evals, evecs = np.linalg.eigh(h)
    evecs = evecs.astype(complex)
    if previous is None:
        rows = np.argmax(np.abs(evecs), axis=0)
        pivots = evecs[rows, np.arange(len(evals))]
        evecs = evecs * (np.abs(pivots) / pivots)
    else:
        if previous.dim != len(evals):
            raise ValueError("previous snapshot has a different dimension")
        for grp in _degenerate_groups(evals, degeneracy_tol * scale):
            overlap = evecs[:, grp].conj().T @ previous.eigenvectors[:, grp]
            w, _, zh = np.linalg.svd(overlap)
            evecs[:, grp] = evecs[:, grp] @ (w @ zh)
    return SpectrumSnapshot(t, evals, evecs)


def spectrum_trajectory(H_of_t, times: Iterable[float], chained: bool = True) -> list[SpectrumSnapshot]:
    snaps: list[SpectrumSnapshot] = []
    for t in times:
        prev = snaps[-1] if (chained and snaps) else None
        snaps.append(instantaneous_spectrum(H_of_t(t), t, prev))
    return snaps


def analytic_spectrum(N: int, Gm: float, Go: float) -> np.ndarray:
    """Sorted ``{0} U {+-sqrt(j (Gm^2 + Go^2))}`` for ``j = 1..N``."""
    G2 = Gm * Gm + Go * Go
    pos = np.sqrt(np.arange(1, N + 1) * G2)
    return np.concatenate([-pos[::-1], [0.0], pos])


def bright_dark_coefficients(Gm: float, Go: float):
    """``(bright, dark)`` as ``(c_mw, c_opt)`` pairs.

    The bright mode ``(Gm b + Go a)/G`` couples to the superatom; the dark mode
    ``(Go b - Gm a)/G`` does not.
    """
    G = math.hypot(Gm, Go)
    if G == 0:
        raise ValueError("bright/dark modes undefined when both couplings vanish")
    return (Gm / G, Go / G), (Go / G, -Gm / G)


@dataclass(frozen=True)
class ZeroMode:
    amplitudes: np.ndarray
    center_site: float

    @property
    def populations(self) -> np.ndarray:
        return self.amplitudes ** 2


def zero_mode_analytic(N: int, Gm: float, Go: float) -> ZeroMode:
    """Zero-energy state of the ``N``-excitation chain, only on odd sites.

    Site ``2j+1`` carries ``sqrt(C(N, j)) (Go/G)^(N-j) (-Gm/G)^j``.
    """
    G = math.hypot(Gm, Go)
    if G == 0:
        raise ValueError("zero mode undefined when both couplings vanish")
    co, cm = Go / G, -Gm / G
    amps = np.zeros(2 * N + 1)
    for j in range(N + 1):
        amps[2 * j] = math.sqrt(math.comb(N, j)) * co ** (N - j) * cm ** j
    return ZeroMode(amps, 2 * defect_center(N, Gm, Go) + 1)


def defect_center(N: int, Gm: float, Go: float) -> float:
    """Stirling estimate of the zero-mode peak, ``j* = N Gm^2 / (Gm^2 + Go^2)``.

    This is where the adjacent hoppings balance, ``Gm sqrt(N-j) = Go sqrt(j)``;
    the peak sits on site ``2 j* + 1``, moving from site 1 (``Gm = 0``) to
    site ``2N+1`` (``Go = 0``).
    """
    G2 = Gm * Gm + Go * Go
    if G2 == 0:
        raise ValueError("defect center undefined when both couplings vanish")
    return N * Gm * Gm / G2


@dataclass(frozen=True)
class PhaseClass:
    winding: int
    raw_sign: int

    @property
    def trivial(self) -> bool:
        return self.winding == 0


def phase_classify(chain: ChainModel, rtol: float = 1e-12) -> PhaseClass:
    """Winding from ``sign(prod u^2 - prod v^2)``; ``+1`` is trivial, else 1.

    A difference within ``rtol`` of the larger product counts as the
    boundary (raw sign 0), which is reported as nontrivial.
    """
    pu = math.prod(x * x for x in chain.u)
    pv = math.prod(x * x for x in chain.v)
    diff = pu - pv
    if abs(diff) <= rtol * max(pu, pv):
        raw = 0
    else:
        raw = 1 if diff > 0 else -1
    return PhaseClass(0 if raw == 1 else 1, raw)


def schedule_phase(N: int, schedule: PulseSchedule, t: float) -> PhaseClass:
    return phase_classify(chain_model(N, *envelopes(schedule, t)))


def zero_mode_profile_rows(mode: ZeroMode) -> Sequence[tuple[int, float, float]]:
    return [(s + 1, float(a), float(a * a)) for s, a in enumerate(mode.amplitudes)]
