"""Batched RK4 kernels for parameter sweeps.

Every member of a batch shares the sin/cos envelope shape but has its own
pulse duration ``T`` and peak scales.  Time is rescaled to ``s = t/T`` on
``[0, 1]`` so one step loop serves the whole batch; ``n_steps`` steps in
``s`` are exactly steps of ``T/n_steps`` for each member.

The dissipative kernel keeps the density matrix as its excitation-sector
blocks: the JC Hamiltonian conserves excitation and every jump operator
lowers it by one, so a state started in sector ``N`` never develops
coherences between sectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .fockspace import BasisMode, annihilation, atom_lowering, build_basis, number_operator
from .model import jc_components


@dataclass(frozen=True)
class BatchOutcome:
    n_optical: np.ndarray
    fidelity: np.ndarray
    norm: np.ndarray


def _batch(g_peak, T, scale_m, scale_o):
    T = np.atleast_1d(np.asarray(T, dtype=float))
    sm = np.atleast_1d(np.asarray(scale_m, dtype=float))
    so = np.atleast_1d(np.asarray(scale_o, dtype=float))
    T, sm, so = np.broadcast_arrays(T, sm, so)
    if np.any(T <= 0):
        raise ValueError("pulse durations must be positive")
    return g_peak * T * sm, g_peak * T * so, T.copy()


@lru_cache(maxsize=64)
def _chain_parts(N: int):
    return jc_components(build_basis(N, BasisMode.FIXED_SECTOR))


def unitary_transfer(N: int, g_peak: float, T, scale_m=1.0, scale_o=1.0, n_steps: int = 20000) -> BatchOutcome:
    """Propagate ``|0,N,G>`` on the ``N``-excitation chain for every batch member."""
    am, ao, _ = _batch(g_peak, T, scale_m, scale_o)
    h_mw, h_opt = _chain_parts(N)
    d = 2 * N + 1
    psi = np.zeros((d, am.size), dtype=complex)
    psi[0] = 1.0
    h = 1.0 / n_steps

    def f(s, y):
        c = 0.5 * math.pi * s
        return -1j * ((h_mw @ y) * (am * math.sin(c)) + (h_opt @ y) * (ao * math.cos(c)))

    for i in range(n_steps):
        s = i * h
        k1 = f(s, psi)
        k2 = f(s + 0.5 * h, psi + 0.5 * h * k1)
        k3 = f(s + 0.5 * h, psi + 0.5 * h * k2)
        k4 = f(s + h, psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    pops = np.abs(psi) ** 2
    n_opt = number_operator("optical", build_basis(N, BasisMode.FIXED_SECTOR))
    return BatchOutcome(n_opt @ pops, pops[-1].copy(), pops.sum(axis=0))


@lru_cache(maxsize=16)
def _liouvillian_parts(N: int, Gamma0: float, kappa_o: float, kappa_m: float):
    """Sparse generators acting on the stacked row-major vectorised sector blocks.

    Returns ``(L_mw, L_opt, L_diss, n_opt_weights, fidelity_index, trace_weights,
    start)`` with ``drho/dt = Gm L_mw rho + Go L_opt rho + L_diss rho``; ``start``
    is the entry of ``|0,N,G><0,N,G|``.
    """
    full = build_basis(N, BasisMode.ALL_SECTORS)
    sl = full.sector_slices
    dims = [2 * k + 1 for k in range(N + 1)]
    offs = np.concatenate([[0], np.cumsum([d * d for d in dims])])
    jumps = [(Gamma0, atom_lowering(full).entries), (kappa_o, annihilation("optical", full).entries),
             (kappa_m, annihilation("microwave", full).entries)]
    decay = (Gamma0 * number_operator("atom", full) + kappa_o * number_operator("optical", full)
             + kappa_m * number_operator("microwave", full))
    n_opt = number_operator("optical", full)
    size = int(offs[-1])
    L_mw = sparse.lil_matrix((size, size), dtype=complex)
    L_opt = sparse.lil_matrix((size, size), dtype=complex)
    L_diss = sparse.lil_matrix((size, size), dtype=complex)
    w_nopt = np.zeros(size)
    w_trace = np.zeros(size)
    for k, d in enumerate(dims):
        blk = slice(offs[k], offs[k + 1])
        eye = sparse.identity(d, format="csr")
        h_mw, h_opt = _chain_parts(k)
        for L, hk in ((L_mw, h_mw), (L_opt, h_opt)):
            hk = sparse.csr_matrix(hk)
            L[blk, blk] = -1j * (sparse.kron(hk, eye) - sparse.kron(eye, hk.T))
        kd = sparse.diags(decay[sl[k]])
        gen = -0.5 * (sparse.kron(kd, eye) + sparse.kron(eye, kd))
        if k < N:
            up = slice(offs[k + 1], offs[k + 2])
            for rate, op in jumps:
                if rate > 0:
                    c = sparse.csr_matrix(math.sqrt(rate) * op[sl[k], sl[k + 1]])
                    L_diss[blk, up] = L_diss[blk, up] + sparse.kron(c, c.conj())
        L_diss[blk, blk] = gen
        diag = offs[k] + np.arange(d) * (d + 1)
        w_nopt[diag] = n_opt[sl[k]]
        w_trace[diag] = 1.0
    fid = int(offs[N] + (dims[N] - 1) * (dims[N] + 1))
    return L_mw.tocsr(), L_opt.tocsr(), L_diss.tocsr(), w_nopt, fid, w_trace, int(offs[N])


def lindblad_transfer(N: int, g_peak: float, T, scale_m=1.0, scale_o=1.0, *, Gamma0: float,
                      kappa_o: float, kappa_m: float, n_steps: int = 2000) -> BatchOutcome:
    """Lindblad evolution of ``|0,N,G><0,N,G|`` for every batch member, in sector blocks."""
    am, ao, T = _batch(g_peak, T, scale_m, scale_o)
    L_mw, L_opt, L_diss, w_nopt, fid, w_trace, start = _liouvillian_parts(
        N, float(Gamma0), float(kappa_o), float(kappa_m))
    rho = np.zeros((L_mw.shape[0], am.size), dtype=complex)
    rho[start] = 1.0
    h = 1.0 / n_steps

    def f(s, y):
        c = 0.5 * math.pi * s
        return (L_mw @ y) * (am * math.sin(c)) + (L_opt @ y) * (ao * math.cos(c)) + (L_diss @ y) * T

    for i in range(n_steps):
        s = i * h
        k1 = f(s, rho)
        k2 = f(s + 0.5 * h, rho + 0.5 * h * k1)
        k3 = f(s + 0.5 * h, rho + 0.5 * h * k2)
        k4 = f(s + h, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    re = rho.real
    return BatchOutcome(w_nopt @ re, re[fid].copy(), w_trace @ re)
