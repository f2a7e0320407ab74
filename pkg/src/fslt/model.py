"""Hamiltonians, pulse schedules and physical parameters.

Frequencies enter as ordinary frequencies in MHz and are stored in rad/us
(multiplied by 2*pi once, at ingestion).  Times are in microseconds.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .fockspace import AtomLevel, BasisMode, CompositeBasis, OperatorMatrix, build_basis

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Bad, missing or unknown configuration value."""


# config key -> (PhysicalParams field, scaled by 2*pi)
CONFIG_KEYS: dict[str, tuple[str, bool]] = {
    "Na": ("Na", False),
    "g_m_MHz": ("g_m", True),
    "g_o_MHz": ("g_o", True),
    "Omega1_max_MHz": ("Omega1_max", True),
    "Omega2_max_MHz": ("Omega2_max", True),
    "Delta_MHz": ("Delta", True),
    "delta_MHz": ("delta", True),
    "g_MHz": ("g", True),
    "kappa_o_MHz": ("kappa_o", True),
    "kappa_m_MHz": ("kappa_m", True),
    "Gamma0_MHz": ("Gamma0", True),
    "T_us": ("T", False),
    "N_excitations": ("N", False),
}


@dataclass(frozen=True)
class PhysicalParams:
    """Model parameters; every rate and coupling in rad/us, ``T`` in us."""

    Na: int
    g_m: float
    g_o: float
    Omega1_max: float
    Omega2_max: float
    Delta: float
    delta: float
    g: float
    kappa_o: float
    kappa_m: float
    Gamma0: float
    T: float
    N: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{f.name} must be finite and non-negative, got {v}")
        if self.Na < 1:
            raise ConfigError("Na must be at least 1")
        if self.T <= 0:
            raise ConfigError(f"T must be positive, got {self.T}")

    @classmethod
    def from_config(cls, mapping: Mapping[str, object]) -> "PhysicalParams":
        unknown = sorted(set(mapping) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key: {unknown[0]}")
        kwargs = {}
        for key, (name, scaled) in CONFIG_KEYS.items():
            if key not in mapping:
                raise ConfigError(f"missing config key: {key}")
            value = _number(key, mapping[key])
            if name in ("Na", "N"):
                if value != int(value):
                    raise ConfigError(f"{key} must be an integer, got {value}")
                value = int(value)
            kwargs[name] = TWO_PI * value if scaled else value
        return cls(**kwargs)

    def to_config(self) -> dict[str, float]:
        out = {}
        for key, (name, scaled) in CONFIG_KEYS.items():
            v = getattr(self, name)
            out[key] = v / TWO_PI if scaled else v
        return out

    def with_rates(self, kappa_o=None, kappa_m=None, Gamma0=None) -> "PhysicalParams":
        d = asdict(self)
        for k, v in (("kappa_o", kappa_o), ("kappa_m", kappa_m), ("Gamma0", Gamma0)):
            if v is not None:
                d[k] = v
        return PhysicalParams(**d)

    def without_dissipation(self) -> "PhysicalParams":
        return self.with_rates(0.0, 0.0, 0.0)


def _number(key, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def default_config() -> dict[str, object]:
    text = resources.files("fslt").joinpath("data/defaults.toml").read_text()
    return tomllib.loads(text)


def read_config(path: str | Path) -> dict[str, object]:
    """Read a TOML config; top-level keys or keys inside any tables are merged flat."""
    try:
        raw = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    flat: dict[str, object] = {}

    def walk(d):
        for k, v in d.items():
            if isinstance(v, dict):
                walk(v)
            elif k in flat:
                raise ConfigError(f"duplicate config key: {k}")
            else:
                flat[k] = v

    walk(raw)
    return flat


def load_params(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> PhysicalParams:
    """Shipped defaults, overlaid by ``path`` (if given), overlaid by ``overrides``."""
    return PhysicalParams.from_config(resolve_config(path, overrides))


def resolve_config(path=None, overrides=None) -> dict[str, object]:
    cfg = default_config()
    if path is not None and str(path) != "defaults":
        user = read_config(path)
        unknown = sorted(set(user) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key: {unknown[0]}")
        cfg.update(user)
    for k, v in (overrides or {}).items():
        if k not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {k}")
        if v is not None:
            cfg[k] = v
    return cfg


# --- pulse schedule -------------------------------------------------------


@dataclass(frozen=True)
class PulseSchedule:
    """``Gm(t) = g sin(pi t / 2T)``, ``Go(t) = g cos(pi t / 2T)``.

    ``scale_m`` and ``scale_o`` rescale the two peaks independently (used for
    coupling disorder); both are 1 for the nominal schedule.
    """

    g_peak: float
    T: float
    scale_m: float = 1.0
    scale_o: float = 1.0
    family: str = "sincos"

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"pump duration must be positive, got {self.T}")
        if self.family != "sincos":
            raise ValueError(f"unknown schedule family {self.family!r}")

    def __call__(self, t: float) -> tuple[float, float]:
        return envelopes(self, t)


def envelopes(schedule: PulseSchedule, t: float) -> tuple[float, float]:
    T = schedule.T
    if not (-1e-12 * T <= t <= T * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, {T}]")
    phase = math.pi * t / (2 * T)
    return (schedule.g_peak * schedule.scale_m * math.sin(phase),
            schedule.g_peak * schedule.scale_o * math.cos(phase))


def collective_coupling(Na: int, g_single: float) -> float:
    """Blockade-enhanced superatom coupling ``sqrt(Na) * g_single``."""
    if Na < 1:
        raise ValueError("Na must be at least 1")
    return math.sqrt(Na) * g_single


def blockade_radius(C6: float, Delta: float, Na: int, g_m: float, Omega1: float) -> float:
    """Collective blockade radius ``(Delta*C6 / (sqrt(Na) g_m Omega1))**(1/6)``.

    The factors of 2*pi cancel, so plain MHz values (and C6 in MHz um^6) give
    the radius in um.
    """
    for name, v in (("C6", C6), ("Delta", Delta), ("Na", Na), ("g_m", g_m), ("Omega1", Omega1)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return (Delta * C6 / (math.sqrt(Na) * g_m * Omega1)) ** (1.0 / 6.0)


# --- superatom dual-mode JC and FSL chain ---------------------------------


@lru_cache(maxsize=64)
def jc_components(basis: CompositeBasis) -> tuple[np.ndarray, np.ndarray]:
    """Real symmetric ``(H_mw, H_opt)`` with ``H_JC = Gm*H_mw + Go*H_opt``."""
    d = basis.dim
    h_mw = np.zeros((d, d))
    h_opt = np.zeros((d, d))
    for i, (n_opt, n_mw, atom) in enumerate(basis.states):
        if atom != AtomLevel.G:
            continue
        if n_mw > 0 and (n_opt, n_mw - 1, AtomLevel.R) in basis:
            j = basis.index((n_opt, n_mw - 1, AtomLevel.R))
            h_mw[j, i] = h_mw[i, j] = math.sqrt(n_mw)
        if n_opt > 0 and (n_opt - 1, n_mw, AtomLevel.R) in basis:
            j = basis.index((n_opt - 1, n_mw, AtomLevel.R))
            h_opt[j, i] = h_opt[i, j] = math.sqrt(n_opt)
    h_mw.flags.writeable = False
    h_opt.flags.writeable = False
    return h_mw, h_opt


def superatom_jc_hamiltonian(Gm: float, Go: float, basis: CompositeBasis) -> OperatorMatrix:
    """``Gm |R><G| b + Go |R><G| a + h.c.`` on ``basis``."""
    h_mw, h_opt = jc_components(basis)
    return OperatorMatrix(Gm * h_mw + Go * h_opt, basis)


def jc_drive(basis: CompositeBasis, schedule: PulseSchedule):
    """Time-dependent JC Hamiltonian ``t -> ndarray`` under ``schedule``."""
    h_mw, h_opt = jc_components(basis)

    def H(t: float) -> np.ndarray:
        gm, go = envelopes(schedule, t)
        return gm * h_mw + go * h_opt

    return H


@dataclass(frozen=True)
class ChainModel:
    N: int
    u: tuple[float, ...]
    v: tuple[float, ...]

    def matrix(self) -> np.ndarray:
        d = 2 * self.N + 1
        h = np.zeros((d, d))
        for j in range(1, self.N + 1):
            h[2 * j - 2, 2 * j - 1] = h[2 * j - 1, 2 * j - 2] = self.u[j - 1]
            h[2 * j - 1, 2 * j] = h[2 * j, 2 * j - 1] = self.v[j - 1]
        return h

    @property
    def hoppings(self) -> np.ndarray:
        """Interleaved bond strengths ``u1, v1, u2, v2, ...`` along the chain."""
        return np.column_stack([self.u, self.v]).ravel()


def chain_model(N: int, Gm: float, Go: float) -> ChainModel:
    u = tuple(Gm * math.sqrt(N - j + 1) for j in range(1, N + 1))
    v = tuple(Go * math.sqrt(j) for j in range(1, N + 1))
    return ChainModel(N, u, v)


def fsl_chain_hamiltonian(N: int, Gm: float, Go: float) -> tuple[ChainModel, OperatorMatrix]:
    """Extended-SSH chain with ``u_j = Gm sqrt(N-j+1)`` and ``v_j = Go sqrt(j)``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    chain = chain_model(N, Gm, Go)
    return chain, OperatorMatrix(chain.matrix(), build_basis(N, BasisMode.FIXED_SECTOR))


# --- single atom, four levels ----------------------------------------------

LEVELS = ("g", "r1", "r2", "e")


@dataclass(frozen=True, eq=False)
class SingleAtomBasis:
    """``{g, r1, r2, e}`` times optical and microwave Fock states ``0..n_max``."""

    n_max: int
    states: tuple[tuple[str, int, int], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("mode truncation must be at least one photon")
        r = range(self.n_max + 1)
        object.__setattr__(self, "states", tuple((lv, a, b) for lv in LEVELS for a in r for b in r))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self._index[tuple(state)]


def _transition(basis: SingleAtomBasis, upper: str, lower: str, mode: str | None) -> np.ndarray:
    """``|upper><lower|`` times an optional lowering operator on ``mode``."""
    d = basis.dim
    m = np.zeros((d, d))
    for i, (lv, n_opt, n_mw) in enumerate(basis.states):
        if lv != lower:
            continue
        amp, no, nw = 1.0, n_opt, n_mw
        if mode == "optical":
            amp, no = math.sqrt(n_opt), n_opt - 1
        elif mode == "microwave":
            amp, nw = math.sqrt(n_mw), n_mw - 1
        if no < 0 or nw < 0:
            continue
        m[basis.index((upper, no, nw)), i] = amp
    return m


@lru_cache(maxsize=16)
def _four_level_terms(basis: SingleAtomBasis):
    return (
        _transition(basis, "g", "r1", None),
        _transition(basis, "r2", "r1", "microwave"),
        _transition(basis, "e", "r2", None),
        _transition(basis, "e", "g", "optical"),
        _transition(basis, "r2", "g", "microwave"),
        _transition(basis, "r2", "g", "optical"),
    )


def rabi_frequencies(params: PhysicalParams, t: float) -> tuple[float, float]:
    """Pump envelopes ``Omega1 = Omega1m sin(pi t/2T)``, ``Omega2 = Omega2m cos(pi t/2T)``."""
    phase = math.pi * t / (2 * params.T)
    return params.Omega1_max * math.sin(phase), params.Omega2_max * math.cos(phase)


@lru_cache(maxsize=16)
def _full_stack(basis: SingleAtomBasis) -> np.ndarray:
    """The four raising terms and their transposes, flattened, one per row."""
    terms = _four_level_terms(basis)[:4]
    return np.array([m.ravel() for m in terms] + [m.T.ravel() for m in terms], dtype=complex)


def full_single_atom_hamiltonian(params: PhysicalParams, t: float, basis: SingleAtomBasis) -> np.ndarray:
    """Four-level single-atom Hamiltonian in the interaction picture, phases explicit.

    ``(Omega1/2) e^{iDt}|g><r1| + g_m e^{iDt}|r2><r1| b + (Omega2/2) e^{idt}|e><r2|
    + g_o e^{idt}|e><g| a + h.c.``
    """
    o1, o2 = rabi_frequencies(params, t)
    ph_D = cmath.exp(1j * params.Delta * t)
    ph_d = cmath.exp(1j * params.delta * t)
    c = [o1 / 2 * ph_D, params.g_m * ph_D, o2 / 2 * ph_d, params.g_o * ph_d]
    coef = np.array(c + [x.conjugate() for x in c])
    return (coef @ _full_stack(basis)).reshape(basis.dim, basis.dim)


def effective_single_atom_hamiltonian(params: PhysicalParams, t: float, basis: SingleAtomBasis) -> np.ndarray:
    """Two-photon Hamiltonian left after eliminating ``r1`` and ``e``; Stark shifts dropped."""
    if params.Delta <= 0 or params.delta <= 0:
        raise ValueError("adiabatic elimination needs positive detunings")
    *_, q_mw, q_opt = _four_level_terms(basis)
    o1, o2 = rabi_frequencies(params, t)
    h = (params.g_m * o1 / (2 * params.Delta)) * q_mw + (params.g_o * o2 / (2 * params.delta)) * q_opt
    return (h + h.T).astype(complex)


def two_atom_blockade_hamiltonian(drive: float, V: float) -> np.ndarray:
    """Two atoms ``{g, r}`` with equal drive and a shift ``V`` on ``|rr>``.

    Basis order ``gg, gr, rg, rr``; each atom sees ``drive (|r><g| + h.c.)``.
    """
    h = np.zeros((4, 4))
    for lo, hi in ((0, 1), (0, 2), (1, 3), (2, 3)):
        h[lo, hi] = h[hi, lo] = drive
    h[3, 3] = V
    return h
