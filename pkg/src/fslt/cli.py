"""Command-line front end: ``fslt <command> [options]``.

Every command writes its data product(s) and a ``manifest.json`` into the
output directory and prints one summary line.  Exit codes: 0 success,
2 configuration/input error, 3 numerical-contract violation.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .dynamics import NumericalContractError
from .emit import (FORMATS, OutputError, disorder_table, heatmap_table, read_manifest, trajectory_table,
                   write_manifest, write_table)
from .fockspace import BasisMode, build_basis
from .model import (TWO_PI, ConfigError, PhysicalParams, PulseSchedule, blockade_radius, envelopes, jc_drive,
                    resolve_config)
from .spectral import analytic_spectrum, spectrum_trajectory, zero_mode_analytic, zero_mode_profile_rows

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# (flags, config key, help)
PARAM_FLAGS = [
    (("--Na",), "Na", "number of atoms in the superatom"),
    (("--g-m-MHz",), "g_m_MHz", "single-atom microwave coupling [MHz, ordinary frequency]"),
    (("--g-o-MHz",), "g_o_MHz", "single-atom optical coupling [MHz, ordinary frequency]"),
    (("--Omega1-max-MHz",), "Omega1_max_MHz", "peak UV Rabi frequency [MHz, ordinary frequency]"),
    (("--Omega2-max-MHz",), "Omega2_max_MHz", "peak 481 nm Rabi frequency [MHz, ordinary frequency]"),
    (("--Delta-MHz",), "Delta_MHz", "detuning of r1 [MHz, ordinary frequency]"),
    (("--delta-MHz",), "delta_MHz", "detuning of e [MHz, ordinary frequency]"),
    (("--g-MHz",), "g_MHz", "peak FSL coupling g [MHz, ordinary frequency]"),
    (("--kappa-o-MHz",), "kappa_o_MHz", "optical cavity decay rate [MHz, ordinary frequency]"),
    (("--kappa-m-MHz",), "kappa_m_MHz", "microwave resonator decay rate [MHz, ordinary frequency]"),
    (("--Gamma0-MHz",), "Gamma0_MHz", "superatom Rydberg decay rate [MHz, ordinary frequency]"),
    (("--T-us", "--T"), "T_us", "pump duration T [us]"),
    (("--N-excitations", "--N"), "N_excitations", "total excitation number N (FSL has 2N+1 sites)"),
]


class CliError(ValueError):
    pass


def _floats(text):
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML parameter file, or 'defaults' for the shipped values; flags override it")
    common.add_argument("--out", metavar="DIR", help="output directory [default: $FSLT_OUT_DIR/<command>]")
    common.add_argument("--format", choices=FORMATS, default="csv", help="table format (default csv)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes for sweeps [default: available CPUs]")
    for flags, key, help_ in PARAM_FLAGS:
        common.add_argument(*flags, dest=key, type=_floats, default=None, metavar="X", help=help_)

    p = argparse.ArgumentParser(prog="fslt", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_, allow_abbrev=False)

    s = add("spectrum", "instantaneous spectrum along the pump schedule")
    s.add_argument("--model", choices=("chain", "jc-all"), default="chain",
                   help="N-excitation FSL chain, or the JC model on every sector up to N")
    s.add_argument("--points", type=int, default=201, help="number of sampled times in [0, T]")

    s = add("zero-mode", "zero-energy defect state profile over the FSL sites")
    s.add_argument("--ratio", type=float, default=None, help="coupling ratio Gm/Go (dimensionless; 'inf' allowed)")
    s.add_argument("--t-us", type=float, default=None, help="take Gm, Go from the schedule at this time [us]")

    for name, help_ in (("transfer", "coherent pumping |0,N,G> -> |N,0,G> (Schroedinger equation)"),
                        ("dissipative", "pumping with cavity and superatom decay (Lindblad equation)")):
        s = add(name, help_)
        s.add_argument("--step-us", type=float, default=None, help="RK4 step [us] (default T/20000)")
        s.add_argument("--samples", type=int, default=500, help="recorded samples per run")

    s = add("disorder", "Monte Carlo over relative coupling errors, with dissipation")
    s.add_argument("--eta", type=float, nargs="+", default=None,
                   help="disorder width(s) with eta1 = eta2 (dimensionless)")
    s.add_argument("--eta1", type=float, default=None, help="microwave coupling error width (dimensionless)")
    s.add_argument("--eta2", type=float, default=None, help="optical coupling error width (dimensionless)")
    s.add_argument("--samples", type=int, default=1001, help="samples per eta point")
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--n-steps", type=int, default=ex.MC_STEPS, help="RK4 steps per pulse (step = T/n)")

    s = add("heatmap", "last-site fidelity over (N, T)")
    s.add_argument("--N-list", type=int, nargs="+", default=None, help="excitation numbers (default 2,4,...,32)")
    s.add_argument("--T-list", type=float, nargs="+", default=None, help="durations [us]")
    s.add_argument("--T-min-us", type=float, default=1.0, help="first duration [us] when no --T-list")
    s.add_argument("--T-max-us", type=float, default=150.0, help="last duration [us] when no --T-list")
    s.add_argument("--T-step-us", type=float, default=1.0, help="duration step [us] when no --T-list")
    s.add_argument("--dissipative", action="store_true", help="include the configured decay rates")
    s.add_argument("--n-steps", type=int, default=ex.HEATMAP_STEPS, help="RK4 steps per pulse (step = T/n)")

    s = add("critical-t", "scan unitary fidelity over T and report its local maxima")
    s.add_argument("--T-min-us", type=float, default=4.0, help="scan start [us]")
    s.add_argument("--T-max-us", type=float, default=20.0, help="scan end [us]")
    s.add_argument("--resolution-us", type=float, default=0.05, help="scan step [us], at most 0.05")
    s.add_argument("--n-steps", type=int, default=ex.HEATMAP_STEPS, help="RK4 steps per pulse (step = T/n)")

    s = add("validate-elimination", "four-level single atom versus its two-photon reduction")
    s.add_argument("--n-max", type=int, default=1, help="photons per mode kept in the truncation")
    s.add_argument("--detuning-scale", type=float, default=1.0, help="multiply both detunings by this factor (dimensionless)")

    s = add("validate-blockade", "two blockaded atoms versus one")
    s.add_argument("--drive-MHz", type=float, default=1.0, help="per-atom drive [MHz, ordinary frequency]")
    s.add_argument("--V-MHz", type=float, default=1000.0, help="van der Waals shift of |rr> [MHz, ordinary frequency]")

    s = add("blockade-radius", "collective blockade radius from C6 and the configured couplings")
    s.add_argument("--C6-MHz-um6", type=float, required=True, help="dispersion coefficient [MHz um^6]")

    s = add("basis", "dump the truncated basis")
    s.add_argument("--mode", choices=("fixed", "all"), default="all", help="one sector, or every sector up to N")

    s = sub.add_parser("replay", help="re-run a command from its manifest", allow_abbrev=False)
    s.add_argument("manifest", help="manifest.json written by an earlier run")
    s.add_argument("--out", metavar="DIR", help="output directory [default: alongside a fresh run dir]")
    s.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    return p


_GLOBAL = {"config", "out", "format", "workers", "command"}


def _command_options(args: argparse.Namespace) -> dict:
    keys = {key for _, key, _ in PARAM_FLAGS} | _GLOBAL
    return {k: v for k, v in sorted(vars(args).items()) if k not in keys}


def _out_dir(out: str | None, command: str) -> Path:
    if out:
        return Path(out)
    root = os.environ.get("FSLT_OUT_DIR", "fslt-out")
    return Path(root) / command


# --- command implementations: (params, opts, out, fmt, workers) -> (files, summary, seed) ---


def _spectrum(params, o, out, fmt, workers):
    N = params.N
    if o["points"] < 2:
        raise CliError("--points must be at least 2")
    sched = PulseSchedule(params.g, params.T)
    mode = BasisMode.FIXED_SECTOR if o["model"] == "chain" else BasisMode.ALL_SECTORS
    basis = build_basis(N, mode)
    times = np.linspace(0.0, params.T, o["points"])
    snaps = spectrum_trajectory(jc_drive(basis, sched), times)
    mid = (basis.dim - 1) // 2 if basis.dim % 2 else 0
    rows = [[s.t, i - mid, e] for s in snaps for i, e in enumerate(s.eigenvalues)]
    f = write_table(out / "spectrum.csv", ["t_us", "k", "eigenvalue_rad_per_us"], rows, fmt)
    if mode is BasisMode.FIXED_SECTOR:
        ref = analytic_spectrum(N, params.g, 0.0)
        dev = max(float(np.max(np.abs(s.eigenvalues - ref))) for s in snaps) / params.g
        summary = f"max_flat_band_deviation_over_g={dev:.3e}"
    else:
        summary = f"levels={basis.dim}"
    return [f], f"spectrum N={N} points={len(times)} {summary}", None


def _zero_mode(params, o, out, fmt, workers):
    if o["t_us"] is not None:
        Gm, Go = envelopes(PulseSchedule(params.g, params.T), o["t_us"])
    else:
        r = 1.0 if o["ratio"] is None else o["ratio"]
        if r < 0:
            raise CliError("--ratio must be non-negative")
        Gm, Go = (1.0, 0.0) if math.isinf(r) else (r, 1.0)
    zm = zero_mode_analytic(params.N, Gm, Go)
    f = write_table(out / "zero_mode.csv", ["site", "amplitude", "population"], zero_mode_profile_rows(zm), fmt)
    peak = int(np.argmax(zm.populations)) + 1
    return [f], f"zero-mode N={params.N} center_site={zm.center_site:.6g} argmax_site={peak}", None


def _transfer_like(dissipative):
    def run(params, o, out, fmt, workers):
        if o["samples"] < 1:
            raise CliError("--samples must be positive")
        res = ex.run_transfer(params, dissipative=dissipative, step=o["step_us"], samples=o["samples"])
        header, rows = trajectory_table(res.trajectory)
        f = write_table(out / "trajectory.csv", header, rows, fmt)
        line = (f"{'dissipative' if dissipative else 'transfer'} N={res.N} T_us={res.T:g} "
                f"final_n_optical={res.final_n_optical:.3f} fidelity={res.fidelity:.4f}")
        if dissipative:
            t_pk, n_pk = ex.trajectory_peak(res.trajectory)
            line += f" peak_n_optical={n_pk:.3f} peak_t_us={t_pk:.3f}"
        else:
            line += f" P0_final={res.trajectory.eigen_populations[-1, 0]:.4f}"
        return [f], line, None
    return run


def _disorder(params, o, out, fmt, workers):
    if o["eta"] is not None and (o["eta1"] is not None or o["eta2"] is not None):
        raise CliError("give either --eta or --eta1/--eta2")
    if o["samples"] < 1:
        raise CliError("--samples must be positive")
    if o["eta"] is not None:
        res = ex.disorder_scan(params, o["eta"], o["samples"], o["seed"], workers, o["n_steps"])
    else:
        e1 = o["eta1"] if o["eta1"] is not None else 0.1
        e2 = o["eta2"] if o["eta2"] is not None else e1
        res = ex.disorder_monte_carlo(params, e1, e2, o["samples"], o["seed"], workers, n_steps=o["n_steps"])
    header, rows = disorder_table(res)
    f = write_table(out / "disorder.csv", header, rows, fmt)
    means = " ".join(f"{v:.4f}" for v in res.values)
    return [f], f"disorder samples={res.sample_count} seed={res.master_seed} mean_n_optical={means}", o["seed"]


def _heatmap(params, o, out, fmt, workers):
    Ns = o["N_list"] or list(range(2, 33, 2))
    if o["T_list"]:
        Ts = np.asarray(o["T_list"], dtype=float)
    else:
        lo, hi, st = o["T_min_us"], o["T_max_us"], o["T_step_us"]
        if not (0 < lo <= hi) or st <= 0:
            raise CliError("invalid T grid")
        Ts = lo + st * np.arange(int(math.floor((hi - lo) / st + 1e-9)) + 1)
    res = ex.fidelity_heatmap(params, Ns, Ts, o["dissipative"], workers, o["n_steps"])
    header, rows = heatmap_table(res)
    f = write_table(out / "heatmap.csv", header, rows, fmt)
    worst = float(res.values.max(axis=1).min())
    return [f], f"heatmap rows={len(Ns)} cols={len(Ts)} min_row_max_fidelity={worst:.4f}", None


def _critical_t(params, o, out, fmt, workers):
    scan = ex.critical_durations(params, params.N, (o["T_min_us"], o["T_max_us"]), o["resolution_us"],
                                 o["n_steps"])
    f1 = write_table(out / "critical_t.csv", ["T_us", "fidelity", "n_optical"],
                     zip(scan.T_values, scan.fidelity, scan.n_optical), fmt)
    rows = [["scan", t] for t in scan.maxima] + [["area_theorem", t] for t in scan.theoretical]
    f2 = write_table(out / "critical_t_maxima.csv", ["source", "T_us"], rows, fmt)
    found = ",".join(f"{t:.2f}" for t in scan.maxima)
    grid = ",".join(f"{t:.3f}" for t in scan.theoretical)
    return [f1, f2], f"critical-t N={params.N} maxima_us={found} area_theorem_us={grid}", None


def _validate_elimination(params, o, out, fmt, workers):
    if o["n_max"] < 1 or o["detuning_scale"] <= 0:
        raise CliError("--n-max must be >= 1 and --detuning-scale positive")
    p = params
    if o["detuning_scale"] != 1.0:
        p = PhysicalParams(**{**params.__dict__, "Delta": params.Delta * o["detuning_scale"],
                              "delta": params.delta * o["detuning_scale"]})
    rep = ex.validate_adiabatic_elimination(p, o["n_max"])
    names = ["_".join(map(str, s)) for s in rep.shared_states]
    header = ["t_us"] + [f"full_{n}" for n in names] + [f"eff_{n}" for n in names]
    rows = [[t, *a, *b] for t, a, b in zip(rep.times, rep.full_populations, rep.effective_populations)]
    f = write_table(out / "elimination.csv", header, rows, fmt)
    return [f], (f"validate-elimination max_deviation={rep.max_deviation:.4g} "
                 f"ratios={rep.detuning_ratios[0]:.2f},{rep.detuning_ratios[1]:.2f} warning={rep.warning}"), None


def _validate_blockade(params, o, out, fmt, workers):
    if o["V_MHz"] < 0:
        raise CliError("--V-MHz must be non-negative")
    rep = ex.validate_blockade(TWO_PI * o["drive_MHz"], TWO_PI * o["V_MHz"])
    f = write_table(out / "blockade.csv", ["drive_MHz", "V_MHz", "enhancement_ratio", "double_excitation_max"],
                    [[o["drive_MHz"], o["V_MHz"], rep.enhancement_ratio, rep.double_excitation_max]], fmt)
    return [f], (f"validate-blockade enhancement_ratio={rep.enhancement_ratio:.4f} "
                 f"double_excitation_max={rep.double_excitation_max:.3e}"), None


def _blockade_radius(params, o, out, fmt, workers):
    c = params.to_config()
    Rb = blockade_radius(o["C6_MHz_um6"], c["Delta_MHz"], params.Na, c["g_m_MHz"], c["Omega1_max_MHz"])
    f = write_table(out / "blockade_radius.csv", ["C6_MHz_um6", "Delta_MHz", "Na", "g_m_MHz", "Omega1_MHz", "R_b_um"],
                    [[o["C6_MHz_um6"], c["Delta_MHz"], params.Na, c["g_m_MHz"], c["Omega1_max_MHz"], Rb]], fmt)
    return [f], f"blockade-radius R_b_um={Rb:.6g}", None


def _basis(params, o, out, fmt, workers):
    basis = build_basis(params.N, BasisMode(o["mode"]))
    rows = [[i, s.n_opt, s.n_mw, s.atom.name, s.excitation, basis.site_of(i)] for i, s in enumerate(basis.states)]
    f = write_table(out / "basis.csv", ["ordinal", "n_opt", "n_mw", "atom", "sector", "site"], rows, fmt)
    return [f], f"basis N={params.N} mode={o['mode']} states={basis.dim}", None


COMMANDS = {
    "spectrum": _spectrum,
    "zero-mode": _zero_mode,
    "transfer": _transfer_like(False),
    "dissipative": _transfer_like(True),
    "disorder": _disorder,
    "heatmap": _heatmap,
    "critical-t": _critical_t,
    "validate-elimination": _validate_elimination,
    "validate-blockade": _validate_blockade,
    "blockade-radius": _blockade_radius,
    "basis": _basis,
}


def execute(command: str, config: dict, options: dict, out: Path, fmt: str = "csv",
            workers: int | None = None) -> str:
    """Run ``command`` from a resolved config mapping; returns the summary line."""
    params = PhysicalParams.from_config(config)
    t0 = time.perf_counter()
    files, summary, seed = COMMANDS[command](params, options, out, fmt, workers)
    write_manifest(out / "manifest.json", command=command, options={**options, "format": fmt}, config=config,
                   outputs=files, seed=seed, wall_time_s=time.perf_counter() - t0, summary=summary)
    return summary


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        if args.command == "replay":
            m = read_manifest(args.manifest)
            opts = dict(m["options"])
            fmt = opts.pop("format", "csv")
            out = Path(args.out) if args.out else _out_dir(None, m["command"])
            summary = execute(m["command"], m["config"], opts, out, fmt, args.workers)
        else:
            overrides = {key: getattr(args, key) for _, key, _ in PARAM_FLAGS}
            config = resolve_config(args.config, overrides)
            out = _out_dir(args.out, args.command)
            summary = execute(args.command, config, _command_options(args), out, args.format, args.workers)
    except NumericalContractError as exc:
        print(f"fslt: numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CliError, OutputError, ValueError, KeyError, OSError) as exc:
        print(f"fslt: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
