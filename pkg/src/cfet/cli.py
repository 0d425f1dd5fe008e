"""Command-line front end: propagate, bench, sweep, spectrum, selftest.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 selftest
failure.  All outputs are UTF-8 comma-separated files with LF line endings,
a header row, floats at 17 significant digits and NaN spelled ``nan``.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import models, observables
from .bench import BenchRecord, reference_solution, run_error_vs_effort
from .config import ConfigError, RunConfig, load_config
from .engines import EngineError, EngineSpec, EngineKind
from .operators import error_max, hermiticity_defect, spin_operators, unvec, vec, kron, boson_operators
from .propagators import (
    PropagationError,
    SchemeKind,
    SchemeSpec,
    propagate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SELFTEST = 4


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


# ---------------------------------------------------------------------------
# model assembly helpers
# ---------------------------------------------------------------------------

def _build_generator(cfg: RunConfig):
    if cfg.model_kind in ("spin", "dissipative-spin"):
        p = cfg.model
        if cfg.ramp is not None:
            return models.spin_rotating_field_linear_ramp(
                p, cfg.ramp[0], cfg.ramp[1], cfg.t_end - cfg.t_start
            )
        return models.spin_rotating_field(p)
    return models.dicke_generator(cfg.model, backend=cfg.dicke_backend)


def _initial_state(cfg: RunConfig) -> np.ndarray:
    if cfg.model_kind == "spin":
        dim = int(round(2 * cfg.model.j)) + 1
        psi = np.zeros(dim, dtype=complex)
        psi[0] = 1.0  # highest-weight Jz state
        return psi
    if cfg.model_kind == "dissipative-spin":
        dim = int(round(2 * cfg.model.j)) + 1
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return vec(rho)
    return models.dicke_initial_state(cfg.model)


def _observable_functions(cfg: RunConfig):
    """Name -> callable(state) for the configured observable columns."""
    funcs = {}
    if cfg.model_kind in ("spin", "dissipative-spin"):
        ops = spin_operators(cfg.model.j)
        mats = {"jz": ops.jz, "jx": ops.jx, "jy": ops.jy}
        j = cfg.model.j
    else:
        p = cfg.model
        ops = spin_operators(p.j)
        eye_f = np.eye(p.n_max + 1)
        a, ad = boson_operators(p.n_max)
        mats = {
            "jz": kron(ops.jz, eye_f),
            "jx": kron(ops.jx, eye_f),
            "jy": kron(ops.jy, eye_f),
            "n_photon": kron(np.eye(p.spin_dim), ad @ a),
        }
        j = p.j
    closed = cfg.model_kind == "spin"

    def make(name):
        if name in ("iz_paper", "iz_unit"):
            jz = mats["jz"]
            shift = 1.0 / (1.0 if name == "iz_paper" else 2.0) / j

            def f(state):
                rho = np.outer(state, state.conj()) if closed else unvec(state)
                return 0.5 + shift * float(np.real(np.sum(jz.T * rho)))

            return f
        if name not in mats:
            raise ConfigError(f"unknown observable {name!r} for model {cfg.model_kind}")
        mat = mats[name]

        def f(state):
            rho = np.outer(state, state.conj()) if closed else unvec(state)
            return float(np.real(np.sum(mat.T * rho)))

        return f

    for name in cfg.observables:
        funcs[name] = make(name)
    return funcs


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_propagate(cfg: RunConfig, out: Path) -> int:
    gen = _build_generator(cfg)
    state0 = _initial_state(cfg)
    funcs = _observable_functions(cfg)
    closed = cfg.model_kind == "spin"
    defect_cols = ["norm_defect"] if closed else ["trace_defect", "herm_defect"]
    header = ["t", *funcs.keys(), *defect_cols]
    rows = []

    def observer(t, state):
        vals = [f(state) for f in funcs.values()]
        if closed:
            defects = [abs(np.linalg.norm(state) - 1.0)]
        else:
            rho = unvec(state)
            defects = [abs(np.trace(rho).real - 1.0), hermiticity_defect(rho)]
        rows.append([t, *vals, *defects])

    if cfg.t_end <= cfg.t_start:
        write_csv(out, header, [])
        return EXIT_OK
    scheme = SchemeSpec(cfg.scheme_kind, cfg.dt)
    sampler = _StridedObserver(observer, cfg.stride)
    propagate(
        gen, state0, cfg.t_start, cfg.t_end, scheme, cfg.engine_spec(),
        observer=sampler,
    )
    sampler.flush()
    write_csv(out, header, rows)
    return EXIT_OK


class _StridedObserver:
    """Forwards every stride-th sample (plus first and last) to a callback."""

    def __init__(self, callback, stride: int):
        self.callback = callback
        self.stride = max(1, stride)
        self.count = 0
        self.pending = None

    def __call__(self, t, state):
        if self.count % self.stride == 0:
            self.callback(t, state)
            self.pending = None
        else:
            self.pending = (t, state.copy())
        self.count += 1

    def flush(self):
        if self.pending is not None:
            self.callback(*self.pending)
            self.pending = None


def cmd_bench(cfg: RunConfig, out: Path) -> int:
    if not cfg.bench:
        raise ConfigError("bench command requires a [bench] section")
    gen = _build_generator(cfg)
    state0 = _initial_state(cfg)
    engine = cfg.engine_spec()
    t_end = cfg.bench["t_end"]
    dts = cfg.bench["dts"]
    ref_dt = cfg.bench["reference_dt"] or min(dts) / 4
    reference = reference_solution(gen, state0, cfg.t_start, t_end, ref_dt, engine)
    scheme_dts = {kind: list(dts) for kind in cfg.bench["schemes"]}
    records = run_error_vs_effort(
        gen, state0, cfg.t_start, t_end, scheme_dts, engine, reference
    )
    rows = [
        [r.scheme, r.dt, r.n_matvec, r.epsilon, 0.0 if cfg.deterministic else r.wall_seconds]
        for r in records
    ]
    write_csv(out, ["scheme", "dt", "n_matvec", "epsilon", "wall_seconds"], rows)
    return EXIT_OK


def _sweep_point(cfg: RunConfig, value: float):
    """Settle, average, optionally transform one sweep grid point."""
    p = cfg.model
    if cfg.sweep["parameter"] == "mod_frequency":
        p = models.DickeParams(**{**p.__dict__, "mod_frequency": value})
    else:
        p = models.DickeParams(**{**p.__dict__, "coupling": value})
    gen = models.dicke_generator(p, backend=cfg.dicke_backend)
    rho0 = models.dicke_initial_state(p)
    scheme = SchemeSpec(cfg.scheme_kind, cfg.dt)
    engine = cfg.engine_spec()
    ops = spin_operators(p.j)
    jz_full = kron(ops.jz, np.eye(p.n_max + 1))
    a_full = kron(np.eye(p.spin_dim), boson_operators(p.n_max)[0])
    n_full = a_full.conj().T @ a_full
    rho_ss, periods = observables.settle_to_periodic_steady_state(
        gen, rho0, p.mod_frequency, scheme, engine,
        tol=cfg.sweep["settle_tol"], max_periods=cfg.sweep["max_periods"],
    )
    n_samples = cfg.sweep["n_samples"]
    iz = observables.period_averaged(
        gen, rho_ss, p.mod_frequency,
        lambda v: observables.population_inversion_unit(v, p.j, jz_full),
        scheme, engine, n_samples=n_samples, quantity="iz_unit",
    )
    iz_paper = observables.population_inversion_paper(rho_ss, p.j, jz_full)
    nb = observables.period_averaged(
        gen, rho_ss, p.mod_frequency, n_full, scheme, engine,
        n_samples=n_samples, quantity="n_photon",
    )
    s_total, peaks = math.nan, ""
    if cfg.sweep["with_spectrum"] and cfg.spectrum:
        series = observables.correlation_function(
            gen, rho_ss, p.mod_frequency, a_full,
            cfg.spectrum["tau_max"], cfg.spectrum["dtau"], cfg.spectrum["n_phase"],
            scheme, engine,
        )
        grid = np.arange(
            cfg.spectrum["omega_min"], cfg.spectrum["omega_max"], cfg.spectrum["omega_step"]
        )
        series = observables.spectrum(series, grid)
        s_total = series.s_total
        found = observables.find_peaks(grid, series.s_omega, cfg.sweep["min_prominence"])
        peaks = ";".join(f"{w:.8g}:{h:.8g}" for w, h in found)
    return [value, iz.value, iz_paper, nb.value, s_total, peaks, periods, ""]


def cmd_sweep(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if cfg.model_kind != "dicke":
        raise ConfigError("sweep currently supports the dicke model")
    if not cfg.sweep:
        raise ConfigError("sweep command requires a [sweep] section")
    values = cfg.sweep["values"]
    results = [None] * len(values)

    def run_one(i):
        try:
            return _sweep_point(cfg, values[i])
        except (EngineError, PropagationError, observables.ConvergenceError,
                observables.SpectrumError) as err:
            return [values[i], math.nan, math.nan, math.nan, math.nan, "",
                    0, f"{type(err).__name__}: {err}"]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, range(len(values))))
    else:
        results = [run_one(i) for i in range(len(values))]
    write_csv(
        out,
        ["value", "iz_unit", "iz_paper", "n_photon", "s_total", "peaks", "periods", "error"],
        results,
    )
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    if cfg.model_kind != "dicke":
        raise ConfigError("spectrum currently supports the dicke model")
    if not cfg.spectrum:
        raise ConfigError("spectrum command requires a [spectrum] section")
    p = cfg.model
    gen = models.dicke_generator(p, backend=cfg.dicke_backend)
    rho0 = models.dicke_initial_state(p)
    scheme = SchemeSpec(cfg.scheme_kind, cfg.dt)
    engine = cfg.engine_spec()
    a_full = kron(np.eye(p.spin_dim), boson_operators(p.n_max)[0])
    rho_ss, _ = observables.settle_to_periodic_steady_state(
        gen, rho0, p.mod_frequency, scheme, engine,
        tol=cfg.spectrum["settle_tol"], max_periods=cfg.spectrum["max_periods"],
    )
    series = observables.correlation_function(
        gen, rho_ss, p.mod_frequency, a_full,
        cfg.spectrum["tau_max"], cfg.spectrum["dtau"], cfg.spectrum["n_phase"],
        scheme, engine,
    )
    grid = np.arange(cfg.spectrum["omega_min"], cfg.spectrum["omega_max"],
                     cfg.spectrum["omega_step"])
    series = observables.spectrum(series, grid)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["omega", "s_omega"])
        for w, s in zip(series.omega_grid, series.s_omega):
            writer.writerow([_fmt(w), _fmt(s)])
        writer.writerow([])
        writer.writerow(["nb_window", "s_total", "s_zero"])
        writer.writerow([_fmt(series.nb_window), _fmt(series.s_total),
                         _fmt(float(np.real(series.s_tau[0])))])
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def cmd_selftest(seed: int = 0, verbose: bool = True) -> int:
    from dataclasses import replace

    from .bench import slope_fit
    from .operators import DenseMap, lindblad_superop
    from .propagators import (
        OPT_CFET4,
        DenseGenerator,
        PolynomialModulation,
        step_cfet4_opt,
        step_magnus4,
        verify_order_conditions,
    )

    checks: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(seed)

    res = verify_order_conditions()
    worst = max(abs(v) for v in res.values())
    checks.append(("order-conditions", worst < 1e-14, f"max residual {worst:.2e}"))

    perturbed = replace(OPT_CFET4, g5=OPT_CFET4.g5 + 1e-6)
    res_bad = verify_order_conditions(opt=perturbed)
    worst_bad = max(abs(v) for v in res_bad.values())
    checks.append(
        ("order-conditions-mutation", worst_bad > 1e-8,
         f"perturbed g5 detected with residual {worst_bad:.2e}")
    )

    # engine agreement on a random Lindblad generator
    dim = 5
    h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (h + h.conj().T) / 2
    jump = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    lop = lindblad_superop(h, [(0.05, jump)])
    v = rng.standard_normal(dim * dim) + 1j * rng.standard_normal(dim * dim)
    from .engines import expm_action, expm_dense

    exact = expm_dense(lop, 0.3) @ v
    worst_engine = 0.0
    for kind in (EngineKind.CHEBYSHEV_SHIFTED, EngineKind.TAYLOR_STEPS, EngineKind.DENSE_ORACLE):
        got = expm_action(DenseMap(lop), 0.3, v, EngineSpec(kind=kind, tolerance=1e-12))
        worst_engine = max(worst_engine, error_max(got, exact))
    checks.append(("engine-agreement", worst_engine < 1e-9, f"max deviation {worst_engine:.2e}"))

    # local fifth-order defect against the explicit fourth-order exponent,
    # and its intentional breakage under reversed exponential ordering
    def local_defect_slope(reverse: bool) -> float:
        d = 4
        mats = [
            0.5 * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
            for _ in range(4)
        ]
        gen = DenseGenerator(
            mats[0],
            [(m, PolynomialModulation([0.0] * k + [1.0])) for k, m in enumerate(mats[1:], 1)],
        )
        eng = EngineSpec(kind=EngineKind.DENSE_ORACLE)
        dts, errs = [], []
        for p2 in range(3, 9):
            dt = 2.0**-p2
            e = np.eye(d, dtype=complex)
            if reverse:
                c = OPT_CFET4
                times = (0 + c.x1 * dt, 0 + c.x2 * dt, 0 + c.x3 * dt)
                s = expm_action(gen.combination(times, (c.g1, c.g2, c.g3)), dt, e, eng)
                s = expm_action(gen.combination(times, (c.g4, c.g5, c.g4)), dt, s, eng)
                got = expm_action(gen.combination(times, (c.g3, c.g2, c.g1)), dt, s, eng)
            else:
                got = step_cfet4_opt(gen, 0.0, dt, e, eng)
            ref = step_magnus4(gen, 0.0, dt, e)
            dts.append(dt)
            errs.append(error_max(got, ref))
        return slope_fit(dts, errs, engine_tolerance=1e-15)

    slope_ok = local_defect_slope(reverse=False)
    checks.append(("cfet-local-order", abs(slope_ok - 5) < 0.3, f"slope {slope_ok:.2f}"))
    slope_bad = local_defect_slope(reverse=True)
    checks.append(
        ("cfet-ordering-mutation", slope_bad < 4.0,
         f"reversed ordering slope {slope_bad:.2f} (must fall below 4)")
    )

    # dissipative-spin relaxation eigenvalues against the closed forms
    modes = models.spin_resonance_modes(0.01, 1.0)
    lres = models.spin_rotating_frame_superop(
        models.SpinModelParams(j=0.5, transition=1.0, drive=1.0, frequency=1.0, loss=0.01)
    )
    eigs = np.linalg.eigvals(lres)
    expected = np.array([0.0, *modes.eigenvalues])
    worst_eig = max(
        min(abs(e - x) for e in eigs) for x in expected
    )
    checks.append(("lindblad-eigenvalues", worst_eig < 1e-10, f"max deviation {worst_eig:.2e}"))

    # vectorization round trip on random matrices
    worst_rt = 0.0
    for _ in range(20):
        r = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        worst_rt = max(worst_rt, error_max(unvec(vec(r)), r))
    checks.append(("vec-round-trip", worst_rt == 0.0, f"max deviation {worst_rt:.2e}"))

    failed = [c for c in checks if not c[1]]
    if verbose:
        for name, ok, detail in checks:
            print(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}")
        print(f"selftest: {len(checks) - len(failed)}/{len(checks)} passed")
    return EXIT_OK if not failed else EXIT_SELFTEST


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cfet",
        description="Commutator-free exponential time propagation of driven quantum systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("propagate", "bench", "sweep", "spectrum"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--deterministic", action="store_true")
    p = sub.add_parser("selftest")
    p.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if args.command == "selftest":
        return cmd_selftest(seed=args.seed)
    try:
        cfg = load_config(args.config)
        if args.deterministic:
            cfg.deterministic = True
        if args.command == "propagate":
            return cmd_propagate(cfg, args.out)
        if args.command == "bench":
            return cmd_bench(cfg, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, threads=args.threads)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, PropagationError, observables.ConvergenceError,
            observables.SpectrumError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
