"""Expectation values, periodic steady states, two-time correlations, spectra.

The two-time machinery uses the regression property of Markovian master
equations: ``<a+(t'+tau) a(t')>`` is obtained by propagating the non-hermitian
matrix ``a rho(t')`` forward in ``tau`` with the very same Liouvillian
propagator used for ``rho`` itself.  All phase samples ``t'`` of one
modulation period ride along in a single state stack on a common time
lattice, so every stage exponential is shared.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.signal
import scipy.sparse.linalg

from .engines import EffortCounter, EngineSpec
from .operators import error_max, unvec, vec
from .propagators import Generator, SchemeSpec, propagate, _STEPPERS

__all__ = [
    "ConvergenceError",
    "SpectrumError",
    "expectation",
    "population_inversion_paper",
    "population_inversion_unit",
    "PeriodAverage",
    "settle_to_periodic_steady_state",
    "period_averaged",
    "SpectrumSeries",
    "correlation_function",
    "spectrum",
    "find_peaks",
]


class ConvergenceError(RuntimeError):
    """Periodic steady state not reached within the period budget."""

    def __init__(self, message: str, residual: float = np.nan, periods: int = 0):
        super().__init__(message)
        self.residual = residual
        self.periods = periods


class SpectrumError(RuntimeError):
    """Correlation data unusable for a spectrum (insufficient decay)."""


def expectation(op: np.ndarray, rho: np.ndarray) -> complex:
    """``trace(op @ rho)``; accepts a vectorized density as well."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = unvec(rho)
    if op.shape != rho.shape:
        raise ValueError(f"shape mismatch: {op.shape} vs {rho.shape}")
    return complex(np.sum(op.T * rho))


def _mean_jz(rho_or_value, j: float, jz_op: np.ndarray | None) -> float:
    if np.isscalar(rho_or_value):
        return float(np.real(rho_or_value))
    rho = np.asarray(rho_or_value)
    if jz_op is None:
        from .models import spin_operators

        dim = int(round(2 * j)) + 1
        rho_m = unvec(rho) if rho.ndim == 1 else rho
        if rho_m.shape[0] != dim:
            raise ValueError("pass jz_op explicitly for composite systems")
        jz_op = spin_operators(j).jz
    return float(np.real(expectation(jz_op, rho_or_value)))


def population_inversion_paper(rho_or_value, j: float, jz_op: np.ndarray | None = None) -> float:
    """Printed inversion measure ``1/2 + <Jz>/j`` (ranges over [-1/2, 3/2])."""
    return 0.5 + _mean_jz(rho_or_value, j, jz_op) / j


def population_inversion_unit(rho_or_value, j: float, jz_op: np.ndarray | None = None) -> float:
    """Unit-normalized inversion ``1/2 + <Jz>/(2j)``, 0 at the ground state."""
    return 0.5 + _mean_jz(rho_or_value, j, jz_op) / (2 * j)


# ---------------------------------------------------------------------------
# periodic steady state
# ---------------------------------------------------------------------------

def _period_scheme(scheme: SchemeSpec, period: float) -> SchemeSpec:
    n = max(1, int(round(period / scheme.dt)))
    return SchemeSpec(scheme.kind, period / n)


def settle_to_periodic_steady_state(
    gen: Generator,
    rho0: np.ndarray,
    mod_frequency: float,
    scheme: SchemeSpec,
    engine: EngineSpec,
    tol: float = 1e-8,
    max_periods: int = 2000,
    method: str = "auto",
) -> tuple[np.ndarray, int]:
    """Stroboscopic fixed point of whole-period propagation, at phase zero.

    Propagates over periods ``2 pi / mod_frequency`` until the entrywise
    change per period drops below ``tol``.  ``method="power"`` is plain
    repeated propagation; ``"arnoldi"`` finds the dominant eigenvector of the
    one-period propagator (far fewer period applications when the relaxation
    is slow) and then verifies the same residual, so the returned state always
    satisfies the fixed-point contract.  ``"auto"`` tries a short power burn-in
    and switches.  Raises :class:`ConvergenceError` when the budget runs out
    (an undamped generator never contracts).
    """
    period = 2 * math.pi / mod_frequency
    pscheme = _period_scheme(scheme, period)
    applications = 0

    def period_map(v: np.ndarray) -> np.ndarray:
        nonlocal applications
        applications += 1
        if applications > max_periods:
            raise ConvergenceError(
                f"no periodic steady state within {max_periods} periods",
                periods=applications,
            )
        return propagate(gen, v, 0.0, period, pscheme, engine).final_state

    def normalized(v: np.ndarray) -> np.ndarray:
        rho = unvec(v)
        rho = (rho + rho.conj().T) / 2
        tr = np.trace(rho)
        if abs(tr) < 1e-14:
            raise ConvergenceError("candidate steady state has vanishing trace")
        return vec(rho / tr)

    v = np.asarray(rho0, dtype=complex).copy()
    burn_in = 8 if method == "auto" else (max_periods if method == "power" else 0)
    residual = np.inf
    for _ in range(burn_in):
        v_next = period_map(v)
        residual = error_max(v_next, v)
        v = v_next
        if residual < tol:
            return normalized(v), applications
    if method == "power":
        raise ConvergenceError(
            f"power iteration residual {residual:.3e} above tol after {max_periods} periods",
            residual=residual,
            periods=applications,
        )

    linop = scipy.sparse.linalg.LinearOperator(
        (v.size, v.size), matvec=period_map, dtype=complex
    )
    try:
        _, vecs = scipy.sparse.linalg.eigs(
            linop,
            k=1,
            which="LM",
            v0=v,
            ncv=min(v.size, 40),
            maxiter=50,
            tol=min(tol * 1e-3, 1e-11),
        )
    except scipy.sparse.linalg.ArpackNoConvergence as err:
        raise ConvergenceError(f"Arnoldi iteration failed to converge: {err}") from err
    v = normalized(vecs[:, 0])
    # polish: the Arnoldi eigenvector is accurate in norm but the entrywise
    # fixed-point metric can sit just above tol; plain periods finish the job
    v_next = period_map(v)
    residual = error_max(v_next, v)
    while residual > tol:
        v = v_next
        v_next = period_map(v)
        residual = error_max(v_next, v)
    return normalized(v_next), applications


@dataclass(frozen=True)
class PeriodAverage:
    quantity: str
    value: float
    period: float
    t_start: float = 0.0
    n_samples: int = 64


def period_averaged(
    gen: Generator,
    rho_ss: np.ndarray,
    mod_frequency: float,
    observable,
    scheme: SchemeSpec,
    engine: EngineSpec,
    n_samples: int = 64,
    quantity: str = "observable",
    t_start: float = 0.0,
) -> PeriodAverage:
    """Trapezoidal average of an observable over one modulation period.

    ``observable`` is a Hilbert-space matrix or a callable on the vectorized
    state.  The state is stepped between the ``n_samples`` uniform sample
    points with the given scheme.
    """
    period = 2 * math.pi / mod_frequency
    f = observable if callable(observable) else (lambda v: np.real(expectation(observable, v)))
    sub = period / n_samples
    subscheme = _period_scheme(scheme, sub)
    v = np.asarray(rho_ss, dtype=complex).copy()
    total = 0.5 * float(f(v))
    t = t_start
    for k in range(1, n_samples + 1):
        v = propagate(gen, v, t, t + sub, subscheme, engine).final_state
        t += sub
        total += float(f(v)) * (0.5 if k == n_samples else 1.0)
    return PeriodAverage(quantity, total / n_samples, period, t_start, n_samples)


# ---------------------------------------------------------------------------
# two-time correlations and emission spectra
# ---------------------------------------------------------------------------

@dataclass
class SpectrumSeries:
    """Correlation samples ``S(tau)`` and the derived spectrum ``S(omega)``."""

    tau_grid: np.ndarray
    s_tau: np.ndarray
    nb_window: float  # phase-averaged photon number of the sampling window
    omega_grid: np.ndarray | None = None
    s_omega: np.ndarray | None = None
    s_total: float | None = None
    imag_residual: float = 0.0
    n_phase_samples: int = 0
    n_matvec: int = 0


def correlation_function(
    gen: Generator,
    rho_ss: np.ndarray,
    mod_frequency: float,
    emission_op: np.ndarray,
    tau_max: float,
    dtau: float,
    n_phase_samples: int,
    scheme: SchemeSpec,
    engine: EngineSpec,
) -> SpectrumSeries:
    """Phase-averaged two-time correlation ``S(tau)`` by regression propagation.

    For each of ``n_phase_samples`` equidistant window phases ``t'``, the
    matrix ``a rho(t')`` is evolved forward in ``tau`` with the full
    time-dependent propagator; samples of ``trace(a+ . )`` on the ``tau``
    lattice are averaged over the phases (the trapezoid rule on a periodic
    integrand reduces to the plain mean).  All phases march together on one
    absolute-time lattice so the stage exponentials are shared; the requested
    ``dtau`` is snapped to the nearest commensurate value.
    """
    period = 2 * math.pi / mod_frequency
    u = period / n_phase_samples
    m = max(1, int(round(u / dtau)))
    dtau_eff = u / m
    q = max(1, int(math.ceil(dtau_eff / scheme.dt - 1e-12)))
    dt = dtau_eff / q
    n_tau = int(math.ceil(tau_max / dtau_eff - 1e-9))
    step_fn = _STEPPERS[scheme.kind]
    counter = EffortCounter()

    d2 = rho_ss.size
    dim = unvec(rho_ss).shape[0]
    if emission_op.shape != (dim, dim):
        raise ValueError("emission operator dimension mismatch")
    adag = emission_op.conj().T

    def weighted_trace(cols: np.ndarray) -> np.ndarray:
        # trace(a+ B_i) for every stack column, via row-stacked inner product
        return vec(adag.T) @ cols

    records = np.zeros((n_phase_samples, n_tau + 1), dtype=complex)
    stack = np.asarray(rho_ss, dtype=complex).reshape(d2, 1).copy()
    has_rho = True  # column 0 carries rho until every phase is activated
    active_offsets: list[int] = []  # activation step index per phase sample

    total_steps = (n_phase_samples - 1) * m * q + n_tau * q
    for g in range(total_steps + 1):
        if len(active_offsets) < n_phase_samples and g % (m * q) == 0:
            rho_now = unvec(stack[:, 0])
            stack = np.concatenate([stack, vec(emission_op @ rho_now).reshape(d2, 1)], axis=1)
            active_offsets.append(g)
        if g % q == 0:
            values = weighted_trace(stack[:, 1:] if has_rho else stack)
            for i, g0 in enumerate(active_offsets):
                k = (g - g0) // q
                if 0 <= k <= n_tau:
                    records[i, k] = values[i]
        if g == total_steps:
            break
        if has_rho and len(active_offsets) == n_phase_samples:
            stack = np.ascontiguousarray(stack[:, 1:])  # rho itself no longer needed
            has_rho = False
        stack = step_fn(gen, g * dt, dt, stack, engine, counter)

    s_tau = records.mean(axis=0)
    tau_grid = np.arange(n_tau + 1) * dtau_eff
    nb = float(np.real(s_tau[0]))
    if abs(np.imag(s_tau[0])) > 1e-10 * max(1.0, abs(nb)):
        warnings.warn(f"S(0) has imaginary residual {np.imag(s_tau[0]):.2e}", stacklevel=2)
    return SpectrumSeries(
        tau_grid, s_tau, nb, n_phase_samples=n_phase_samples, n_matvec=counter.n_matvec
    )


def spectrum(
    series: SpectrumSeries,
    omega_grid: np.ndarray,
    decay_fraction: float = 1e-3,
) -> SpectrumSeries:
    """Fourier-transform the correlation samples into the emission spectrum.

    ``S(omega) = (1/pi) Re integral_0^inf S(tau) exp(-i omega tau) dtau`` by
    the trapezoid rule on the stored lattice.  Requires the correlations to
    have decayed at the end of the window; the total emission is the
    trapezoidal integral over the nonnegative frequencies of the grid.
    """
    s_tau = series.s_tau
    tau = series.tau_grid
    s0 = abs(s_tau[0])
    tail = abs(s_tau[-1])
    if tail > decay_fraction * s0:
        # extrapolate the observed decay rate to name a sufficient window
        half = len(tau) // 2
        rate = -np.log(max(tail, 1e-300) / max(abs(s_tau[half]), 1e-300)) / (
            tau[-1] - tau[half]
        )
        needed = (
            tau[-1] + np.log(tail / (decay_fraction * s0)) / rate if rate > 0 else np.inf
        )
        raise SpectrumError(
            f"|S(tau_max)| = {tail:.3e} exceeds {decay_fraction:g} * |S(0)|; "
            f"tau_max of about {needed:.4g} required (current {tau[-1]:.4g})"
        )
    dtau = tau[1] - tau[0]
    weights = np.full(len(tau), dtau)
    weights[0] = weights[-1] = dtau / 2
    omega_grid = np.asarray(omega_grid, dtype=float)
    s_complex = np.empty(len(omega_grid), dtype=complex)
    chunk = max(1, int(2e6 // max(len(tau), 1)))
    wtd = weights * s_tau
    for lo in range(0, len(omega_grid), chunk):
        om = omega_grid[lo : lo + chunk]
        s_complex[lo : lo + chunk] = np.exp(-1j * np.outer(om, tau)) @ wtd
    s_omega = s_complex.real / math.pi
    imag_residual = float(np.max(np.abs(s_complex.imag)) / math.pi)
    nonneg = omega_grid >= 0
    s_total = float(np.trapezoid(s_omega[nonneg], omega_grid[nonneg]))
    series.omega_grid = omega_grid
    series.s_omega = s_omega
    series.s_total = s_total
    series.imag_residual = imag_residual
    return series


def find_peaks(
    omega_grid: np.ndarray, s_omega: np.ndarray, min_prominence: float
) -> list[tuple[float, float]]:
    """Local maxima above a prominence threshold, parabolically refined.

    Returns ``(omega_peak, height)`` pairs in increasing frequency; empty when
    nothing tops the threshold.
    """
    idx, _ = scipy.signal.find_peaks(s_omega, prominence=min_prominence)
    out = []
    step = omega_grid[1] - omega_grid[0] if len(omega_grid) > 1 else 0.0
    for i in idx:
        if 0 < i < len(s_omega) - 1:
            denom = s_omega[i - 1] - 2 * s_omega[i] + s_omega[i + 1]
            delta = 0.5 * (s_omega[i - 1] - s_omega[i + 1]) / denom if denom != 0 else 0.0
            height = s_omega[i] - 0.25 * (s_omega[i - 1] - s_omega[i + 1]) * delta
            out.append((float(omega_grid[i] + delta * step), float(height)))
        else:
            out.append((float(omega_grid[i]), float(s_omega[i])))
    return out
