"""Error-versus-effort benchmarking and the slope-fit protocol.

The benchmark contract mirrors the published comparisons: propagate a model
with each scheme over a list of step sizes, measure the entrywise error of
the final state against a self-validated reference, and record the matvec
count as the cost axis.  Efficiency ratios are read off the log-log
interpolated ``N(eps)`` curves at matched error levels.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .engines import EffortCounter, EngineSpec
from .operators import error_max
from .propagators import SchemeKind, SchemeSpec, propagate

__all__ = [
    "BenchRecord",
    "slope_fit",
    "reference_solution",
    "run_error_vs_effort",
    "effort_at_error",
    "efficiency_ratio",
    "taylor_cos_max_error",
    "chebyshev_cos_max_error",
]


@dataclass(frozen=True)
class BenchRecord:
    scheme: str
    dt: float
    n_matvec: int
    epsilon: float
    wall_seconds: float


def slope_fit(dts, errors, engine_tolerance: float = 1e-12, min_points: int = 3) -> float:
    """Least-squares slope of ``log2(error)`` versus ``log2(dt)``.

    Points within 100x of the engine tolerance are discarded: there the
    scheme error has bottomed out on the exponential-engine floor and would
    bias the fit.
    """
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 100 * engine_tolerance
    if keep.sum() < min_points:
        raise ValueError(
            f"only {int(keep.sum())} usable points above the engine floor; need {min_points}"
        )
    x = np.log2(dts[keep])
    y = np.log2(errors[keep])
    return float(np.polyfit(x, y, 1)[0])


def reference_solution(
    gen,
    state0: np.ndarray,
    t0: float,
    t_end: float,
    dt_ref: float,
    engine: EngineSpec,
    self_check: float = 1e-12,
    max_refinements: int = 2,
) -> np.ndarray:
    """High-accuracy final state, accepted once halving the step changes nothing.

    Uses the optimized three-exponential scheme; the candidate is compared
    with a half-step rerun and accepted when the entrywise difference falls
    below ``self_check`` (refining up to ``max_refinements`` times otherwise).
    """
    dt = dt_ref
    current = propagate(
        gen, state0, t0, t_end, SchemeSpec(SchemeKind.CFET4_OPT, dt), engine
    ).final_state
    for _ in range(max_refinements + 1):
        finer = propagate(
            gen, state0, t0, t_end, SchemeSpec(SchemeKind.CFET4_OPT, dt / 2), engine
        ).final_state
        if error_max(current, finer) < self_check:
            return finer
        current, dt = finer, dt / 2
    raise RuntimeError(
        f"reference not self-consistent below {self_check} at dt={dt} "
        f"(residual {error_max(current, finer):.3e})"
    )


def run_error_vs_effort(
    gen,
    state0: np.ndarray,
    t0: float,
    t_end: float,
    scheme_dts: dict[SchemeKind, list[float]],
    engine: EngineSpec,
    reference: np.ndarray,
) -> list[BenchRecord]:
    """One record per (scheme, dt): final-state error against ``reference``."""
    records = []
    for kind, dts in scheme_dts.items():
        for dt in dts:
            counter = EffortCounter()
            start = time.perf_counter()
            run = propagate(
                gen, state0, t0, t_end, SchemeSpec(kind, dt), engine, counter=counter
            )
            wall = time.perf_counter() - start
            eps = error_max(run.final_state, reference)
            records.append(BenchRecord(kind.value, dt, counter.n_matvec, eps, wall))
    return records


def effort_at_error(records: list[BenchRecord], scheme: SchemeKind, eps: float) -> float:
    """Log-log interpolated matvec count at error level ``eps`` for one scheme."""
    pts = sorted(
        [(r.epsilon, r.n_matvec) for r in records if r.scheme == scheme.value and r.epsilon > 0]
    )
    if len(pts) < 2:
        raise ValueError(f"need at least two points for {scheme.value}")
    errs = np.array([p[0] for p in pts])
    efforts = np.array([p[1] for p in pts], dtype=float)
    if not (errs[0] <= eps <= errs[-1]):
        raise ValueError(
            f"{scheme.value}: eps={eps:g} outside covered range [{errs[0]:.3g}, {errs[-1]:.3g}]"
        )
    return float(
        2 ** np.interp(np.log2(eps), np.log2(errs), np.log2(efforts))
    )


def efficiency_ratio(
    records: list[BenchRecord],
    scheme_a: SchemeKind,
    scheme_b: SchemeKind,
    eps_values,
) -> list[float]:
    """``N_a(eps) / N_b(eps)`` at each matched error level."""
    return [
        effort_at_error(records, scheme_a, e) / effort_at_error(records, scheme_b, e)
        for e in eps_values
    ]


# ---------------------------------------------------------------------------
# scalar approximation errors (Taylor versus Chebyshev, degree comparison)
# ---------------------------------------------------------------------------

def taylor_cos_max_error(degree: int = 4, half_width: float = 2.0, n_grid: int = 100) -> float:
    """Max sampled error of the degree-``degree`` Maclaurin polynomial of cos.

    Sampled at the centers of ``n_grid`` uniform cells, i.e. just inside the
    interval ends, which is where the published maximum was read off the
    sampled error curve (the exact supremum sits at the endpoint itself and
    is about six percent larger).
    """
    edges = np.linspace(-half_width, half_width, n_grid + 1)
    t = (edges[:-1] + edges[1:]) / 2
    acc = np.zeros_like(t)
    for k in range(0, degree + 1, 2):
        acc += (-1) ** (k // 2) * t**k / math.factorial(k)
    return float(np.max(np.abs(np.cos(t) - acc)))


def chebyshev_cos_max_error(degree: int = 4, half_width: float = 2.0, n_grid: int = 4001) -> float:
    """Sup error of the degree-``degree`` Chebyshev interpolant of cos.

    Interpolation at the Chebyshev roots of the scaled interval (coefficients
    from the discrete orthogonality sums); the error peaks at the interval
    ends, so the dense sampling includes the endpoints.
    """
    nodes = np.cos((2 * np.arange(degree + 1) + 1) * math.pi / (2 * (degree + 1)))
    fvals = np.cos(half_width * nodes)
    coeffs = np.empty(degree + 1)
    for k in range(degree + 1):
        coeffs[k] = 2.0 / (degree + 1) * np.sum(fvals * np.cos(k * np.arccos(nodes)))
    coeffs[0] /= 2
    t = np.linspace(-half_width, half_width, n_grid)
    approx = np.polynomial.chebyshev.chebval(t / half_width, coeffs)
    return float(np.max(np.abs(np.cos(t) - approx)))
