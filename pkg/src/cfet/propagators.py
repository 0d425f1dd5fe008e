"""Time-stepping schemes built on exponentials of generator combinations.

A :class:`Generator` represents ``A(t) = B + sum_k f_k(t) C_k`` where ``B``
and ``C_k`` share a linear-map representation (dense matrix for small systems,
matrix-free Lindblad action for tensor-product systems).  The steppers below
only ever ask a generator for linear combinations of itself at quadrature
nodes, so they run unchanged on wave functions and on vectorized densities.

The product-of-exponentials schemes write their factors in the conventional
left-to-right order; application to the state proceeds right factor first, so
the combination weighted toward the earliest quadrature node acts first.  A
regression test pins this ordering: swapping it breaks the local fifth-order
defect against the explicit fourth-order Magnus reference.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engines import EffortCounter, EngineError, EngineSpec, expm_action, expm_dense
from .operators import DenseMap, LinearMap

__all__ = [
    "SchemeKind",
    "SchemeSpec",
    "SimpleCfet4Coefficients",
    "OptCfet4Coefficients",
    "SIMPLE_CFET4",
    "OPT_CFET4",
    "Generator",
    "DenseGenerator",
    "LindbladGenerator",
    "step_middle",
    "step_cfet4_simple",
    "step_cfet4_opt",
    "step_cfet4_opt_split",
    "step_rk4",
    "step_magnus4",
    "magnus4_from_taylor",
    "verify_order_conditions",
    "RunRecord",
    "PropagationError",
    "propagate",
]


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimpleCfet4Coefficients:
    """Two-exponential fourth-order scheme: nodes x1/x2, weights g1/g2."""

    g1: float = (3 - 2 * math.sqrt(3)) / 12
    g2: float = (3 + 2 * math.sqrt(3)) / 12
    x1: float = 0.5 - math.sqrt(3) / 6
    x2: float = 0.5 + math.sqrt(3) / 6


@dataclass(frozen=True)
class OptCfet4Coefficients:
    """Three-exponential optimized fourth-order scheme and its split form.

    The split form rewrites each factor for generators of the shape
    ``B + sum f_k(t) C_k``: substep durations ``dt1, dt2, dt1`` and the h
    matrix mapping sampled modulation values onto per-stage coefficients.
    """

    x1: float = 0.5 - math.sqrt(3.0 / 20.0)
    x2: float = 0.5
    x3: float = 0.5 + math.sqrt(3.0 / 20.0)
    g1: float = 37.0 / 240.0 - (10.0 / 87.0) * math.sqrt(5.0 / 3.0)
    g2: float = -1.0 / 30.0
    g3: float = 37.0 / 240.0 + (10.0 / 87.0) * math.sqrt(5.0 / 3.0)
    g4: float = -11.0 / 360.0
    g5: float = 23.0 / 45.0
    dt1_frac: float = 11.0 / 40.0
    dt2_frac: float = 9.0 / 20.0
    h1: float = 37.0 / 66.0 - (400.0 / 957.0) * math.sqrt(5.0 / 3.0)
    h2: float = -4.0 / 33.0
    h3: float = 37.0 / 66.0 + (400.0 / 957.0) * math.sqrt(5.0 / 3.0)
    h4: float = -11.0 / 162.0
    h5: float = 92.0 / 81.0

    @property
    def h_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.h1, self.h2, self.h3],
                [self.h4, self.h5, self.h4],
                [self.h3, self.h2, self.h1],
            ]
        )


SIMPLE_CFET4 = SimpleCfet4Coefficients()
OPT_CFET4 = OptCfet4Coefficients()


def verify_order_conditions(
    simple: SimpleCfet4Coefficients = SIMPLE_CFET4,
    opt: OptCfet4Coefficients = OPT_CFET4,
) -> dict[str, float]:
    """Residuals of the polynomial order conditions and consistency identities.

    The seven xi/chi conditions certify the two-exponential scheme against the
    explicit fourth-order single-exponential reference; the remaining entries
    tie the optimized coefficient table to its split form.  All residuals are
    zero up to roundoff for correct tables, so a perturbed coefficient is
    caught immediately.
    """
    g1, g2, x1, x2 = simple.g1, simple.g2, simple.x1, simple.x2
    res = {
        "xi1": 2 * g1 + 2 * g2 - 1.0,
        "xi2": (g1 + g2) * (x1 + x2) - 0.5,
        "xi3": (g1 + g2) * (x1**2 + x2**2) - 1.0 / 3.0,
        "xi4": (g1 + g2) * (x1**3 + x2**3) - 0.25,
        "chi1": 0.5 * (g1 + g2) * ((g2 * x1 + g1 * x2) - (g1 * x1 + g2 * x2)) + 1.0 / 12.0,
        "chi2": 0.5 * (g1 + g2) * ((g2 * x1**2 + g1 * x2**2) - (g1 * x1**2 + g2 * x2**2))
        + 1.0 / 12.0,
        "chi3": (1.0 / 12.0)
        * (g1 + g2) ** 2
        * ((g2 * x1 + g1 * x2) - (g2 * x1 + g1 * x2)),
    }
    o = opt
    res["opt_weight_sum"] = 2 * (o.g1 + o.g2 + o.g3) + 2 * o.g4 + o.g5 - 1.0
    res["opt_substep_sum"] = 2 * o.dt1_frac + o.dt2_frac - 1.0
    res["opt_h_row1"] = max(
        abs(o.dt1_frac * o.h1 - o.g1),
        abs(o.dt1_frac * o.h2 - o.g2),
        abs(o.dt1_frac * o.h3 - o.g3),
    )
    res["opt_h_row2"] = max(abs(o.dt2_frac * o.h4 - o.g4), abs(o.dt2_frac * o.h5 - o.g5))
    res["opt_h_sum1"] = o.h1 + o.h2 + o.h3 - 1.0
    res["opt_h_sum2"] = 2 * o.h4 + o.h5 - 1.0
    res["opt_node_symmetry"] = max(abs(o.x1 + o.x3 - 1.0), abs(o.x2 - 0.5))
    return {k: float(v) for k, v in res.items()}


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

class Generator:
    """Time-dependent generator ``A(t) = B + sum_k f_k(t) C_k``.

    Subclasses implement :meth:`_assemble`, which materializes the linear map
    ``w_b * B + sum_k c_k C_k`` for scalar weights.  Everything the steppers
    need (point evaluation, node combinations, split-form stages) reduces to
    that one primitive.
    """

    dim: int

    def __init__(self, fs: Sequence[Callable[[float], float]]):
        self._fs = list(fs)

    def _assemble(self, b_weight: float, coeffs: np.ndarray) -> LinearMap:
        raise NotImplementedError

    @property
    def n_modulated(self) -> int:
        return len(self._fs)

    def f_values(self, t: float) -> np.ndarray:
        return np.array([f(t) for f in self._fs], dtype=float)

    def eval(self, t: float) -> LinearMap:
        return self._assemble(1.0, self.f_values(t))

    def combination(self, times: Sequence[float], weights: Sequence[float]) -> LinearMap:
        """Linear map ``sum_i w_i A(t_i)``."""
        b_weight = float(sum(weights))
        coeffs = np.zeros(self.n_modulated)
        for t, w in zip(times, weights):
            coeffs += w * self.f_values(t)
        return self._assemble(b_weight, coeffs)

    def with_coefficients(self, coeffs: Sequence[float]) -> LinearMap:
        """Linear map ``B + sum_k coeffs_k C_k`` (split-form stages)."""
        return self._assemble(1.0, np.asarray(coeffs, dtype=float))

    def taylor_maps(self, t: float) -> list[LinearMap]:
        """Taylor coefficients ``A(t + s) = A1 + A2 s + A3 s^2 + A4 s^3 + ...``.

        Only available when every modulation is a polynomial; used by the
        Magnus reference scheme and the local-order tests.
        """
        raise NotImplementedError("generator does not expose Taylor coefficients")


class DenseGenerator(Generator):
    """Generator over dense matrices (wave functions or small superoperators)."""

    def __init__(
        self,
        constant_part: np.ndarray,
        modulated_parts: Sequence[tuple[np.ndarray, Callable[[float], float]]] = (),
    ):
        super().__init__([f for _, f in modulated_parts])
        self.constant_part = np.ascontiguousarray(constant_part, dtype=complex)
        self.dim = self.constant_part.shape[0]
        self._cs = [np.ascontiguousarray(c, dtype=complex) for c, _ in modulated_parts]
        for c in self._cs:
            if c.shape != self.constant_part.shape:
                raise ValueError("modulated part shape mismatch")

    @property
    def modulated_parts(self):
        return list(zip(self._cs, self._fs))

    def _assemble(self, b_weight, coeffs) -> DenseMap:
        m = b_weight * self.constant_part
        for c, w in zip(self._cs, coeffs):
            m = m + w * c
        return DenseMap(m)

    def taylor_maps(self, t: float) -> list[DenseMap]:
        coeff_rows = [np.zeros(self.n_modulated) for _ in range(4)]
        for k, f in enumerate(self._fs):
            poly = getattr(f, "polynomial", None)
            if poly is None:
                raise NotImplementedError("modulation lacks a .polynomial attribute")
            shifted = poly
            for order in range(4):
                coeff_rows[order][k] = shifted(t) / math.factorial(order)
                shifted = shifted.deriv()
        maps = [self._assemble(1.0, coeff_rows[0])]
        maps += [self._assemble(0.0, coeff_rows[order]) for order in range(1, 4)]
        return maps


class PolynomialModulation:
    """Callable polynomial modulation that also exposes its coefficients."""

    def __init__(self, coefficients: Sequence[float]):
        self.polynomial = np.polynomial.Polynomial(list(coefficients))

    def __call__(self, t: float) -> float:
        return float(self.polynomial(t))


class LindbladGenerator(Generator):
    """Lindblad generator with a modulated Hamiltonian, applied matrix-free.

    ``A(t) rho = -i [H0 + sum_k f_k(t) H_k, rho] + sum (rate) D[A]``.  The
    dissipator scales with the constant-part weight in node combinations,
    which is exactly what the exponential-product schemes require.
    """

    def __init__(
        self,
        h0: np.ndarray,
        modulated_hams: Sequence[tuple[np.ndarray, Callable[[float], float]]],
        jumps: Sequence[tuple[float, np.ndarray]],
        map_factory: Callable[[float, np.ndarray], LinearMap] | None = None,
    ):
        super().__init__([f for _, f in modulated_hams])
        self.h0 = np.ascontiguousarray(h0, dtype=complex)
        self._hks = [np.ascontiguousarray(h, dtype=complex) for h, _ in modulated_hams]
        self.jumps = [(float(r), np.ascontiguousarray(a, dtype=complex)) for r, a in jumps]
        self.hilbert_dim = self.h0.shape[0]
        self.dim = self.hilbert_dim**2
        self._factory = map_factory

    def _assemble(self, b_weight, coeffs) -> LinearMap:
        if self._factory is not None:
            return self._factory(b_weight, coeffs)
        h = b_weight * self.h0
        for hk, w in zip(self._hks, coeffs):
            h = h + w * hk
        from .operators import LindbladMap

        return LindbladMap(h, [(b_weight * r, a) for r, a in self.jumps])


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------

def step_middle(gen, t, dt, state, engine: EngineSpec, counter=None):
    """Single exponential of the midpoint generator (second order)."""
    return expm_action(gen.eval(t + dt / 2), dt, state, engine, counter)


def step_cfet4_simple(gen, t, dt, state, engine, counter=None, coeffs=SIMPLE_CFET4):
    c = coeffs
    times = (t + c.x1 * dt, t + c.x2 * dt)
    state = expm_action(gen.combination(times, (c.g2, c.g1)), dt, state, engine, counter)
    return expm_action(gen.combination(times, (c.g1, c.g2)), dt, state, engine, counter)


def step_cfet4_opt(gen, t, dt, state, engine, counter=None, coeffs=OPT_CFET4):
    c = coeffs
    times = (t + c.x1 * dt, t + c.x2 * dt, t + c.x3 * dt)
    state = expm_action(gen.combination(times, (c.g3, c.g2, c.g1)), dt, state, engine, counter)
    state = expm_action(gen.combination(times, (c.g4, c.g5, c.g4)), dt, state, engine, counter)
    return expm_action(gen.combination(times, (c.g1, c.g2, c.g3)), dt, state, engine, counter)


def step_cfet4_opt_split(gen, t, dt, state, engine, counter=None, coeffs=OPT_CFET4):
    """Split form of the optimized scheme for ``B + sum f_k C_k`` generators.

    Stage coefficients come from the h matrix applied to the modulations
    sampled at the three quadrature nodes; all substep durations are strictly
    positive, which keeps dissipative spectra in the stable half plane.
    """
    c = coeffs
    dt1, dt2 = c.dt1_frac * dt, c.dt2_frac * dt
    assert dt1 > 0 and dt2 > 0
    fnodes = np.stack(
        [gen.f_values(t + x * dt) for x in (c.x1, c.x2, c.x3)]
    )  # (3, n_modulated)
    stage_coeffs = c.h_matrix @ fnodes
    state = expm_action(gen.with_coefficients(stage_coeffs[2]), dt1, state, engine, counter)
    state = expm_action(gen.with_coefficients(stage_coeffs[1]), dt2, state, engine, counter)
    return expm_action(gen.with_coefficients(stage_coeffs[0]), dt1, state, engine, counter)


def step_rk4(gen, t, dt, state, engine=None, counter=None):
    """Classical Runge-Kutta step; exactly four generator applications."""
    a0 = gen.eval(t)
    ah = gen.eval(t + dt / 2)
    a1 = gen.eval(t + dt)
    k1 = a0.matvec(state)
    k2 = ah.matvec(state + (dt / 2) * k1)
    k3 = ah.matvec(state + (dt / 2) * k2)
    k4 = a1.matvec(state + dt * k3)
    if counter is not None:
        counter.add(4)
    return state + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def magnus4_from_taylor(a1, a2, a3, a4, dt: float) -> np.ndarray:
    """Explicit fourth-order single-exponential reference propagator.

    Exponent: ``dt A1 + dt^2/2 A2 + dt^3 (A3/3 - [A1,A2]/12)
    + dt^4 (A4/4 - [A1,A3]/12)``; the double commutator of A1 with A2 drops
    out at this order.  Evaluated with the dense exponential.
    """
    mats = [np.asarray(m, dtype=complex) for m in (a1, a2, a3, a4)]
    if len({m.shape for m in mats}) != 1:
        raise ValueError("Taylor coefficient shapes differ")
    a1, a2, a3, a4 = mats
    comm = lambda x, y: x @ y - y @ x
    exponent = (
        dt * a1
        + dt**2 / 2 * a2
        + dt**3 * (a3 / 3 - comm(a1, a2) / 12)
        + dt**4 * (a4 / 4 - comm(a1, a3) / 12)
    )
    return expm_dense(exponent)


def step_magnus4(gen, t, dt, state, engine=None, counter=None):
    maps = gen.taylor_maps(t)
    u = magnus4_from_taylor(*[m.dense() for m in maps], dt)
    return u @ state


# ---------------------------------------------------------------------------
# the stepping loop
# ---------------------------------------------------------------------------

class SchemeKind(enum.Enum):
    MIDDLE_POINT = "middle-point"
    CFET4_SIMPLE = "cfet4-simple"
    CFET4_OPT = "cfet4-opt"
    CFET4_OPT_SPLIT = "cfet4-opt-split"
    RK4 = "rk4"
    MAGNUS4_TAYLOR = "magnus4-taylor"


_STEPPERS = {
    SchemeKind.MIDDLE_POINT: step_middle,
    SchemeKind.CFET4_SIMPLE: step_cfet4_simple,
    SchemeKind.CFET4_OPT: step_cfet4_opt,
    SchemeKind.CFET4_OPT_SPLIT: step_cfet4_opt_split,
    SchemeKind.RK4: step_rk4,
    SchemeKind.MAGNUS4_TAYLOR: step_magnus4,
}


@dataclass(frozen=True)
class SchemeSpec:
    kind: SchemeKind
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass
class RunRecord:
    """Trajectory samples plus effort accounting for one propagation."""

    times: np.ndarray
    states: list
    n_matvec: int
    n_steps: int
    t0: float
    t_end: float
    scheme: SchemeKind
    failure: str | None = None
    wall_seconds: float = 0.0

    @property
    def final_state(self):
        return self.states[-1]


class PropagationError(RuntimeError):
    """Engine failure mid-run; carries the partial record."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


def propagate(
    gen,
    state0: np.ndarray,
    t0: float,
    t_end: float,
    scheme: SchemeSpec,
    engine: EngineSpec | None = None,
    sample_stride: int | None = None,
    observer: Callable[[float, np.ndarray], None] | None = None,
    counter: EffortCounter | None = None,
) -> RunRecord:
    """Step ``state0`` from ``t0`` to ``t_end``, sampling every ``stride`` steps.

    The step count is rounded when ``(t_end - t0)/dt`` is within 1e-9 of an
    integer; otherwise a final shortened step with the same scheme closes the
    gap.  ``sample_stride=None`` records only the endpoints.  Deterministic:
    identical inputs produce identical records.
    """
    import time as _time

    if t_end < t0:
        raise ValueError("t_end must not precede t0")
    counter = counter if counter is not None else EffortCounter()
    if t_end == t0:
        state = np.asarray(state0, dtype=complex).copy()
        return RunRecord(np.array([t0]), [state], counter.n_matvec, 0, t0, t_end, scheme.kind)
    span = t_end - t0
    dt = scheme.dt
    n_float = span / dt
    n_whole = int(round(n_float))
    if abs(n_whole - n_float) <= 1e-9 * max(1.0, n_float) and n_whole >= 1:
        dt_last = 0.0
    else:
        n_whole = int(np.floor(n_float))
        dt_last = span - n_whole * dt
        if dt_last < 1e-12 * dt:
            dt_last = 0.0
    step_fn = _STEPPERS[scheme.kind]
    state = np.asarray(state0, dtype=complex).copy()
    times = [t0]
    states = [state.copy()]
    if observer is not None:
        observer(t0, state)
    start = _time.perf_counter()
    total_steps = n_whole + (1 if dt_last else 0)
    try:
        for i in range(total_steps):
            t = t0 + i * dt
            h = dt if i < n_whole else dt_last
            state = step_fn(gen, t, h, state, engine, counter)
            t_next = t0 + (i + 1) * dt if i < n_whole else t_end
            is_sample = (
                (sample_stride is not None and (i + 1) % sample_stride == 0)
                or i == total_steps - 1
            )
            if observer is not None:
                observer(t_next, state)
            if is_sample:
                times.append(t_next)
                states.append(state.copy())
    except EngineError as err:
        record = RunRecord(
            np.array(times), states, counter.n_matvec, i, t0, t_end, scheme.kind,
            failure=f"engine failure at step {i} (t={t0 + i * dt:g}): {err}",
            wall_seconds=_time.perf_counter() - start,
        )
        raise PropagationError(record.failure, record) from err
    return RunRecord(
        np.array(times), states, counter.n_matvec, total_steps, t0, t_end,
        scheme.kind, wall_seconds=_time.perf_counter() - start,
    )
