"""Matrix-exponential action engines with matvec-effort accounting.

Every propagation scheme reduces to products of ``exp(tau * M) @ v``.  The
engines here compute that action with a selectable algorithm:

``DENSE_ORACLE``
    Scaling-and-squaring dense exponential, then one multiply.  Reference
    quality, no generator matvecs, only feasible at small dimensions.
``CHEBYSHEV_HERMITIAN``
    Chebyshev polynomial expansion with Bessel-function coefficients for
    anti-hermitian maps (closed systems).
``CHEBYSHEV_SHIFTED``
    The same expansion after a real trace shift, with Gershgorin bounds on
    the imaginary spectral extent; intended for Lindblad generators whose
    spectrum sits in the closed left half plane.
``TAYLOR_STEPS``
    Substepped truncated Taylor series; robust fallback, never the fastest.

The Chebyshev truncation degree is chosen a priori from the coefficient tail,
never from the input vector, so the computed action is exactly linear in
``v`` (the settle/regression machinery relies on this).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .operators import DenseMap, LinearMap, SpectralBox

__all__ = [
    "EngineKind",
    "EngineSpec",
    "EffortCounter",
    "EngineError",
    "expm_dense",
    "expm_action",
    "spectral_bounds",
]


class EngineError(RuntimeError):
    """Exponential engine could not reach the requested tolerance."""

    def __init__(self, message: str, residual: float = np.nan):
        super().__init__(message)
        self.residual = residual


class EngineKind(enum.Enum):
    DENSE_ORACLE = "dense-oracle"
    CHEBYSHEV_HERMITIAN = "chebyshev-hermitian"
    CHEBYSHEV_SHIFTED = "chebyshev-shifted"
    TAYLOR_STEPS = "taylor-steps"


@dataclass(frozen=True)
class EngineSpec:
    """Engine selection plus per-exponential truncation tolerance."""

    kind: EngineKind = EngineKind.CHEBYSHEV_SHIFTED
    tolerance: float = 1e-12
    max_degree: int | None = None  # default: 10 * ceil(tau * radius) + 50
    debug_check: bool = False  # cross-check against the dense oracle (dim <= 64)

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError(f"tolerance must be in (0, 1), got {self.tolerance}")
        if self.max_degree is not None and self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")


class EffortCounter:
    """Counts generator matvec applications (the cost axis of all benchmarks)."""

    def __init__(self):
        self.n_matvec = 0

    def add(self, n: int = 1):
        self.n_matvec += n

    def __repr__(self):
        return f"EffortCounter(n_matvec={self.n_matvec})"


def expm_dense(m: np.ndarray, tau: complex = 1.0) -> np.ndarray:
    """Dense ``exp(tau * M)`` by scaling and squaring a truncated series.

    The scaled argument is summed until terms fall below machine epsilon,
    which keeps the result near machine precision for ``||tau*M|| <= 1e4``.
    """
    m = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    a = tau * m
    d = a.shape[0]
    norm = np.linalg.norm(a, 1)
    n_sq = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    a = a / (2.0**n_sq)
    out = np.eye(d, dtype=complex)
    term = np.eye(d, dtype=complex)
    for k in range(1, 40):
        term = term @ a / k
        out += term
        if np.max(np.abs(term)) < 1e-18 * max(1.0, np.max(np.abs(out))):
            break
    for _ in range(n_sq):
        out = out @ out
    return out


def spectral_bounds(m: LinearMap | np.ndarray) -> tuple[complex, tuple[float, float]]:
    """Bounding-box spectral estimate ``(center, (re_half, im_half))``.

    Gershgorin-disc union box; hermitian/anti-hermitian structure collapses
    the transverse extent to zero.
    """
    box = _as_map(m).spectral_box()
    return box.center, box.half_widths


def _as_map(m) -> LinearMap:
    return m if isinstance(m, LinearMap) else DenseMap(np.asarray(m, dtype=complex))


def _default_cap(tau: float, box: SpectralBox) -> int:
    return 10 * int(np.ceil(abs(tau) * box.radius)) + 50


def _cheb_coefficients(z: float, tol: float, growth: float, cap: int):
    """Bessel coefficient table and truncation degree for ``exp(-i z s)``.

    Returns ``(coeffs, degree)`` with ``coeffs[k] = (2 - delta_k0) J_k(z)``;
    ``degree`` is the smallest order whose weighted tail drops below ``tol``.
    ``growth`` inflates the tail for spectra off the real interval (Bernstein
    ellipse factor per degree).  Raises :class:`EngineError` past ``cap``.
    """
    n = int(np.ceil(abs(z))) + 64
    while True:
        ks = np.arange(n + 1)
        coeffs = 2.0 * jv(ks, z)
        coeffs[0] *= 0.5
        weighted = np.abs(coeffs) * np.minimum(growth**ks, 1e300)
        tails = np.cumsum(weighted[::-1])[::-1]
        lo = max(1, int(np.ceil(abs(z))))
        hit = np.nonzero(tails[lo + 1:] < tol)[0]
        if hit.size and tails[-1] < tol:
            m = lo + int(hit[0])
            if m > cap:
                raise EngineError(
                    f"Chebyshev degree {m} exceeds cap {cap}", residual=float(tails[cap + 1])
                )
            return coeffs, m
        if n > max(cap + 64, 4 * abs(z) + 512):
            raise EngineError(
                f"Chebyshev tail not below {tol} within degree {n}",
                residual=float(tails[min(cap, n)]),
            )
        n = 2 * n


def _cheb_apply(hmv, v, c_center, c_radius, coeffs, degree, counter):
    """Clenshaw-free forward recurrence ``sum_k c_k (-i)^k J_k(z) T_k(S) v``.

    ``hmv`` applies the hermitian-like operator H whose spectrum was mapped to
    ``[-1, 1]`` via ``S = (H - c_center) / c_radius``; one matvec per degree.
    The caller multiplies the overall phase ``exp(-i tau c_center)`` back in.
    """
    t_prev = v
    acc = coeffs[0] * t_prev
    if degree >= 1:
        t_cur = (hmv(t_prev) - c_center * t_prev) / c_radius
        if counter is not None:
            counter.add(1)
        acc = acc + (-1j) * coeffs[1] * t_cur
        fac = -1j
        for k in range(2, degree + 1):
            fac *= -1j
            t_new = 2.0 * ((hmv(t_cur) - c_center * t_cur) / c_radius) - t_prev
            if counter is not None:
                counter.add(1)
            acc = acc + (fac * coeffs[k]) * t_new
            t_prev, t_cur = t_cur, t_new
    return acc


def _cheb_hermitian(op: LinearMap, tau: float, v, spec: EngineSpec, counter):
    if not op.is_antihermitian:
        raise EngineError("chebyshev-hermitian engine requires an anti-hermitian map")
    box = op.spectral_box()
    e_lo, e_hi = -box.im_hi, -box.im_lo  # spectrum of H = i M
    center = (e_lo + e_hi) / 2
    radius = (e_hi - e_lo) / 2
    if radius * abs(tau) < 1e-14:
        return np.exp(-1j * tau * center) * np.asarray(v, dtype=complex)
    z = tau * radius
    cap = spec.max_degree or _default_cap(tau, box)
    coeffs, degree = _cheb_coefficients(z, spec.tolerance, 1.0, cap)
    hmv = lambda x: 1j * op.matvec(x)
    acc = _cheb_apply(hmv, np.asarray(v, dtype=complex), center, radius, coeffs, degree, counter)
    return np.exp(-1j * tau * center) * acc


def _cheb_shifted(op: LinearMap, tau: float, v, spec: EngineSpec, counter):
    box = op.spectral_box()
    alpha = _as_real_trace(op)
    # K = i (M - alpha I): real extent from the imaginary extent of M
    k_lo, k_hi = -box.im_hi, -box.im_lo
    center = (k_lo + k_hi) / 2
    radius = (k_hi - k_lo) / 2
    spread = max(abs(box.re_lo - alpha), abs(box.re_hi - alpha))
    if spread > 0.5 * max(2 * radius, 1e-300):
        import warnings

        warnings.warn(
            "Gershgorin real spread exceeds half the imaginary extent; "
            "shifted Chebyshev expansion quality degrades",
            stacklevel=3,
        )
    if radius <= 0:
        radius = max(spread, 1e-300)
    if radius * abs(tau) < 1e-14 and spread * abs(tau) < 1e-14:
        return np.exp(tau * (alpha + 1j * 0)) * np.exp(-1j * tau * center) * np.asarray(v, complex)
    sigma = spread / radius
    growth = sigma + math.sqrt(1 + sigma * sigma)
    z = tau * radius
    cap = spec.max_degree or _default_cap(tau, box)
    coeffs, degree = _cheb_coefficients(z, spec.tolerance, growth, cap)
    hmv = lambda x: 1j * (op.matvec(x) - alpha * x)
    acc = _cheb_apply(hmv, np.asarray(v, dtype=complex), center, radius, coeffs, degree, counter)
    out = (np.exp(tau * alpha) * np.exp(-1j * tau * center)) * acc
    if spec.debug_check and op.dim <= 64:
        ref = expm_dense(op.dense(), tau) @ np.asarray(v, dtype=complex)
        resid = float(np.max(np.abs(ref - out)))
        scale = float(np.max(np.abs(ref))) or 1.0
        if resid > 100 * spec.tolerance * scale:
            raise EngineError("shifted Chebyshev a-posteriori check failed", residual=resid)
    return out


def _as_real_trace(op: LinearMap) -> float:
    tr = op.trace()
    return float(np.real(tr)) / op.dim


def _taylor_steps(op: LinearMap, tau: float, v, spec: EngineSpec, counter):
    box = op.spectral_box()
    radius = box.radius
    if radius * abs(tau) < 1e-300:
        return np.asarray(v, dtype=complex).copy()
    n_sub = max(1, int(np.ceil(abs(tau) * radius / 1.0)))
    h = tau / n_sub
    cap = spec.max_degree or _default_cap(tau, box)
    w = np.asarray(v, dtype=complex)
    used = 0
    for _ in range(n_sub):
        term = w
        acc = w.copy()
        for k in range(1, 60):
            term = (h / k) * op.matvec(term)
            used += 1
            if counter is not None:
                counter.add(1)
            acc += term
            if np.max(np.abs(term)) < spec.tolerance * max(np.max(np.abs(acc)), 1e-300) / (2 * n_sub):
                break
            if used > cap:
                raise EngineError(
                    f"Taylor-steps effort {used} exceeds cap {cap}",
                    residual=float(np.max(np.abs(term))),
                )
        w = acc
    return w


def expm_action(
    op: LinearMap | np.ndarray,
    tau: float,
    v: np.ndarray,
    spec: EngineSpec,
    counter: EffortCounter | None = None,
) -> np.ndarray:
    """Compute ``exp(tau * op) @ v`` with the engine selected by ``spec``.

    ``v`` may be a single vector ``(dim,)`` or a stack ``(dim, k)``.  The
    counter is incremented by one per generator matvec (Chebyshev degree,
    Taylor terms); the dense oracle applies the exponential directly and
    leaves the counter untouched.
    """
    op = _as_map(op)
    if spec.kind is EngineKind.DENSE_ORACLE:
        return expm_dense(op.dense(), tau) @ np.asarray(v, dtype=complex)
    if spec.kind is EngineKind.CHEBYSHEV_HERMITIAN:
        return _cheb_hermitian(op, tau, v, spec, counter)
    if spec.kind is EngineKind.CHEBYSHEV_SHIFTED:
        return _cheb_shifted(op, tau, v, spec, counter)
    if spec.kind is EngineKind.TAYLOR_STEPS:
        return _taylor_steps(op, tau, v, spec, counter)
    raise ValueError(f"unknown engine kind {spec.kind}")
