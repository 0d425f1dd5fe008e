"""Dense operators for spin/boson systems and vectorized Lindblad superoperators.

Operators are plain complex ``numpy`` arrays.  Density matrices are vectorized
by **row stacking**: ``vec(rho) = rho.reshape(-1)`` in C order, so that

    vec(X @ Y @ Z) = kron(X, Z.T) @ vec(Y).

All superoperator formulas in this module follow that convention.  Everything
that applies a generator to a state goes through the :class:`LinearMap.matvec`
entry point, so a different backing representation (here: a matrix-free
Lindblad action) can be swapped in without touching the propagation code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "SpinOperators",
    "spin_operators",
    "boson_operators",
    "kron",
    "vec",
    "unvec",
    "error_max",
    "hermiticity_defect",
    "is_hermitian",
    "is_antihermitian",
    "hamiltonian_superop",
    "dissipator_superop",
    "lindblad_superop",
    "SpectralBox",
    "LinearMap",
    "DenseMap",
    "LindbladMap",
]

_HERM_TOL = 1e-12
_MAX_DENSE_DIM = 4096  # largest dimension dense() will materialize


class DimensionError(ValueError):
    """Operands have incompatible or unsupported dimensions."""


class SpinOperators(NamedTuple):
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    jplus: np.ndarray
    jminus: np.ndarray


def spin_operators(j: float) -> SpinOperators:
    """Angular-momentum matrices for spin length ``j`` (half-integer).

    The basis is ordered by descending magnetic quantum number, so ``jz`` is
    ``diag(j, j-1, ..., -j)``.  Ladder operators carry the standard matrix
    elements ``sqrt(j(j+1) - m(m +- 1))``.
    """
    twoj = 2 * j
    if twoj <= 0 or abs(twoj - round(twoj)) > 1e-12:
        raise ValueError(f"spin length must be a positive half-integer, got {j}")
    dim = int(round(twoj)) + 1
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # J+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>; nonzero on the first superdiagonal
    raise_el = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jplus = np.zeros((dim, dim), dtype=complex)
    jplus[np.arange(dim - 1), np.arange(1, dim)] = raise_el
    jminus = jplus.conj().T
    jx = (jplus + jminus) / 2
    jy = (jplus - jminus) / 2j
    return SpinOperators(jx, jy, jz, jplus, jminus)


def boson_operators(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated Fock-space annihilation/creation pair on levels ``0..n_max``."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    dim = n_max + 1
    a = np.zeros((dim, dim), dtype=complex)
    a[np.arange(dim - 1), np.arange(1, dim)] = np.sqrt(np.arange(1, dim))
    return a, a.conj().T


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with an overflow guard on the combined dimension."""
    dim = a.shape[0] * b.shape[0]
    if dim > 1 << 20:
        raise DimensionError(f"kron dimension {dim} too large")
    return np.kron(a, b)


def vec(rho: np.ndarray) -> np.ndarray:
    """Row-stacking vectorization of a square matrix."""
    d = rho.shape[0]
    if rho.shape != (d, d):
        raise DimensionError(f"expected square matrix, got {rho.shape}")
    return rho.reshape(-1)


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`; requires a perfect-square length."""
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionError(f"length {v.size} is not a perfect square")
    return v.reshape(d, d)


def error_max(a: np.ndarray, b: np.ndarray) -> float:
    """Maximal absolute difference of entries (the error metric used throughout)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


def is_hermitian(m: np.ndarray, tol: float = _HERM_TOL) -> bool:
    return hermiticity_defect(m) < tol


def is_antihermitian(m: np.ndarray, tol: float = _HERM_TOL) -> bool:
    return float(np.max(np.abs(m + m.conj().T))) < tol


# ---------------------------------------------------------------------------
# superoperator builders (row-stacking convention)
# ---------------------------------------------------------------------------

def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    """Commutator part ``rho -> -i[H, rho]`` as a dense superoperator."""
    d = h.shape[0]
    eye = np.eye(d)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_superop(a: np.ndarray) -> np.ndarray:
    """Dissipator ``rho -> 2 A rho A+ - A+A rho - rho A+A`` as a superoperator.

    Note the factor 2 in front of the sandwich term; rates passed to
    :func:`lindblad_superop` multiply this whole expression.
    """
    d = a.shape[0]
    eye = np.eye(d)
    ada = a.conj().T @ a
    return 2 * np.kron(a, a.conj()) - np.kron(ada, eye) - np.kron(eye, ada.T)


def lindblad_superop(h: np.ndarray, jumps: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Dense Lindblad generator ``-i[H, .] + sum_k rate_k D[A_k]``."""
    d = h.shape[0]
    out = hamiltonian_superop(h)
    for rate, a in jumps:
        if a.shape != (d, d):
            raise DimensionError(f"jump operator shape {a.shape} != {(d, d)}")
        if rate < 0:
            raise ValueError(f"negative jump rate {rate}")
        out += rate * dissipator_superop(a)
    return out


# ---------------------------------------------------------------------------
# linear maps: the single matvec entry point
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralBox:
    """Axis-aligned bounding box for the spectrum of a linear map."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    @property
    def center(self) -> complex:
        return complex((self.re_lo + self.re_hi) / 2, (self.im_lo + self.im_hi) / 2)

    @property
    def half_widths(self) -> tuple[float, float]:
        return ((self.re_hi - self.re_lo) / 2, (self.im_hi - self.im_lo) / 2)

    @property
    def radius(self) -> float:
        return max(abs(self.re_lo), abs(self.re_hi)) + max(abs(self.im_lo), abs(self.im_hi))


def _gershgorin_interval(h: np.ndarray) -> tuple[float, float]:
    """Gershgorin eigenvalue interval of a hermitian matrix."""
    diag = np.diag(h).real
    radii = np.abs(h).sum(axis=1) - np.abs(np.diag(h))
    return float((diag - radii).min()), float((diag + radii).max())


def _gershgorin_box(m: np.ndarray) -> SpectralBox:
    """Bounding box of the field of values (hence of the spectrum).

    Splitting into hermitian and anti-hermitian parts keeps the two axes
    independent: a purely oscillatory generator with large off-diagonals gets
    a zero-width real extent instead of discs smeared into the real axis.
    """
    herm = (m + m.conj().T) / 2
    anti = (m - m.conj().T) / 2j
    re_lo, re_hi = _gershgorin_interval(herm)
    im_lo, im_hi = _gershgorin_interval(anti)
    return SpectralBox(re_lo, re_hi, im_lo, im_hi)


class LinearMap:
    """A linear operator on state vectors, known only through its action.

    Subclasses provide :meth:`matvec` (single vectors or ``(dim, k)`` stacks),
    spectral bounds, the trace, and optionally a dense matrix for oracles.
    """

    dim: int

    def matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def trace(self) -> complex:
        raise NotImplementedError

    def spectral_box(self) -> SpectralBox:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_antihermitian(self) -> bool:
        return False


class DenseMap(LinearMap):
    """Linear map backed by a dense matrix."""

    def __init__(self, matrix: np.ndarray, antihermitian: bool | None = None):
        matrix = np.ascontiguousarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"expected square matrix, got {matrix.shape}")
        self.matrix = matrix
        self.dim = matrix.shape[0]
        if antihermitian is None:
            scale = float(np.max(np.abs(matrix))) or 1.0
            antihermitian = float(np.max(np.abs(matrix + matrix.conj().T))) < _HERM_TOL * max(1.0, scale)
        self._antiherm = bool(antihermitian)
        self._box: SpectralBox | None = None

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    @property
    def is_antihermitian(self) -> bool:
        return self._antiherm

    def spectral_box(self) -> SpectralBox:
        if self._box is None:
            self._box = _gershgorin_box(self.matrix)
        return self._box

    def dense(self) -> np.ndarray:
        return self.matrix


class LindbladMap(LinearMap):
    """Matrix-free Lindblad generator acting on row-stacked density vectors.

    Implements ``vec(-i w_h [H, rho] + sum_k rate_k D[A_k] rho)`` without ever
    forming the ``d^2 x d^2`` superoperator, which is out of reach densely for
    the larger tensor-product systems.  ``dense()`` still materializes the
    superoperator for small dimensions so oracle comparisons stay possible.
    """

    def __init__(self, h: np.ndarray, jumps: Sequence[tuple[float, np.ndarray]] = ()):
        h = np.ascontiguousarray(h, dtype=complex)
        d = h.shape[0]
        if h.shape != (d, d):
            raise DimensionError(f"expected square Hamiltonian, got {h.shape}")
        self.h = h
        self.jumps = [(float(r), np.ascontiguousarray(a, dtype=complex)) for r, a in jumps]
        for _, a in self.jumps:
            if a.shape != (d, d):
                raise DimensionError("jump operator dimension mismatch")
        self.hilbert_dim = d
        self.dim = d * d
        self._ada = [(r, a.conj().T @ a) for r, a in self.jumps]
        self._box: SpectralBox | None = None

    def matvec(self, v: np.ndarray) -> np.ndarray:
        d = self.hilbert_dim
        stacked = v.ndim == 2
        # (dim, k) stacks become (k, d, d) batches of density-like matrices
        rho = np.moveaxis(v.reshape(d, d, -1), -1, 0) if stacked else v.reshape(1, d, d)
        out = -1j * (self.h @ rho - rho @ self.h)
        for (rate, a), (_, ada) in zip(self.jumps, self._ada):
            out += rate * (2 * (a @ rho @ a.conj().T) - ada @ rho - rho @ ada)
        return np.moveaxis(out, 0, -1).reshape(v.shape) if stacked else out.reshape(-1)

    def trace(self) -> complex:
        d = self.hilbert_dim
        tr = 0.0 + 0.0j
        for (rate, a), (_, ada) in zip(self.jumps, self._ada):
            tr += rate * (2 * np.trace(a) * np.trace(a).conjugate() - 2 * d * np.trace(ada))
        return complex(tr)

    def spectral_box(self) -> SpectralBox:
        """Field-of-values bounding box assembled from ``d x d`` data.

        The commutator part is anti-hermitian as a superoperator, so it only
        widens the imaginary axis; the real extent comes from the dissipators
        alone.  Gershgorin sums of the Hamiltonian and jump operators bound
        the hermitian and anti-hermitian parts row by row without forming the
        superoperator.
        """
        if self._box is not None:
            return self._box
        habs = np.abs(self.h)
        hdiag = np.diag(self.h).real
        hrow = habs.sum(axis=1) - np.abs(np.diag(self.h))
        hcol = habs.sum(axis=0) - np.abs(np.diag(self.h))
        im_center = -(hdiag[:, None] - hdiag[None, :])
        im_radius = hrow[:, None] + hcol[None, :]
        re_center = np.zeros_like(im_center)
        re_radius = np.zeros_like(im_radius)
        for (rate, a), (_, ada) in zip(self.jumps, self._ada):
            adiag = np.diag(a)
            adda = np.diag(ada).real
            arow_full = np.abs(a).sum(axis=1)
            acol_full = np.abs(a).sum(axis=0)
            adrow = np.abs(ada).sum(axis=1) - np.abs(np.diag(ada))
            sandwich_diag = 2 * adiag[:, None] * adiag.conj()[None, :]
            # off-diagonal sums of the sandwich term and of its adjoint
            srow = 2 * arow_full[:, None] * arow_full[None, :] - np.abs(sandwich_diag)
            scol = 2 * acol_full[:, None] * acol_full[None, :] - np.abs(sandwich_diag)
            d_radius = (srow + scol) / 2 + adrow[:, None] + adrow[None, :]
            re_center += rate * (sandwich_diag.real - adda[:, None] - adda[None, :])
            im_center = im_center + rate * sandwich_diag.imag
            re_radius += rate * d_radius
            im_radius = im_radius + rate * d_radius
        self._box = SpectralBox(
            float((re_center - re_radius).min()),
            float((re_center + re_radius).max()),
            float((im_center - im_radius).min()),
            float((im_center + im_radius).max()),
        )
        return self._box

    def dense(self) -> np.ndarray:
        if self.dim > _MAX_DENSE_DIM:
            raise DimensionError(
                f"dense superoperator of dimension {self.dim} exceeds cap {_MAX_DENSE_DIM}"
            )
        return lindblad_superop(self.h, self.jumps)
