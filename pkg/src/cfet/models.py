"""Physical systems as generators, plus every closed-form oracle.

Three families:

* a driven spin in a rotating transverse field (closed), solvable exactly in
  a co-rotating frame;
* the same spin with collective decay (open), with closed-form stationary
  state, relaxation eigenmodes and inversion transient at resonance;
* the parametrically driven lossy Dicke model on the (spin) x (Fock) product
  space, whose weak-coupling ladder spectrum predicts all resonance and
  emission-line positions.

Conventions.  The spin Hamiltonian is ``2*delta*Jz + 2*v*cos(2 w t) Jx
+ 2*v*sin(2 w t) Jy`` with the standard spin matrices.  The frame that makes
this drive static rotates at angular rate ``2 w`` about z (the co-rotating
frame), giving ``2 (delta - w) Jz + 2 v Jx``.  The Dicke coupling operator is
the collective ladder sum ``(Jplus + Jminus) (a + a+)``: with that
normalization the two-excitation splitting is ``sqrt(8 j - 2) * coupling``,
matching the quoted level formulas and the observed resonance positions.
Tensor ordering is spin factor first, photon factor second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._dicke import DickeMap, DickeStructure
from .engines import expm_dense
from .operators import (
    boson_operators,
    hamiltonian_superop,
    kron,
    lindblad_superop,
    spin_operators,
    vec,
)
from .propagators import DenseGenerator, Generator, LindbladGenerator

__all__ = [
    "SpinModelParams",
    "spin_rotating_field",
    "spin_rotating_field_linear_ramp",
    "spin_rotating_frame_hamiltonian",
    "spin_rotating_frame_superop",
    "spin_exact_state",
    "spin_steady_state",
    "spin_jz_steady",
    "SpinAnalytic",
    "spin_resonance_modes",
    "spin_jz_analytic",
    "DickeParams",
    "dicke_coupling_operator",
    "dicke_hamiltonian",
    "dicke_generator",
    "dicke_initial_state",
    "DickeLevels",
    "dicke_levels",
    "transition_energies",
]


# ---------------------------------------------------------------------------
# spin in a rotating magnetic field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpinModelParams:
    """Spin length, transition energy, drive amplitude, field frequency, loss."""

    j: float = 0.5
    transition: float = 1.0  # level splitting per unit Jz
    drive: float = 1.0  # transverse field amplitude
    frequency: float = 1.0  # rotation frequency of the transverse field
    loss: float = 0.0  # collective decay rate (0 = closed system)


def spin_rotating_field(p: SpinModelParams) -> DenseGenerator:
    """Generator for the driven spin; Schroedinger for ``loss=0``, else Lindblad.

    Closed: ``-i H(t)`` acting on kets.  Open: the vectorized Liouvillian with
    the drive split into cos/sin modulated parts and the static part carrying
    ``2*delta*Jz`` plus the collective-decay dissipator.
    """
    ops = spin_operators(p.j)
    two_w = 2 * p.frequency
    f_cos = lambda t: math.cos(two_w * t)
    f_sin = lambda t: math.sin(two_w * t)
    if p.loss == 0.0:
        return DenseGenerator(
            -2j * p.transition * ops.jz,
            [(-2j * p.drive * ops.jx, f_cos), (-2j * p.drive * ops.jy, f_sin)],
        )
    static = hamiltonian_superop(2 * p.transition * ops.jz) + p.loss * (
        lindblad_superop(np.zeros_like(ops.jz), [(1.0, ops.jminus)])
    )
    return DenseGenerator(
        static,
        [
            (hamiltonian_superop(2 * p.drive * ops.jx), f_cos),
            (hamiltonian_superop(2 * p.drive * ops.jy), f_sin),
        ],
    )


def spin_rotating_field_linear_ramp(
    p: SpinModelParams, freq_start: float, freq_end: float, t_ramp: float
) -> DenseGenerator:
    """Driven spin with a linearly swept field frequency.

    The drive phase is the integrated instantaneous frequency
    ``2 * integral_0^t w(s) ds``, so the momentary rotation rate equals the
    swept ``w(t)`` and quasi-static steady-state formulas can be compared
    pointwise along the sweep.
    """
    rate = (freq_end - freq_start) / t_ramp

    def phase(t: float) -> float:
        return 2 * (freq_start * t + 0.5 * rate * t * t)

    ops = spin_operators(p.j)
    f_cos = lambda t: math.cos(phase(t))
    f_sin = lambda t: math.sin(phase(t))
    if p.loss == 0.0:
        return DenseGenerator(
            -2j * p.transition * ops.jz,
            [(-2j * p.drive * ops.jx, f_cos), (-2j * p.drive * ops.jy, f_sin)],
        )
    static = hamiltonian_superop(2 * p.transition * ops.jz) + p.loss * (
        lindblad_superop(np.zeros_like(ops.jz), [(1.0, ops.jminus)])
    )
    return DenseGenerator(
        static,
        [
            (hamiltonian_superop(2 * p.drive * ops.jx), f_cos),
            (hamiltonian_superop(2 * p.drive * ops.jy), f_sin),
        ],
    )


def spin_rotating_frame_hamiltonian(p: SpinModelParams) -> np.ndarray:
    """Static Hamiltonian in the co-rotating frame: ``2(delta-w)Jz + 2v Jx``."""
    ops = spin_operators(p.j)
    return 2 * (p.transition - p.frequency) * ops.jz + 2 * p.drive * ops.jx


def spin_rotating_frame_superop(p: SpinModelParams) -> np.ndarray:
    """Time-independent Liouvillian in the co-rotating frame.

    The collective-decay dissipator is invariant under the frame rotation
    (the jump operator only picks up a phase), so only the Hamiltonian part
    transforms.
    """
    ops = spin_operators(p.j)
    return lindblad_superop(spin_rotating_frame_hamiltonian(p), [(p.loss, ops.jminus)])


def spin_exact_state(p: SpinModelParams, psi0: np.ndarray, t: float) -> np.ndarray:
    """Exact closed-system state via the rotating-frame transformation.

    ``psi(t) = R(t)^+ exp(-i t Htilde) psi0`` with ``R(t) = exp(2 i w t Jz)``;
    the frame rotation is diagonal in the Jz basis.
    """
    if p.loss != 0.0:
        raise ValueError("exact oracle only covers the closed system (loss=0)")
    ops = spin_operators(p.j)
    m = np.diag(ops.jz).real
    htilde = spin_rotating_frame_hamiltonian(p)
    rotated = expm_dense(htilde, -1j * t) @ np.asarray(psi0, dtype=complex)
    return np.exp(-2j * p.frequency * t * m) * rotated


def spin_steady_state(delta: float, drive: float, frequency: float, loss: float) -> np.ndarray:
    """Stationary rotating-frame density matrix of the lossy driven qubit."""
    if loss <= 0:
        raise ValueError("stationary state requires loss > 0")
    det = delta - frequency
    v, g = drive, loss
    denom = 4 * det**2 + g**2 + 2 * v**2
    return (
        np.array(
            [
                [v**2, -(2 * det + 1j * g) * v],
                [-(2 * det - 1j * g) * v, 4 * det**2 + g**2 + v**2],
            ],
            dtype=complex,
        )
        / denom
    )


def spin_jz_steady(delta: float, drive: float, frequency: float, loss: float) -> float:
    """Long-time inversion of the lossy driven qubit (any detuning)."""
    det = delta - frequency
    return drive**2 / (4 * det**2 + loss**2 + 2 * drive**2) - 0.5


class SpinAnalytic(NamedTuple):
    """Relaxation data of the resonantly driven lossy qubit.

    ``xi = sqrt(loss^2 - 16 drive^2)`` (imaginary when underdamped) and the
    transient frequency ``omega_t = sqrt(16 drive^2 - loss^2) / 2``.  The
    ``modes`` are the non-stationary right eigenvectors; ``coeff_sym`` /
    ``coeff_asym`` expand the fully inverted initial state as
    ``rho_inf + coeff_sym (rho2 + rho3) + coeff_asym (rho2 - rho3)``.
    """

    xi: complex
    omega_t: float
    eigenvalues: tuple[complex, complex, complex]
    rho1: np.ndarray
    rho2: np.ndarray
    rho3: np.ndarray
    rho_inf: np.ndarray
    coeff_sym: float
    coeff_asym: complex


def spin_resonance_modes(loss: float, drive: float) -> SpinAnalytic:
    """Closed-form Liouvillian eigensystem at resonance (j=1/2, w = delta)."""
    g, v = loss, drive
    xi = complex(np.sqrt(complex(g**2 - 16 * v**2)))
    omega_t = 0.5 * math.sqrt(max(16 * v**2 - g**2, 0.0))
    lam1 = -g + 0j
    lam2 = -(3 * g + xi) / 2
    lam3 = -(3 * g - xi) / 2
    rho1 = np.array([[0, 1], [1, 0]], dtype=complex)
    rho2 = np.array(
        [[1, -1j * (g - xi) / (4 * v)], [1j * (g - xi) / (4 * v), -1]], dtype=complex
    )
    rho3 = np.array(
        [[1, -1j * (g + xi) / (4 * v)], [1j * (g + xi) / (4 * v), -1]], dtype=complex
    )
    rho_inf = spin_steady_state(1.0, v, 1.0, g)  # detuning zero: only v, g enter
    denom = 2 * v**2 + g**2
    coeff_sym = (v**2 + g**2) / (2 * denom)
    coeff_asym = (g**3 + 5 * g * v**2) / (2 * xi * denom) if xi != 0 else 0.0j
    return SpinAnalytic(
        xi, omega_t, (lam1, lam2, lam3), rho1, rho2, rho3, rho_inf, coeff_sym, coeff_asym
    )


def spin_jz_analytic(t, loss: float, drive: float):
    """Underdamped inversion transient at resonance, initial ``<Jz> = +1/2``.

    Decaying envelope ``exp(-3 loss t / 2)`` around the constant long-time
    value; oscillation frequency ``omega_t``.  Validated against brute-force
    Liouvillian propagation (it reproduces the initial value exactly).
    """
    g, v = loss, drive
    if not g < 4 * v:
        raise ValueError("analytic transient requires the underdamped regime loss < 4*drive")
    t = np.asarray(t, dtype=float)
    omega_t = 0.5 * math.sqrt(16 * v**2 - g**2)
    denom = 2 * v**2 + g**2
    steady = -(g**2) / (2 * denom)
    osc = (v**2 + g**2) * np.cos(omega_t * t) - (g**3 + 5 * g * v**2) * np.sin(
        omega_t * t
    ) / (2 * omega_t)
    result = steady + osc * np.exp(-1.5 * g * t) / denom
    return result if result.ndim else float(result)


# ---------------------------------------------------------------------------
# parametrically driven dissipative Dicke model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DickeParams:
    """Pseudo-spin length, photon cutoff, energies, coupling and loss."""

    j: float = 0.5
    n_max: int = 12
    atom: float = 1.0  # two-level transition energy
    cavity: float = 1.0  # cavity mode frequency
    coupling: float = 1.0  # static interaction constant
    modulation: float = 0.5  # modulation depth of the interaction constant
    mod_frequency: float = 2.0  # modulation frequency
    loss: float = 0.01  # cavity loss rate

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.loss < 0:
            raise ValueError("loss must be nonnegative")
        dim = (int(round(2 * self.j)) + 1) * (self.n_max + 1)
        if dim > 2048:
            raise ValueError(f"joint dimension {dim} beyond supported desk scale")

    @property
    def spin_dim(self) -> int:
        return int(round(2 * self.j)) + 1

    @property
    def dim(self) -> int:
        return self.spin_dim * (self.n_max + 1)

    def lam(self, t: float) -> float:
        return self.coupling + self.modulation * math.cos(self.mod_frequency * t)


def dicke_coupling_operator(p: DickeParams) -> np.ndarray:
    """Joint coupling operator ``(Jplus + Jminus) x (a + a+)``."""
    ops = spin_operators(p.j)
    a, ad = boson_operators(p.n_max)
    return kron(ops.jplus + ops.jminus, a + ad)


def dicke_hamiltonian(p: DickeParams, lam: float | None = None) -> np.ndarray:
    """Joint Hamiltonian at interaction constant ``lam`` (default: static value)."""
    ops = spin_operators(p.j)
    a, ad = boson_operators(p.n_max)
    lam = p.coupling if lam is None else lam
    eye_f = np.eye(p.n_max + 1)
    eye_s = np.eye(p.spin_dim)
    return (
        p.atom * kron(ops.jz, eye_f)
        + p.cavity * kron(eye_s, ad @ a)
        + lam * dicke_coupling_operator(p)
    )


def _dicke_structure(p: DickeParams) -> DickeStructure:
    ops = spin_operators(p.j)
    raise_el = np.diag(ops.jplus, 1).real
    m = np.diag(ops.jz).real
    h0_diag = p.atom * np.repeat(m, p.n_max + 1) + p.cavity * np.tile(
        np.arange(p.n_max + 1), p.spin_dim
    )
    structure = DickeStructure(raise_el, p.n_max, h0_diag)
    # covers every stage combination the exponential-product schemes form
    structure.tabulate_spread(abs(p.coupling) + 1.35 * abs(p.modulation))
    return structure


def dicke_generator(p: DickeParams, backend: str = "auto") -> Generator:
    """Liouvillian generator of the modulated Dicke model.

    Static part: Liouvillian of the Hamiltonian at the mean coupling plus the
    cavity-loss dissipator.  Modulated part: the coupling commutator with
    coefficient ``modulation * cos(mod_frequency * t)``.

    ``backend="structured"`` (default above a small dimension) applies the
    Liouvillian matrix-free through a kernel that exploits the tridiagonal
    tensor structure; ``"dense"`` assembles honest superoperator matrices and
    exists as the cross-check oracle.
    """
    if backend not in ("auto", "dense", "structured"):
        raise ValueError(f"unknown backend {backend!r}")
    omega_p = p.mod_frequency
    f_mod = lambda t: p.modulation * math.cos(omega_p * t)
    if backend == "dense" or (backend == "auto" and p.dim <= 16):
        coupling = dicke_coupling_operator(p)
        a_full = kron(np.eye(p.spin_dim), boson_operators(p.n_max)[0])
        return LindbladGenerator(
            dicke_hamiltonian(p),
            [(coupling, f_mod)],
            [(p.loss, a_full)],
        )
    structure = _dicke_structure(p)

    def factory(b_weight: float, coeffs: np.ndarray) -> DickeMap:
        lam = b_weight * p.coupling + (float(coeffs[0]) if len(coeffs) else 0.0)
        return DickeMap(structure, b_weight, lam, p.loss)

    gen = LindbladGenerator(
        dicke_hamiltonian(p),
        [(dicke_coupling_operator(p), f_mod)],
        [(p.loss, kron(np.eye(p.spin_dim), boson_operators(p.n_max)[0]))],
        map_factory=factory,
    )
    return gen


def dicke_initial_state(p: DickeParams) -> np.ndarray:
    """Vectorized projector on the excitation vacuum ``|m=-j> x |0>``."""
    ket = np.zeros(p.dim, dtype=complex)
    ket[(p.spin_dim - 1) * (p.n_max + 1)] = 1.0  # lowest Jz state, zero photons
    return vec(np.outer(ket, ket.conj()))


class DickeLevels(NamedTuple):
    e1_plus: float
    e1_minus: float
    e2_plus: float
    e2_minus: float
    e2_zero: float


def dicke_levels(j: float, cavity: float, coupling: float) -> DickeLevels:
    """Weak-coupling ladder energies relative to the ground state (resonant case).

    Single excitation splits by ``sqrt(2 j) * coupling``; the doubly excited
    pair by ``sqrt(8 j - 2) * coupling`` around ``2 * cavity``, with a third
    unshifted state appearing for ``j > 1/2`` whose ground-state transition
    is parity forbidden.
    """
    s1 = math.sqrt(2 * j) * coupling
    s2 = math.sqrt(8 * j - 2) * coupling
    return DickeLevels(cavity + s1, cavity - s1, 2 * cavity + s2, 2 * cavity - s2, 2 * cavity)


def transition_energies(
    j: float, cavity: float, coupling: float, branch: str = "upper"
) -> tuple[float, float, float, float]:
    """Emission-line positions when driving one two-photon resonance.

    Returned in increasing energy.  For the upper branch the highest line is
    parity forbidden; for the lower branch (the mirror image under
    ``coupling -> -coupling``) it is the lowest line.
    """
    s1 = math.sqrt(2 * j)
    s2 = math.sqrt(8 * j - 2)
    if branch == "upper":
        lines = (
            cavity - coupling * s1,
            cavity + coupling * (s2 - s1),
            cavity + coupling * s1,
            cavity + coupling * (s2 + s1),
        )
    elif branch == "lower":
        lines = (
            cavity - coupling * (s2 + s1),
            cavity - coupling * s1,
            cavity - coupling * (s2 - s1),
            cavity + coupling * s1,
        )
    else:
        raise ValueError(f"branch must be 'upper' or 'lower', got {branch!r}")
    return lines
