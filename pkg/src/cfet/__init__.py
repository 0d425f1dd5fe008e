"""Commutator-free exponential time propagation for driven quantum systems.

Propagates closed (Schroedinger) and open (Lindblad) systems with
time-dependent generators using products of exponentials of fixed generator
combinations, evaluates the exponentials with Chebyshev expansions, and ships
the driven-spin and Dicke reference models with their closed-form oracles,
two-time correlation machinery and an error-versus-effort benchmark harness.
"""

from .engines import EffortCounter, EngineError, EngineKind, EngineSpec, expm_action, expm_dense
from .operators import (
    DenseMap,
    LindbladMap,
    LinearMap,
    boson_operators,
    dissipator_superop,
    error_max,
    hamiltonian_superop,
    kron,
    lindblad_superop,
    spin_operators,
    unvec,
    vec,
)
from .propagators import (
    OPT_CFET4,
    SIMPLE_CFET4,
    DenseGenerator,
    Generator,
    LindbladGenerator,
    PropagationError,
    RunRecord,
    SchemeKind,
    SchemeSpec,
    magnus4_from_taylor,
    propagate,
    verify_order_conditions,
)

__version__ = "0.1.0"
