"""Fidelity and Bures distance of positive operators, and the Uhlmann alignment
of two purifications."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

import linops
import quantum_core
from errors import InvalidInputError, NumericalFailureError
from quantum_core import QuantumOperation

logger = logging.getLogger(__name__)

U_COND_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    U0: np.ndarray
    overlap: complex
    fidelity_value: float
    satisfies_U_cond: bool
    u_cond_residual: float


def _pair(rho, sigma) -> Tuple[np.ndarray, np.ndarray]:
    r, s = linops.as_positive(rho), linops.as_positive(sigma)
    if r.shape != s.shape:
        raise InvalidInputError(f"Operators of different shapes: {r.shape} vs {s.shape}")
    return r, s


def fidelity(rho, sigma) -> float:
    """F = [Tr sqrt(sqrt(sigma) rho sqrt(sigma))]^2 = ||sqrt(rho) sqrt(sigma)||_1^2,
    also for subnormalized operators."""
    r, s = _pair(rho, sigma)
    return linops.trace_norm(linops.psd_sqrt(r) @ linops.psd_sqrt(s)) ** 2


def bures_distance(rho, sigma) -> float:
    r, s = _pair(rho, sigma)
    total = float(np.real(np.trace(r) + np.trace(s)))
    arg = total - 2 * np.sqrt(fidelity(r, s))
    if arg < -1e-9 * max(1.0, total):
        raise NumericalFailureError(f"Bures distance argument is negative: {arg:.3e}")
    return float(np.sqrt(max(arg, 0.0)))


def align_purifications(phi, psi, dims: Tuple[int, int]) -> AlignmentResult:
    """Maximize |<psi| I_A ⊗ U |phi>| over contractions U on H_B.

    With K = Tr_A |phi><psi| the maximum of Re Tr(UK) over the unit ball is
    ||K||_1, attained at U0 = W* for the polar factor K = W|K|.
    """
    d_A, d_B = dims
    x = np.asarray(phi, dtype=np.complex128).reshape(-1)
    y = np.asarray(psi, dtype=np.complex128).reshape(-1)
    if x.size != d_A * d_B or y.size != d_A * d_B:
        raise InvalidInputError(
            f"Vectors of sizes {x.size}, {y.size} do not live on a {d_A}x{d_B} space"
        )
    k = x.reshape(d_A, d_B).T @ y.reshape(d_A, d_B).conj()
    w, _ = linops.polar(k)
    u0 = w.conj().T
    lifted = np.kron(np.eye(d_A), u0)
    overlap = complex(np.vdot(y, lifted @ x))
    residual = float(np.linalg.norm(np.kron(np.eye(d_A), u0.conj().T @ u0) @ x - x))
    return AlignmentResult(
        U0=u0,
        overlap=overlap,
        fidelity_value=abs(overlap) ** 2,
        satisfies_U_cond=residual <= U_COND_TOL * max(1.0, float(np.linalg.norm(x))),
        u_cond_residual=residual,
    )


def _extended_state(op: QuantumOperation, omega, d_R: Optional[int]) -> Tuple[np.ndarray, int]:
    w = np.asarray(omega, dtype=np.complex128)
    if w.ndim == 1:
        w = np.outer(w, w.conj())
    if w.shape[0] % op.d_in:
        raise InvalidInputError(f"State of dimension {w.shape[0]} is not on H_A ⊗ H_R")
    d_R = d_R or w.shape[0] // op.d_in
    state = linops.as_positive(w)
    if abs(np.real(np.trace(state)) - 1) > 1e-9:
        raise InvalidInputError("Witness must be a unit-trace state")
    return state, d_R


def operation_fidelity_lower_witness(
    phi: QuantumOperation, psi: QuantumOperation, omega, d_R: Optional[int] = None
) -> float:
    """F(Φ⊗id(ω), Ψ⊗id(ω)), an upper bound on the operational fidelity F(Φ, Ψ)."""
    state, d_R = _extended_state(phi, omega, d_R)
    return fidelity(
        quantum_core.apply_extended(phi, state, d_R), quantum_core.apply_extended(psi, state, d_R)
    )


def operation_bures_witness(
    phi: QuantumOperation, psi: QuantumOperation, omega, d_R: Optional[int] = None
) -> float:
    """β(Φ⊗id(ω), Ψ⊗id(ω)), a lower bound on the Bures distance of the operations."""
    state, d_R = _extended_state(phi, omega, d_R)
    return bures_distance(
        quantum_core.apply_extended(phi, state, d_R), quantum_core.apply_extended(psi, state, d_R)
    )
