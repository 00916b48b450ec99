"""Quantum operations in Kraus form, Stinespring operators, complementary
operations, the smoothing maps and the support subspaces of operations."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

import linops
from config import Config
from errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuantumOperation:
    d_in: int
    d_out: int
    kraus: Tuple[np.ndarray, ...]
    is_channel: bool = field(init=False)

    def __post_init__(self):
        if self.d_in < 1 or self.d_out < 1:
            raise InvalidInputError(f"Dimensions must be positive: {self.d_in}, {self.d_out}")
        ops = tuple(linops.as_matrix(k) for k in self.kraus)
        for k in ops:
            if k.shape != (self.d_out, self.d_in):
                raise InvalidInputError(
                    f"Kraus operator of shape {k.shape}, expected {(self.d_out, self.d_in)}"
                )
        object.__setattr__(self, "kraus", ops)
        slack = np.linalg.eigvalsh(np.eye(self.d_in) - self.completeness())
        if slack.min() < -Config.TRACE_TOL:
            raise InvalidInputError(
                f"Operation is trace increasing: sum K*K exceeds I by {-slack.min():.3e}"
            )
        object.__setattr__(self, "is_channel", bool(np.max(np.abs(slack)) <= Config.TRACE_TOL))

    @classmethod
    def from_kraus(cls, kraus: Sequence, d_in: Optional[int] = None, d_out: Optional[int] = None):
        ops = [linops.as_matrix(k) for k in kraus]
        if ops:
            d_out = d_out or ops[0].shape[0]
            d_in = d_in or ops[0].shape[1]
        if d_in is None or d_out is None:
            raise InvalidInputError("An empty Kraus family needs explicit dimensions")
        return cls(d_in, d_out, tuple(ops))

    @classmethod
    def identity(cls, d: int) -> "QuantumOperation":
        return cls(d, d, (np.eye(d, dtype=np.complex128),))

    @property
    def kraus_count(self) -> int:
        return len(self.kraus)

    def completeness(self) -> np.ndarray:
        total = np.zeros((self.d_in, self.d_in), dtype=np.complex128)
        for k in self.kraus:
            total += k.conj().T @ k
        return total


@dataclass(frozen=True, eq=False)
class StinespringOperator:
    """V: H_A -> H_B ⊗ H_E with the environment as the second tensor factor."""

    d_A: int
    d_B: int
    d_E: int
    V: np.ndarray

    def __post_init__(self):
        v = linops.as_matrix(self.V)
        if v.shape != (self.d_B * self.d_E, self.d_A):
            raise InvalidInputError(
                f"Stinespring operator of shape {v.shape}, expected {(self.d_B * self.d_E, self.d_A)}"
            )
        if linops.operator_norm(v) > 1 + Config.CONTRACTION_TOL:
            raise InvalidInputError("Stinespring operator is not a contraction")
        object.__setattr__(self, "V", v)

    def blocks(self) -> np.ndarray:
        """V reshaped to (d_B, d_E, d_A)."""
        return self.V.reshape(self.d_B, self.d_E, self.d_A)

    def apply(self, rho) -> np.ndarray:
        """Tr_E V rho V*."""
        out = self.V @ linops.as_matrix(rho) @ self.V.conj().T
        return linops.partial_trace(out, (self.d_B, self.d_E), trace_out=1)


@dataclass(frozen=True, eq=False)
class SmoothingParams:
    p: float
    sigma: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidInputError(f"Smoothing weight must lie in [0, 1], got {self.p}")
        sigma = linops.as_positive(self.sigma)
        if abs(np.real(np.trace(sigma)) - 1) > 1e-9:
            raise InvalidInputError("Reference state must have unit trace")
        _require_nondegenerate(sigma)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


def reference_state(d: int) -> np.ndarray:
    """Nondegenerate state diag(1, 1/2, ..., 1/d), normalized."""
    w = 1.0 / np.arange(1, d + 1)
    return np.diag(w / w.sum()).astype(np.complex128)


def _require_nondegenerate(sigma: np.ndarray):
    w = np.linalg.eigvalsh(sigma)
    if w[0] <= Config.RANK_TOL * w[-1]:
        raise InvalidInputError(
            f"Reference state is degenerate: smallest eigenvalue {w[0]:.3e}"
        )


def _check_input(rho: np.ndarray, d_in: int):
    if rho.shape != (d_in, d_in):
        raise InvalidInputError(f"Input of shape {rho.shape} does not match d_in={d_in}")


def apply(op: QuantumOperation, rho) -> np.ndarray:
    r = linops.as_matrix(rho)
    _check_input(r, op.d_in)
    out = np.zeros((op.d_out, op.d_out), dtype=np.complex128)
    for k in op.kraus:
        out += k @ r @ k.conj().T
    return (out + out.conj().T) / 2


def apply_extended(op: QuantumOperation, rho, d_R: int) -> np.ndarray:
    """(Φ ⊗ id_R)(rho) for rho on H_A ⊗ H_R."""
    r = linops.as_matrix(rho)
    _check_input(r, op.d_in * d_R)
    eye_r = np.eye(d_R)
    out = np.zeros((op.d_out * d_R, op.d_out * d_R), dtype=np.complex128)
    for k in op.kraus:
        kk = np.kron(k, eye_r)
        out += kk @ r @ kk.conj().T
    return (out + out.conj().T) / 2


def stinespring_from_kraus(op: QuantumOperation) -> StinespringOperator:
    kraus = list(op.kraus) or [np.zeros((op.d_out, op.d_in), dtype=np.complex128)]
    blocks = np.stack(kraus, axis=1)
    return StinespringOperator(op.d_in, op.d_out, len(kraus), blocks.reshape(-1, op.d_in))


def kraus_from_stinespring(vs: StinespringOperator) -> QuantumOperation:
    blocks = vs.blocks()
    return QuantumOperation(vs.d_A, vs.d_B, tuple(blocks[:, k, :] for k in range(vs.d_E)))


def _padded(op: QuantumOperation, d_E: int) -> QuantumOperation:
    zero = np.zeros((op.d_out, op.d_in), dtype=np.complex128)
    return QuantumOperation(op.d_in, op.d_out, op.kraus + (zero,) * (d_E - op.kraus_count))


def common_stinespring(
    phi: QuantumOperation, psi: QuantumOperation, pad: int = 0
) -> Tuple[StinespringOperator, StinespringOperator]:
    """Stinespring operators of phi and psi sharing one environment.

    The environment has dimension max(r_phi, r_psi) + pad; each original
    environment sits in the first coordinates, the rest is zero.
    """
    if (phi.d_in, phi.d_out) != (psi.d_in, psi.d_out):
        raise InvalidInputError(
            f"Operations act between different spaces: {(phi.d_in, phi.d_out)} vs {(psi.d_in, psi.d_out)}"
        )
    if pad < 0:
        raise InvalidInputError(f"Padding must be non-negative, got {pad}")
    d_E = max(phi.kraus_count, psi.kraus_count, 1) + pad
    return stinespring_from_kraus(_padded(phi, d_E)), stinespring_from_kraus(_padded(psi, d_E))


def complementary(vs: StinespringOperator) -> QuantumOperation:
    """Ψ̂(rho) = Tr_B V rho V*, an operation from A to E."""
    blocks = vs.blocks()
    return QuantumOperation(vs.d_A, vs.d_E, tuple(blocks[b] for b in range(vs.d_B)))


def smooth_state(rho, sp: SmoothingParams) -> np.ndarray:
    """Θ(rho) = (1 - p) rho + p sigma."""
    r = linops.as_positive(rho)
    if r.shape != sp.sigma.shape:
        raise InvalidInputError(f"State of shape {r.shape} does not match sigma {sp.sigma.shape}")
    if abs(np.real(np.trace(r)) - 1) > 1e-9:
        raise InvalidInputError("Smoothing expects a unit-trace state")
    return (1 - sp.p) * r + sp.p * sp.sigma


def depolarize_operation(phi: QuantumOperation, sp: SmoothingParams) -> QuantumOperation:
    """Φ_p(rho) = (1 - p) Φ(rho) + p Tr(rho) sigma with sigma on the output space."""
    if sp.dim != phi.d_out:
        raise InvalidInputError(f"Reference state lives on dimension {sp.dim}, expected {phi.d_out}")
    kraus: List[np.ndarray] = []
    if sp.p < 1:
        kraus.extend(np.sqrt(1 - sp.p) * k for k in phi.kraus)
    if sp.p > 0:
        lam, vecs = linops.eigh(sp.sigma)
        basis = np.eye(phi.d_in, dtype=np.complex128)
        for j in range(phi.d_out):
            for m in range(phi.d_in):
                kraus.append(np.sqrt(sp.p * lam[j]) * np.outer(vecs[:, j], basis[m]))
    return QuantumOperation(phi.d_in, phi.d_out, tuple(kraus))


def operation_support_subspace(phi: QuantumOperation, sigma) -> np.ndarray:
    """Projector onto supp Φ(sigma), the minimal output subspace of Φ."""
    s = linops.as_positive(sigma)
    _require_nondegenerate(s)
    return linops.support_projector(apply(phi, s))


def environment_support_projector(vs: StinespringOperator, sigma) -> np.ndarray:
    """P_Ψ: projector onto the minimal environment subspace of the complementary operation."""
    return operation_support_subspace(complementary(vs), sigma)


def purify(rho) -> np.ndarray:
    """Vector sum_i sqrt(lambda_i) |e_i> ⊗ |i> on H_A ⊗ H_R with d_R = rank(rho)."""
    r = linops.as_positive(rho)
    lam, vecs = linops.eigh(r)
    keep = lam > Config.RANK_TOL * lam[0]
    lam, vecs = lam[keep], vecs[:, keep]
    return (vecs * np.sqrt(lam)).reshape(-1)
