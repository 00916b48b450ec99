"""Seeded random instances: channels, operations, Hamiltonians and states,
plus the fixed benchmark channels."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

import linops
import quantum_core
import serialization
from config import Config
from enorm import Hamiltonian
from errors import InvalidInputError
from quantum_core import QuantumOperation, SmoothingParams

logger = logging.getLogger(__name__)

KINDS = ("random-channel", "random-operation", "dephasing", "depolarizing", "prepare-state", "from-file")
SPACINGS = ("linear", "harmonic", "custom")


@dataclass(frozen=True)
class InstanceSpec:
    kind: str = "random-channel"
    d_A: int = 2
    d_B: int = 2
    kraus_count: int = 2
    seed: int = Config.SEED
    strength: float = 1.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"Unknown instance kind {self.kind!r}; expected one of {KINDS}")
        if self.d_A < 1 or self.d_B < 1 or self.kraus_count < 1:
            raise InvalidInputError(
                f"Dimensions and Kraus count must be positive: {self.d_A}, {self.d_B}, {self.kraus_count}"
            )
        if self.kind == "from-file" and not self.path:
            raise InvalidInputError("A from-file instance needs a path")


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for (seed, keys...)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def haar_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """QR of a Gaussian matrix with the phases of diag(R) moved into Q."""
    q, r = np.linalg.qr(ginibre(rng, rows, cols))
    d = np.diag(r)
    return q * (d / np.abs(d))


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    return haar_isometry(rng, d, d)


def random_unit_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(rng: np.random.Generator, d: int, rank: Optional[int] = None, trace: float = 1.0) -> np.ndarray:
    g = ginibre(rng, d, rank or d)
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return trace * rho / np.real(np.trace(rho))


def random_contraction(rng: np.random.Generator, d: int) -> np.ndarray:
    g = ginibre(rng, d, d)
    return g / max(linops.operator_norm(g), 1.0) * rng.uniform(0.0, 1.0)


def gen_random_channel(spec: InstanceSpec) -> QuantumOperation:
    """Kraus blocks of a random isometry H_A -> H_B ⊗ C^k."""
    k = spec.kraus_count
    if k * spec.d_B < spec.d_A:
        raise InvalidInputError(
            f"No isometry from {spec.d_A} levels into {spec.d_B}x{k}: need kraus_count*d_B >= d_A"
        )
    q = haar_isometry(substream(spec.seed, 0), spec.d_B * k, spec.d_A)
    kraus = tuple(q[j * spec.d_B : (j + 1) * spec.d_B, :] for j in range(k))
    return QuantumOperation(spec.d_A, spec.d_B, kraus)


def gen_random_operation(spec: InstanceSpec, contraction=None) -> QuantumOperation:
    """Random channel preceded by a diagonal contraction on the input."""
    channel = gen_random_channel(spec)
    if contraction is None:
        contraction = substream(spec.seed, 1).uniform(0.0, 1.0, spec.d_A)
    c = np.asarray(contraction, dtype=np.complex128)
    if c.ndim == 1:
        c = np.diag(c)
    if c.shape != (spec.d_A, spec.d_A) or linops.operator_norm(c) > 1 + Config.CONTRACTION_TOL:
        raise InvalidInputError("Input contraction must be a d_A x d_A matrix of norm <= 1")
    return QuantumOperation(spec.d_A, spec.d_B, tuple(k @ c for k in channel.kraus))


def gen_hamiltonian(
    dim: int,
    spacing: Union[str, Sequence[float]] = "linear",
    seed: Optional[int] = None,
    custom: Optional[Sequence[float]] = None,
    random_basis: bool = False,
) -> Hamiltonian:
    if dim < 2:
        raise InvalidInputError(f"Hamiltonian dimension must be at least 2, got {dim}")
    if not isinstance(spacing, str):
        spacing, custom = "custom", spacing
    if spacing == "linear":
        values = np.arange(dim, dtype=float)
    elif spacing == "harmonic":
        values = np.arange(dim, dtype=float) + 0.5
    elif spacing == "custom":
        if custom is None or len(custom) != dim:
            raise InvalidInputError(f"Custom spacing needs {dim} eigenvalues")
        values = np.sort(np.asarray(custom, dtype=float))
        if values[0] < 0:
            raise InvalidInputError(f"Hamiltonian eigenvalues must be non-negative, got {values[0]}")
    else:
        raise InvalidInputError(f"Unknown spacing {spacing!r}; expected one of {SPACINGS}")
    if random_basis:
        basis = haar_unitary(substream(Config.SEED if seed is None else seed, 2), dim)
    else:
        basis = np.eye(dim, dtype=np.complex128)
    return Hamiltonian(values, basis)


def identity_channel(d: int) -> QuantumOperation:
    return QuantumOperation.identity(d)


def unitary_channel(u) -> QuantumOperation:
    m = linops.as_matrix(u)
    if linops.classify_contraction(m) != linops.ContractionClass.UNITARY:
        raise InvalidInputError("unitary_channel needs a unitary matrix")
    return QuantumOperation.from_kraus([m])


def clock(d: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def dephasing_channel(d: int, strength: float = 1.0) -> QuantumOperation:
    """ρ -> (1 - q) ρ + q ZρZ* with the clock operator Z; q = 1 is the unitary Z channel."""
    if not 0.0 <= strength <= 1.0:
        raise InvalidInputError(f"Dephasing strength must lie in [0, 1], got {strength}")
    kraus = []
    if strength < 1:
        kraus.append(np.sqrt(1 - strength) * np.eye(d, dtype=np.complex128))
    if strength > 0:
        kraus.append(np.sqrt(strength) * clock(d))
    return QuantumOperation(d, d, tuple(kraus))


def depolarizing_channel(d: int, strength: float) -> QuantumOperation:
    maximally_mixed = np.eye(d, dtype=np.complex128) / d
    return quantum_core.depolarize_operation(identity_channel(d), SmoothingParams(strength, maximally_mixed))


def prepare_state_channel(d_in: int, state) -> QuantumOperation:
    """ρ -> Tr(ρ) |ψ><ψ|."""
    psi = np.asarray(state, dtype=np.complex128).reshape(-1)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise InvalidInputError("Prepared state must be non-zero")
    psi = psi / norm
    basis = np.eye(d_in, dtype=np.complex128)
    return QuantumOperation(d_in, psi.size, tuple(np.outer(psi, basis[m]) for m in range(d_in)))


def generate(spec: InstanceSpec) -> QuantumOperation:
    if spec.kind == "random-channel":
        return gen_random_channel(spec)
    if spec.kind == "random-operation":
        return gen_random_operation(spec)
    if spec.kind == "dephasing":
        return dephasing_channel(spec.d_A, spec.strength)
    if spec.kind == "depolarizing":
        return depolarizing_channel(spec.d_A, spec.strength)
    if spec.kind == "prepare-state":
        return prepare_state_channel(spec.d_A, np.eye(spec.d_B)[0])
    return serialization.load_operation(spec.path)
