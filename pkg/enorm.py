"""The operator E-norm and the linear optimizer over energy-constrained states.

``max_linear_over_energy_ball`` maximizes Tr(M rho) over states with
Tr(H rho) <= E through the convex dual

    g(lambda) = lambda E + lambda_max(M - lambda H),  lambda >= 0,

bisecting on the sign of its subgradient E - <v|H|v> (v the top eigenvector),
and recovers the primal optimum as a mixture of two vectors of the top
eigenspace that makes the energy constraint active.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.optimize

import linops
from config import Config
from errors import InvalidInputError, NumericalFailureError
from quantum_core import SmoothingParams

logger = logging.getLogger(__name__)

# Window widths (relative to the spectral scale) tried when collecting the top eigenspace.
_WINDOWS = tuple(1e-11 * 10.0**k for k in range(8))


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Positive operator with ascending eigenvalues and an orthonormal eigenbasis."""

    eigenvalues: np.ndarray
    eigenbasis: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        basis = linops.as_matrix(self.eigenbasis)
        if basis.shape != (values.size, values.size):
            raise InvalidInputError(
                f"Eigenbasis of shape {basis.shape} does not match {values.size} eigenvalues"
            )
        if values.size < 1 or not np.all(np.isfinite(values)):
            raise InvalidInputError("Hamiltonian needs finite eigenvalues")
        if values.min() < 0:
            raise InvalidInputError(f"Hamiltonian must be positive, got eigenvalue {values.min()}")
        if np.max(np.abs(basis.conj().T @ basis - np.eye(values.size))) > 1e-12:
            raise InvalidInputError("Hamiltonian eigenbasis is not orthonormal")
        order = np.argsort(values, kind="stable")
        object.__setattr__(self, "eigenvalues", values[order])
        object.__setattr__(self, "eigenbasis", basis[:, order])

    @classmethod
    def diagonal(cls, values) -> "Hamiltonian":
        values = np.asarray(values, dtype=float)
        return cls(values, np.eye(values.size, dtype=np.complex128))

    @classmethod
    def from_matrix(cls, h) -> "Hamiltonian":
        w, v = scipy.linalg.eigh(linops.as_hermitian(h))
        return cls(w, v)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def E0(self) -> float:
        return float(self.eigenvalues[0])

    @cached_property
    def matrix(self) -> np.ndarray:
        h = (self.eigenbasis * self.eigenvalues) @ self.eigenbasis.conj().T
        return (h + h.conj().T) / 2

    @cached_property
    def ground_state(self) -> np.ndarray:
        g = self.eigenbasis[:, 0]
        return np.outer(g, g.conj())

    def energy(self, rho) -> float:
        return float(np.real(np.trace(self.matrix @ rho)))


@dataclass(frozen=True)
class EnergyBound:
    E: float

    def check(self, hamiltonian: Hamiltonian) -> float:
        if not np.isfinite(self.E) or not self.E > hamiltonian.E0:
            raise InvalidInputError(
                f"Energy bound {self.E} must exceed the ground energy {hamiltonian.E0}"
            )
        return float(self.E)


def energy_value(hamiltonian: Hamiltonian, energy: Union[float, EnergyBound]) -> float:
    bound = energy if isinstance(energy, EnergyBound) else EnergyBound(float(energy))
    return bound.check(hamiltonian)


@dataclass(frozen=True, eq=False)
class ConstrainedOptimum:
    value: float
    primal_value: float
    lambda_star: float
    rho_star: np.ndarray
    active: bool
    pure_witness: Optional[np.ndarray] = None

    @property
    def duality_gap(self) -> float:
        return self.value - self.primal_value


def _top_vector(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    _, v = scipy.linalg.eigh(a, subset_by_index=[n - 1, n - 1])
    return v[:, 0]


def _top_window(a: np.ndarray, delta: float):
    w, v = scipy.linalg.eigh(a)
    return w[-1], v[:, w >= w[-1] - delta]


def max_linear_over_energy_ball(m, hamiltonian: Hamiltonian, energy) -> ConstrainedOptimum:
    """max Tr(M rho) over states rho with Tr(H rho) <= E."""
    m = linops.as_hermitian(m)
    if m.shape[0] != hamiltonian.dim:
        raise InvalidInputError(
            f"Operator of dimension {m.shape[0]} against a {hamiltonian.dim}-level Hamiltonian"
        )
    e = energy_value(hamiltonian, energy)
    h = hamiltonian.matrix
    spec_m = np.linalg.eigvalsh(m)
    hi = (spec_m[-1] - spec_m[0]) / (e - hamiltonian.E0) + 1

    def subgradient(lam: float) -> float:
        v = _top_vector(m - lam * h)
        return e - float(np.real(np.vdot(v, h @ v)))

    scale = 1 + np.max(np.abs(spec_m))
    _, top0 = _top_window(m, _WINDOWS[0] * scale)
    if np.linalg.eigvalsh(top0.conj().T @ h @ top0)[0] <= e + Config.ENERGY_TOL:
        lam = 0.0
    else:
        if subgradient(hi) < 0:
            raise NumericalFailureError(f"Dual bracket [0, {hi:.6g}] does not contain the optimum")
        lam = scipy.optimize.bisect(subgradient, 0.0, hi, xtol=1e-15 * hi, maxiter=200)

    a = m - lam * h
    scale = 1 + np.max(np.abs(spec_m)) + lam * hamiltonian.eigenvalues[-1]
    for width in _WINDOWS:
        mu, q = _top_window(a, width * scale)
        hw, hv = scipy.linalg.eigh(q.conj().T @ h @ q)
        low, high = q @ hv[:, 0], q @ hv[:, -1]
        e_low, e_high = hw[0], hw[-1]
        if e_low > e + Config.ENERGY_TOL:
            continue
        if lam == 0.0 or e_high <= e:
            t = 0.0 if lam == 0.0 else 1.0
        else:
            t = float(np.clip((e - e_low) / (e_high - e_low), 0.0, 1.0)) if e_high > e_low else 0.0
        break
    else:
        raise NumericalFailureError("Could not recover a feasible primal state from the dual")

    rho = t * np.outer(high, high.conj()) + (1 - t) * np.outer(low, low.conj())
    rho = (rho + rho.conj().T) / 2
    witness = np.sqrt(t) * high + np.sqrt(1 - t) * low
    witness /= np.linalg.norm(witness)
    dual = lam * e + mu
    primal = float(np.real(np.trace(m @ rho)))
    if dual - primal > 1e-9 * (1 + abs(dual)):
        logger.warning("Energy-ball optimum has duality gap %.3e", dual - primal)
    return ConstrainedOptimum(
        value=float(dual),
        primal_value=primal,
        lambda_star=float(lam),
        rho_star=rho,
        active=bool(lam > 0 and abs(hamiltonian.energy(rho) - e) <= Config.ENERGY_TOL),
        pure_witness=witness,
    )


def _check_domain(x: np.ndarray, hamiltonian: Hamiltonian):
    if x.shape[1] != hamiltonian.dim:
        raise InvalidInputError(
            f"Operator with {x.shape[1]} input dimensions against a {hamiltonian.dim}-level Hamiltonian"
        )


def enorm_optimum(x, hamiltonian: Hamiltonian, energy) -> ConstrainedOptimum:
    x = linops.as_matrix(x)
    _check_domain(x, hamiltonian)
    gram = x.conj().T @ x
    return max_linear_over_energy_ball((gram + gram.conj().T) / 2, hamiltonian, energy)


def enorm(x, hamiltonian: Hamiltonian, energy) -> float:
    """||X||_E = sup sqrt(Tr X rho X*) over states with Tr(H rho) <= E."""
    return float(np.sqrt(max(enorm_optimum(x, hamiltonian, energy).value, 0.0)))


def enorm_smoothed(x, hamiltonian: Hamiltonian, energy, sp: SmoothingParams) -> float:
    """Smoothed norm via [||X||^n_E]^2 = (1 - p) ||X||_E^2 + p Tr X sigma X*."""
    x = linops.as_matrix(x)
    _check_domain(x, hamiltonian)
    if sp.dim != hamiltonian.dim:
        raise InvalidInputError("Reference state and Hamiltonian live on different spaces")
    base = enorm(x, hamiltonian, energy) ** 2
    reference = float(np.real(np.trace(x @ sp.sigma @ x.conj().T)))
    return float(np.sqrt(max((1 - sp.p) * base + sp.p * reference, 0.0)))


def pure_witness_refine(opt: ConstrainedOptimum, m, hamiltonian: Hamiltonian, energy) -> np.ndarray:
    """Unit vector phi with <phi|H|phi> <= E attaining the constrained optimum.

    Local ascent (SLSQP on the real parametrization of the unit sphere) seeded
    at the two-level witness of ``opt``.
    """
    m = linops.as_hermitian(m)
    e = energy_value(hamiltonian, energy)
    h = hamiltonian.matrix
    d = hamiltonian.dim
    if opt.pure_witness is not None:
        seed = opt.pure_witness
    else:
        seed = linops.eigh(opt.rho_star).eigenvectors[:, 0]

    def unpack(x):
        return x[:d] + 1j * x[d:]

    def quad(a, x):
        v = unpack(x)
        return float(np.real(np.vdot(v, a @ v)))

    def quad_grad(a, x):
        g = 2 * (a @ unpack(x))
        return np.concatenate([g.real, g.imag])

    x0 = np.concatenate([seed.real, seed.imag])
    result = scipy.optimize.minimize(
        lambda x: -quad(m, x),
        x0,
        jac=lambda x: -quad_grad(m, x),
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": lambda x: float(x @ x) - 1.0, "jac": lambda x: 2 * x},
            {"type": "ineq", "fun": lambda x: e - quad(h, x), "jac": lambda x: -quad_grad(h, x)},
        ],
        options={"ftol": 1e-14, "maxiter": 200},
    )
    best, best_value = None, -np.inf
    for x in (x0, result.x):
        v = unpack(x)
        v = v / np.linalg.norm(v)
        value = float(np.real(np.vdot(v, m @ v)))
        feasible = float(np.real(np.vdot(v, h @ v))) <= e + Config.ENERGY_TOL
        if feasible and value > best_value:
            best, best_value = v, value
    if best is None or best_value < opt.value - 1e-7:
        raise NumericalFailureError(
            f"Pure witness reaches {best_value:.10g}, optimum is {opt.value:.10g}"
        )
    return best


def _unit_state(rho, hamiltonian: Hamiltonian) -> np.ndarray:
    r = linops.as_positive(rho)
    if r.shape[0] != hamiltonian.dim:
        raise InvalidInputError(f"State of dimension {r.shape[0]} on a {hamiltonian.dim}-level system")
    if abs(np.real(np.trace(r)) - 1) > 1e-9:
        raise InvalidInputError("Expected a unit-trace state")
    return r


def project_feasible(rho, hamiltonian: Hamiltonian, energy) -> np.ndarray:
    """Mix rho with the ground state when its energy exceeds E by at most the energy tolerance."""
    e = energy_value(hamiltonian, energy)
    r = _unit_state(rho, hamiltonian)
    mean = hamiltonian.energy(r)
    if mean <= e:
        return r
    if mean > e + Config.ENERGY_TOL:
        raise InvalidInputError(f"State energy {mean:.12g} exceeds the bound {e:.12g}")
    gamma = (mean - e) / (mean - hamiltonian.E0)
    return (1 - gamma) * r + gamma * hamiltonian.ground_state


def repair_state(rho, hamiltonian: Hamiltonian, energy) -> np.ndarray:
    """Feasible state built from a numerical estimate ``rho``.

    The positive part of the Hermitian part is normalized and then mixed with
    the ground state until Tr(H rho) <= E holds exactly.
    """
    e = energy_value(hamiltonian, energy)
    r = linops.as_matrix(rho)
    w, v = scipy.linalg.eigh((r + r.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        return interior_state(hamiltonian, e)
    r = (v * (w / w.sum())) @ v.conj().T
    mean = hamiltonian.energy(r)
    if mean > e:
        gamma = (mean - e) / (mean - hamiltonian.E0)
        r = (1 - gamma) * r + gamma * hamiltonian.ground_state
    return (r + r.conj().T) / 2


def interior_state(hamiltonian: Hamiltonian, energy) -> np.ndarray:
    """Full-rank feasible state: the ground state mixed with the maximally mixed state."""
    e = energy_value(hamiltonian, energy)
    d = hamiltonian.dim
    excess = float(np.mean(hamiltonian.eigenvalues)) - hamiltonian.E0
    t = 1.0 if excess <= 0 else min(1.0, (e - hamiltonian.E0) / excess)
    return (1 - t) * hamiltonian.ground_state + t * np.eye(d, dtype=np.complex128) / d
