"""Energy-constrained Bures distance between quantum operations and its
certified sandwich

    lower = β(Φ⊗id(ω), Ψ⊗id(ω)) <= β_E(Φ, Ψ) <= ||V_Φ - (I_B ⊗ U) V_Ψ||_E = upper

with ω a purification of a feasible input state and U in W_Ψ.

The smoothed objective

    f(ρ, U) = Tr Φ(Θ(ρ)) + Tr Ψ(Θ(ρ)) - 2 Re Tr V_Φ*(I_B ⊗ U) V_Ψ Θ(ρ)

is affine in each argument. Its minimum over contractions U has the closed form
Tr Φ(τ) + Tr Ψ(τ) - 2 ||Tr_B V_Ψ τ V_Φ*||_1, a concave function of ρ, which
``solve_saddle`` maximizes by conditional-gradient steps whose vertices are the
exact best responses ``rho_step``.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import cvxpy as cp
import numpy as np
import pandas as pd
import scipy.linalg
import scipy.optimize
from joblib import Parallel, delayed

import linops
import quantum_core
from config import Config
from enorm import (
    ConstrainedOptimum,
    EnergyBound,
    Hamiltonian,
    energy_value,
    enorm,
    enorm_smoothed,
    interior_state,
    max_linear_over_energy_ball,
    project_feasible,
    repair_state,
)
from errors import InvalidInputError
from fidelity import operation_bures_witness
from instances import substream
from quantum_core import QuantumOperation, SmoothingParams, StinespringOperator

logger = logging.getLogger(__name__)

# (I ⊗ P_Ψ) V_Ψ = V_Ψ must hold to this accuracy for a problem to be built.
SUPPORT_TOL = 1e-8
# Iterations allowed without the smoothed gap shrinking by tol / 10 before the
# semidefinite polish takes over.
STALL_WINDOW = 50
# Conditional-gradient steps that refine each restart of the direct estimator.
DIRECT_REFINE_ITER = 200
# Solvers tried in order for the semidefinite polish.
SDP_SOLVERS = (
    (cp.CLARABEL, {}),
    (cp.SCS, {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 100_000}),
)


@dataclass(frozen=True, eq=False)
class KswProblem:
    V_phi: StinespringOperator
    V_psi: StinespringOperator
    hamiltonian: Hamiltonian
    energy: float
    sp: SmoothingParams
    P_psi: np.ndarray

    def __post_init__(self):
        a, b = self.V_phi, self.V_psi
        if (a.d_A, a.d_B, a.d_E) != (b.d_A, b.d_B, b.d_E):
            raise InvalidInputError(
                f"Stinespring operators on different spaces: {(a.d_A, a.d_B, a.d_E)} vs {(b.d_A, b.d_B, b.d_E)}"
            )
        if self.hamiltonian.dim != a.d_A or self.sp.dim != a.d_A:
            raise InvalidInputError("Hamiltonian and reference state must act on the input space")
        object.__setattr__(self, "energy", energy_value(self.hamiltonian, self.energy))
        p = linops.as_hermitian(self.P_psi)
        if p.shape != (a.d_E, a.d_E) or np.max(np.abs(p @ p - p)) > SUPPORT_TOL:
            raise InvalidInputError("P_psi must be a projector on the environment")
        if np.max(np.abs(self.lift(p) @ b.V - b.V)) > SUPPORT_TOL:
            raise InvalidInputError("P_psi does not contain the environment support of V_psi")
        object.__setattr__(self, "P_psi", p)

    @classmethod
    def build(
        cls,
        phi: QuantumOperation,
        psi: QuantumOperation,
        hamiltonian: Hamiltonian,
        energy: Union[float, EnergyBound],
        p: float = 0.0,
        pad: int = 0,
        sigma: Optional[np.ndarray] = None,
    ) -> "KswProblem":
        """Problem over a common Stinespring representation with ``pad`` extra environment levels."""
        v_phi, v_psi = quantum_core.common_stinespring(phi, psi, pad)
        if sigma is None:
            sigma = quantum_core.reference_state(phi.d_in)
        sp = SmoothingParams(p, sigma)
        projector = quantum_core.environment_support_projector(v_psi, sp.sigma)
        return cls(v_phi, v_psi, hamiltonian, energy_value(hamiltonian, energy), sp, projector)

    @property
    def d_A(self) -> int:
        return self.V_phi.d_A

    @property
    def d_B(self) -> int:
        return self.V_phi.d_B

    @property
    def d_E(self) -> int:
        return self.V_phi.d_E

    def lift(self, u: np.ndarray) -> np.ndarray:
        return np.kron(np.eye(self.d_B), u)

    def difference(self, u: np.ndarray) -> np.ndarray:
        """V_Φ - (I_B ⊗ U) V_Ψ."""
        return self.V_phi.V - self.lift(u) @ self.V_psi.V

    def operations(self) -> Tuple[QuantumOperation, QuantumOperation]:
        return (
            quantum_core.kraus_from_stinespring(self.V_phi),
            quantum_core.kraus_from_stinespring(self.V_psi),
        )


@dataclass(frozen=True)
class StageRecord:
    p: float
    gap: float
    beta_n: float
    enorm_smoothed_sq: float
    enorm_sq: float
    operator_norm_sq: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class SaddleCertificate:
    U: np.ndarray
    rho: np.ndarray
    lower_bound: float
    upper_bound: float
    gap: float
    p_trace: Tuple[Tuple[float, float], ...]
    iterations: int
    converged: bool
    smoothed_lower: float = 0.0
    smoothed_upper: float = 0.0
    stages: Tuple[StageRecord, ...] = field(default_factory=tuple)
    membership: Tuple[float, float] = (0.0, 0.0)


def _state(prob: KswProblem, rho) -> np.ndarray:
    r = linops.as_positive(rho)
    if r.shape != (prob.d_A, prob.d_A):
        raise InvalidInputError(f"State of shape {r.shape}, expected {(prob.d_A, prob.d_A)}")
    if abs(np.real(np.trace(r)) - 1) > 1e-9:
        raise InvalidInputError("Expected a unit-trace state")
    return r


def _contraction(prob: KswProblem, u) -> np.ndarray:
    m = linops.as_matrix(u)
    if m.shape != (prob.d_E, prob.d_E):
        raise InvalidInputError(f"Environment operator of shape {m.shape}, expected {(prob.d_E, prob.d_E)}")
    if linops.operator_norm(m) > 1 + 1e-9:
        raise InvalidInputError("U must be a contraction")
    return m


def _smooth(prob: KswProblem, rho: np.ndarray) -> np.ndarray:
    return (1 - prob.sp.p) * rho + prob.sp.p * prob.sp.sigma


def _traces(prob: KswProblem, tau: np.ndarray) -> float:
    a, b = prob.V_phi.V, prob.V_psi.V
    return float(np.real(np.trace(a @ tau @ a.conj().T) + np.trace(b @ tau @ b.conj().T)))


def _cross(prob: KswProblem, tau: np.ndarray) -> np.ndarray:
    """K = Tr_B V_Ψ τ V_Φ*, so that Tr V_Φ*(I ⊗ U) V_Ψ τ = Tr U K."""
    k = prob.V_psi.V @ tau @ prob.V_phi.V.conj().T
    return linops.partial_trace(k, (prob.d_B, prob.d_E), trace_out=0)


def _objective(prob: KswProblem, tau: np.ndarray, u: np.ndarray) -> float:
    return _traces(prob, tau) - 2 * float(np.real(np.trace(u @ _cross(prob, tau))))


def _inner_min(prob: KswProblem, rho: np.ndarray) -> float:
    """min over the unit ball of f(rho, .)."""
    tau = _smooth(prob, rho)
    return _traces(prob, tau) - 2 * float(np.sum(scipy.linalg.svdvals(_cross(prob, tau))))


def objective_fn(prob: KswProblem, rho, U) -> float:
    """The smoothed objective f(ρ, U)."""
    return _objective(prob, _smooth(prob, _state(prob, rho)), _contraction(prob, U))


def _base_matrix(prob: KswProblem) -> np.ndarray:
    """V_Φ*V_Φ + V_Ψ*V_Ψ."""
    a_phi, a_psi = prob.V_phi.V, prob.V_psi.V
    g = a_phi.conj().T @ a_phi + a_psi.conj().T @ a_psi
    return (g + g.conj().T) / 2


def _payoff_matrix(prob: KswProblem, u: np.ndarray) -> np.ndarray:
    """A(U) with f(ρ, U) = Tr A(U) Θ(ρ); also the gradient of min_U f at ρ for the minimizing U."""
    c = prob.V_phi.V.conj().T @ prob.lift(u) @ prob.V_psi.V
    return _base_matrix(prob) - (c + c.conj().T)


def rho_step(prob: KswProblem, U) -> ConstrainedOptimum:
    """Exact maximizer of f(., U) over the energy-constrained states.

    f(ρ, U) = Tr A Θ(ρ) with A = V_Φ*V_Φ + V_Ψ*V_Ψ - (C + C*), C = V_Φ*(I ⊗ U)V_Ψ,
    so the maximization is linear in ρ with M = (1 - p) A and offset p Tr Aσ.
    """
    a = _payoff_matrix(prob, _contraction(prob, U))
    offset = prob.sp.p * float(np.real(np.trace(a @ prob.sp.sigma)))
    opt = max_linear_over_energy_ball((1 - prob.sp.p) * a, prob.hamiltonian, prob.energy)
    return replace(opt, value=opt.value + offset, primal_value=opt.primal_value + offset)


def u_step(prob: KswProblem, rho) -> np.ndarray:
    """Minimizer of f(rho, .) over the unit ball: U = W* P_Ψ for the polar factor of K."""
    k = _cross(prob, _smooth(prob, _state(prob, rho)))
    w, _ = linops.polar(k)
    return w.conj().T @ prob.P_psi


def w_psi_residuals(prob: KswProblem, U) -> Tuple[float, float]:
    """Residuals of (I ⊗ U*U) V_Ψ = V_Ψ and of the idempotence of U*U."""
    u = linops.as_matrix(U)
    gram = u.conj().T @ u
    support = float(np.max(np.abs(prob.lift(gram) @ prob.V_psi.V - prob.V_psi.V)))
    return support, float(np.max(np.abs(gram @ gram - gram)))


def extract_partial_isometry(U, P_psi) -> np.ndarray:
    """Partial isometry W with W*W = P_Ψ built from the contraction U."""
    u = linops.as_matrix(U)
    p = linops.as_hermitian(P_psi)
    if linops.operator_norm(u) > 1 + 1e-9:
        raise InvalidInputError("U must be a contraction")
    up = u @ p
    if np.max(np.abs(u.conj().T @ u - p)) <= Config.MEMBERSHIP_TOL:
        return up
    w, _ = linops.polar(up)
    gram = w.conj().T @ w
    lam_in, vec_in = scipy.linalg.eigh(p - gram)
    missing = vec_in[:, lam_in > 0.5]
    if missing.shape[1]:
        lam_out, vec_out = scipy.linalg.eigh(np.eye(p.shape[0]) - w @ w.conj().T)
        free = vec_out[:, lam_out > 0.5]
        logger.warning(
            "Completing partial isometry on %d missing direction(s) of P_psi", missing.shape[1]
        )
        w = w + free[:, : missing.shape[1]] @ missing.conj().T
    return w


def ksw_upper_bound(prob: KswProblem, U) -> float:
    """||V_Φ - (I ⊗ U) V_Ψ||_E for U in W_Ψ."""
    u = linops.as_matrix(U)
    if u.shape != (prob.d_E, prob.d_E):
        raise InvalidInputError(f"Environment operator of shape {u.shape}, expected {(prob.d_E, prob.d_E)}")
    support, idempotence = w_psi_residuals(prob, u)
    if max(support, idempotence) > Config.MEMBERSHIP_TOL:
        raise InvalidInputError(
            f"U is not in W_psi: support residual {support:.3e}, idempotence residual {idempotence:.3e}"
        )
    return enorm(prob.difference(u), prob.hamiltonian, prob.energy)


def ecbures_lower_bound(
    phi: QuantumOperation, psi: QuantumOperation, hamiltonian: Hamiltonian, energy, rho
) -> float:
    """β of the extended outputs at a purification of the feasible state rho."""
    e = energy_value(hamiltonian, energy)
    r = linops.as_positive(rho)
    if r.shape != (phi.d_in, phi.d_in):
        raise InvalidInputError(f"State of shape {r.shape} for an operation on {phi.d_in} levels")
    if abs(np.real(np.trace(r)) - 1) > 1e-9:
        raise InvalidInputError("Expected a unit-trace state")
    if hamiltonian.energy(r) > e + Config.ENERGY_TOL:
        raise InvalidInputError(f"State energy {hamiltonian.energy(r):.12g} exceeds the bound {e:.12g}")
    omega = quantum_core.purify(r)
    return operation_bures_witness(phi, psi, omega, omega.size // phi.d_in)


def _clip_to_ball(u: np.ndarray) -> np.ndarray:
    w, s, vh = scipy.linalg.svd(u)
    return (w * np.minimum(s, 1.0)) @ vh


def _best_partial_isometry(prob: KswProblem, candidates: Sequence[np.ndarray]) -> Tuple[np.ndarray, float]:
    best, best_value = None, np.inf
    for u in candidates:
        w = extract_partial_isometry(u, prob.P_psi)
        value = ksw_upper_bound(prob, w)
        if value < best_value:
            best, best_value = w, value
    return best, best_value


class _AscentStep(NamedTuple):
    rho: np.ndarray
    value: float
    u: np.ndarray
    response: ConstrainedOptimum
    gamma: float


def _ascent_step(prob: KswProblem, rho_bar: np.ndarray, lower: float) -> _AscentStep:
    """Conditional-gradient step on the concave map ρ ↦ min_U f(ρ, U).

    The payoff matrix of U_t = u_step(ρ̅) is the gradient of the map at ρ̅, so
    the best response to U_t is the vertex. The step length comes from an
    exact line search and stays zero when nothing on the segment beats ``lower``.
    """
    u_t = u_step(prob, rho_bar)
    response = rho_step(prob, u_t)
    direction = response.rho_star - rho_bar

    def along(gamma: float) -> float:
        return _inner_min(prob, rho_bar + gamma * direction)

    search = scipy.optimize.minimize_scalar(
        lambda g: -along(g), bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}
    )
    gamma, value = max(((0.0, lower), (1.0, along(1.0)), (search.x, -search.fun)), key=lambda c: c[1])
    rho = rho_bar
    if gamma > 0:
        rho = rho_bar + gamma * direction
        rho = (rho + rho.conj().T) / 2
    return _AscentStep(rho, value, u_t, response, gamma)


def _solve_program(problem: cp.Problem) -> bool:
    for solver, options in SDP_SOLVERS:
        try:
            problem.solve(solver=solver, **options)
        except cp.SolverError as err:
            logger.warning("%s failed on the polish program: %s", solver, err)
            continue
        if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return True
        logger.warning("%s ended the polish program with status %s", solver, problem.status)
    return False


def _polish_contraction(prob: KswProblem) -> Optional[np.ndarray]:
    """Minimizer of the convex map U ↦ max_ρ f(ρ, U) over the unit ball.

    max_ρ Tr Mρ over the energy-constrained states is the least μ + λE with
    μI + λH ⪰ M and λ >= 0. Only U P_Ψ enters f, so U = X Q* for an
    orthonormal basis Q of the range of P_Ψ, and ||X|| <= 1 is the block
    condition [[I, X], [X*, I]] ⪰ 0.
    """
    w, v = scipy.linalg.eigh(prob.P_psi)
    basis = v[:, w > 0.5]
    k = basis.shape[1]
    if not k:
        return None
    d_A, d_E, p = prob.d_A, prob.d_E, prob.sp.p
    x = cp.Variable((d_E, k), complex=True)
    u = x @ basis.conj().T
    cross = sum(a.conj().T @ u @ b for a, b in zip(prob.V_phi.blocks(), prob.V_psi.blocks()))
    payoff = _base_matrix(prob) - cross - cross.H
    mu, lam = cp.Variable(), cp.Variable(nonneg=True)
    slack = cp.Variable((d_A, d_A), hermitian=True)
    ball = cp.Variable((d_E + k, d_E + k), hermitian=True)
    constraints = [
        slack == mu * np.eye(d_A) + lam * prob.hamiltonian.matrix - (1 - p) * payoff,
        slack >> 0,
        ball == cp.bmat([[np.eye(d_E), x], [x.H, np.eye(k)]]),
        ball >> 0,
    ]
    objective = cp.Minimize(mu + lam * prob.energy + p * cp.real(cp.trace(payoff @ prob.sp.sigma)))
    if not _solve_program(cp.Problem(objective, constraints)) or x.value is None:
        return None
    return _clip_to_ball(x.value @ basis.conj().T)


def _polish_state(prob: KswProblem) -> Optional[np.ndarray]:
    """Maximizer of the concave map ρ ↦ min_U f(ρ, U) = Tr G Θ(ρ) - 2 ||K(Θ(ρ))||_1.

    ||K||_1 is the least (Tr W_1 + Tr W_2) / 2 with [[W_1, K], [K*, W_2]] ⪰ 0.
    """
    d_A, d_E, p = prob.d_A, prob.d_E, prob.sp.p
    rho = cp.Variable((d_A, d_A), hermitian=True)
    tau = (1 - p) * rho + p * prob.sp.sigma
    cross = sum(b @ tau @ a.conj().T for a, b in zip(prob.V_phi.blocks(), prob.V_psi.blocks()))
    w1 = cp.Variable((d_E, d_E), hermitian=True)
    w2 = cp.Variable((d_E, d_E), hermitian=True)
    block = cp.Variable((2 * d_E, 2 * d_E), hermitian=True)
    constraints = [
        rho >> 0,
        cp.real(cp.trace(rho)) == 1,
        cp.real(cp.trace(prob.hamiltonian.matrix @ rho)) <= prob.energy,
        block == cp.bmat([[w1, cross], [cross.H, w2]]),
        block >> 0,
    ]
    objective = cp.Maximize(cp.real(cp.trace(_base_matrix(prob) @ tau) - cp.trace(w1) - cp.trace(w2)))
    if not _solve_program(cp.Problem(objective, constraints)) or rho.value is None:
        return None
    return repair_state(rho.value, prob.hamiltonian, prob.energy)


def _polish(prob: KswProblem) -> Tuple[List[np.ndarray], Optional[np.ndarray]]:
    """U candidates and a state from the semidefinite forms of both sides of the saddle."""
    contractions = []
    rho = _polish_state(prob)
    if rho is not None:
        contractions.append(u_step(prob, rho))
    u = _polish_contraction(prob)
    if u is not None:
        contractions.append(u)
    return contractions, rho


def _smoothed_gap(upper: float, lower: float) -> float:
    return float(np.sqrt(max(upper, 0.0)) - np.sqrt(max(lower, 0.0)))


def solve_saddle(
    prob: KswProblem,
    tol: float = None,
    max_iter: int = None,
    warm_start: Optional[SaddleCertificate] = None,
) -> SaddleCertificate:
    """Certified saddle point of the smoothed objective.

    Each iteration takes the best response U_t to the running state ρ̅ and
    moves ρ̅ toward the best response to U_t (``_ascent_step``). The running
    mean U̅ of the U_t is the averaged U iterate; U_t and U̅ are the upper
    candidates. The smoothed gap is
    sqrt(min over candidates of max_ρ f(ρ, U)) - sqrt(min_U f(ρ̅, U)).

    When the iterations end above tol, at max_iter or after STALL_WINDOW
    iterations without progress, both sides are solved as semidefinite
    programs and their solutions join the candidates.
    """
    tol = Config.TOL if tol is None else tol
    max_iter = Config.MAX_ITER if max_iter is None else max_iter
    if tol <= 0 or max_iter < 1:
        raise InvalidInputError(f"Need tol > 0 and max_iter >= 1, got {tol}, {max_iter}")

    rho_bar = interior_state(prob.hamiltonian, prob.energy)
    best_upper, best_u = np.inf, None
    if warm_start is not None:
        if warm_start.rho.shape == rho_bar.shape:
            rho_bar = _state(prob, warm_start.rho)
        u_warm = _clip_to_ball(_embed(warm_start.U, prob.d_E))
        best_upper, best_u = rho_step(prob, u_warm).value, u_warm
    lower = _inner_min(prob, rho_bar)
    u_bar = None
    gap = np.inf
    stall_gap, stall_at = np.inf, 0
    iteration = 0
    for iteration in range(1, max_iter + 1):
        step = _ascent_step(prob, rho_bar, lower)
        if step.response.value < best_upper:
            best_upper, best_u = step.response.value, step.u
        u_bar = step.u if u_bar is None else u_bar + (step.u - u_bar) / iteration
        averaged = rho_step(prob, u_bar).value
        if averaged < best_upper:
            best_upper, best_u = averaged, u_bar
        rho_bar, lower = step.rho, step.value
        gap = _smoothed_gap(best_upper, lower)
        logger.debug("iteration %d: step %.3e, smoothed gap %.3e", iteration, step.gamma, gap)
        if gap <= tol:
            break
        if gap < stall_gap - tol / 10:
            stall_gap, stall_at = gap, iteration
        elif iteration - stall_at >= STALL_WINDOW:
            logger.debug("smoothed gap stalled at %.3e after %d iterations", gap, iteration)
            break

    candidates = [best_u] + ([u_bar] if u_bar is not None else [])
    if gap > tol:
        polished, rho_sdp = _polish(prob)
        if rho_sdp is not None:
            value = _inner_min(prob, rho_sdp)
            if value > lower:
                rho_bar, lower = rho_sdp, value
        for u in polished:
            value = rho_step(prob, u).value
            if value < best_upper:
                best_upper, best_u = value, u
        candidates += polished
        gap = _smoothed_gap(best_upper, lower)
        logger.info("p=%.1e: smoothed gap %.3e after the semidefinite polish", prob.sp.p, gap)

    converged = bool(gap <= tol)
    rho = project_feasible(rho_bar, prob.hamiltonian, prob.energy)
    phi_op, psi_op = prob.operations()
    u_cert, upper = _best_partial_isometry(prob, candidates)
    lower_bound = ecbures_lower_bound(phi_op, psi_op, prob.hamiltonian, prob.energy, rho)
    logger.info(
        "p=%.1e: %d iterations, smoothed gap %.3e, bounds [%.8f, %.8f]",
        prob.sp.p, iteration, gap, lower_bound, upper,
    )
    return SaddleCertificate(
        U=u_cert,
        rho=rho,
        lower_bound=lower_bound,
        upper_bound=upper,
        gap=upper - lower_bound,
        p_trace=((prob.sp.p, upper - lower_bound),),
        iterations=iteration,
        converged=converged,
        smoothed_lower=float(np.sqrt(max(lower, 0.0))),
        smoothed_upper=float(np.sqrt(max(best_upper, 0.0))),
        membership=w_psi_residuals(prob, u_cert),
    )


def beta_n(prob: KswProblem, tol: float = None, max_iter: int = None) -> float:
    """Smoothed distance: the saddle value sqrt(f) at the smoothed certificate pair."""
    cert = solve_saddle(prob, tol, max_iter)
    if not cert.converged:
        logger.warning(
            "smoothed saddle open by %.3e; returning its upper value", cert.smoothed_upper - cert.smoothed_lower
        )
    return cert.smoothed_upper


def _embed(u: np.ndarray, d_E: int) -> np.ndarray:
    """U ⊕ 0 on an environment of dimension d_E."""
    m = linops.as_matrix(u)
    if m.shape[0] > d_E:
        raise InvalidInputError(f"Cannot embed a {m.shape[0]}-level environment operator into {d_E} levels")
    out = np.zeros((d_E, d_E), dtype=np.complex128)
    out[: m.shape[0], : m.shape[1]] = m
    return out


def needs_smoothing(phi: QuantumOperation, sigma: Optional[np.ndarray] = None) -> bool:
    """True when Φ(σ) is rank deficient for the nondegenerate reference state σ."""
    if sigma is None:
        sigma = quantum_core.reference_state(phi.d_in)
    return linops.rank(quantum_core.apply(phi, sigma)) < phi.d_out


def _stage_record(prob: KswProblem, cert: SaddleCertificate) -> StageRecord:
    x = prob.difference(cert.U)
    enorm_sq = enorm(x, prob.hamiltonian, prob.energy) ** 2
    return StageRecord(
        p=prob.sp.p,
        gap=cert.gap,
        beta_n=cert.smoothed_upper,
        enorm_smoothed_sq=enorm_smoothed(x, prob.hamiltonian, prob.energy, prob.sp) ** 2,
        enorm_sq=enorm_sq,
        operator_norm_sq=linops.operator_norm(x) ** 2,
        iterations=cert.iterations,
        converged=cert.converged,
    )


def solve_with_continuation(
    phi: QuantumOperation,
    psi: QuantumOperation,
    hamiltonian: Hamiltonian,
    energy,
    schedule: Optional[Sequence[float]] = None,
    pad: Optional[int] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    warm_start: Optional[SaddleCertificate] = None,
) -> SaddleCertificate:
    """Certified sandwich for β_E(Φ, Ψ) through a decreasing smoothing schedule.

    Each stage solves the smoothed saddle problem (with Φ replaced by its
    depolarized version when Φ(σ) is rank deficient) warm-started from the
    previous stage, followed by a p = 0 stage on the original operations. The
    schedule is extended by factors of ten down to ``Config.MIN_P`` while the
    unsmoothed gap exceeds tol. Final bounds are the best over all stages,
    evaluated at p = 0 for Φ and Ψ themselves.
    """
    schedule = Config.schedule() if schedule is None else Config.check_schedule(schedule)
    pad = Config.PAD if pad is None else pad
    tol = Config.TOL if tol is None else tol
    max_iter = Config.MAX_ITER if max_iter is None else max_iter
    e = energy_value(hamiltonian, energy)
    if phi.d_in != hamiltonian.dim:
        raise InvalidInputError(f"Hamiltonian on {hamiltonian.dim} levels for an input of {phi.d_in}")
    if pad < 0:
        raise InvalidInputError(f"Padding must be non-negative, got {pad}")

    sigma_a = quantum_core.reference_state(phi.d_in)
    smooth_phi = needs_smoothing(phi, sigma_a)
    if smooth_phi:
        logger.info("Φ(σ) is rank deficient; depolarizing Φ along the schedule")
    sigma_b = quantum_core.reference_state(phi.d_out)
    extra = phi.d_in * phi.d_out if smooth_phi else 0
    d_E = max(phi.kraus_count + extra, psi.kraus_count, 1) + pad

    def build(p: float, op: QuantumOperation) -> KswProblem:
        base = max(op.kraus_count, psi.kraus_count, 1)
        return KswProblem.build(op, psi, hamiltonian, e, p=p, pad=d_E - base, sigma=sigma_a)

    final_prob = build(0.0, phi)
    u_candidates: List[np.ndarray] = []
    rho_candidates: List[np.ndarray] = []
    if warm_start is not None:
        u_candidates.append(_embed(warm_start.U, d_E))
        rho_candidates.append(warm_start.rho)
    stages: List[StageRecord] = []
    iterations = 0
    previous = warm_start

    def run(p: float) -> SaddleCertificate:
        nonlocal iterations
        op = phi
        if smooth_phi and p > 0:
            op = quantum_core.depolarize_operation(phi, SmoothingParams(p, sigma_b))
        prob = final_prob if p == 0 else build(p, op)
        cert = solve_saddle(prob, tol, max_iter, warm_start=previous)
        stages.append(_stage_record(prob, cert))
        iterations += cert.iterations
        u_candidates.append(cert.U)
        rho_candidates.append(cert.rho)
        return cert

    def evaluate():
        upper, u_best = np.inf, None
        for u in u_candidates:
            support, idempotence = w_psi_residuals(final_prob, u)
            if max(support, idempotence) > Config.MEMBERSHIP_TOL:
                continue
            value = ksw_upper_bound(final_prob, u)
            if value < upper:
                upper, u_best = value, u
        lower, rho_best = -np.inf, None
        for rho in rho_candidates:
            value = ecbures_lower_bound(phi, psi, hamiltonian, e, rho)
            if value > lower:
                lower, rho_best = value, rho
        return upper, lower, u_best, rho_best

    for p in schedule:
        previous = run(p)
    previous = run(0.0)
    best = evaluate()
    p = schedule[-1] / 10
    while best[0] - best[1] > tol and p >= Config.MIN_P:
        logger.info("Unsmoothed gap %.3e above tolerance; refining at p=%.1e", best[0] - best[1], p)
        previous = run(p)
        previous = run(0.0)
        best = evaluate()
        p /= 10

    upper, lower, u_best, rho_best = best
    gap = upper - lower
    return SaddleCertificate(
        U=u_best,
        rho=rho_best,
        lower_bound=lower,
        upper_bound=upper,
        gap=gap,
        p_trace=tuple((s.p, s.gap) for s in stages),
        iterations=iterations,
        converged=bool(gap <= tol),
        smoothed_lower=previous.smoothed_lower,
        smoothed_upper=previous.smoothed_upper,
        stages=tuple(stages),
        membership=w_psi_residuals(final_prob, u_best),
    )


def padding_sweep(
    phi: QuantumOperation,
    psi: QuantumOperation,
    hamiltonian: Hamiltonian,
    energy,
    pads: Sequence[int],
    schedule: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> List[SaddleCertificate]:
    """Certificates for increasing environment padding, each warm-started from the last.

    The previous best U enters the larger environment as U ⊕ 0, which stays in
    W_Ψ, so upper bounds never increase with the padding.
    """
    pads = [int(x) for x in pads]
    if any(b < a for a, b in zip(pads, pads[1:])):
        raise InvalidInputError(f"Paddings must be non-decreasing: {pads}")
    certificates: List[SaddleCertificate] = []
    previous = None
    for pad in pads:
        previous = solve_with_continuation(
            phi, psi, hamiltonian, energy, schedule, pad, tol, max_iter, warm_start=previous
        )
        certificates.append(previous)
    return certificates


def ecbures_energy_profile(
    phi: QuantumOperation,
    psi: QuantumOperation,
    hamiltonian: Hamiltonian,
    energies: Sequence[float],
    **kwargs,
) -> pd.DataFrame:
    """Certified bounds on β_E for each energy, one row per energy."""
    rows = []
    for e in energies:
        cert = solve_with_continuation(phi, psi, hamiltonian, e, **kwargs)
        rows.append(
            {
                "energy": float(e),
                "lower_bound": cert.lower_bound,
                "upper_bound": cert.upper_bound,
                "gap": cert.gap,
                "converged": cert.converged,
            }
        )
    return pd.DataFrame(rows, columns=["energy", "lower_bound", "upper_bound", "gap", "converged"])


def bures_distance_operations(
    phi: QuantumOperation, psi: QuantumOperation, hamiltonian: Hamiltonian, **kwargs
) -> SaddleCertificate:
    """Unconstrained distance: the energy bound is placed above the spectrum of H."""
    return solve_with_continuation(phi, psi, hamiltonian, hamiltonian.eigenvalues[-1] + 1.0, **kwargs)


def _direct_restart(
    phi: QuantumOperation,
    psi: QuantumOperation,
    hamiltonian: Hamiltonian,
    e: float,
    seed: int,
    index: int,
) -> float:
    """One local ascent of β² = Tr Φ(ρ) + Tr Ψ(ρ) - 2 ||K(ρ)||_1 from a random start.

    SLSQP runs on ρ = ΩΩ* with the analytic gradient 2 A Ω, where A is the payoff
    matrix of the polar factor of K; conditional-gradient steps then refine the
    repaired state.
    """
    prob = KswProblem.build(phi, psi, hamiltonian, e)
    d = phi.d_in
    h = hamiltonian.matrix
    rng = substream(seed, index)

    def pack(m: np.ndarray) -> np.ndarray:
        return np.concatenate([m.real.ravel(), m.imag.ravel()])

    def unpack(x: np.ndarray) -> np.ndarray:
        return (x[: d * d] + 1j * x[d * d :]).reshape(d, d)

    def negative_value(x: np.ndarray) -> Tuple[float, np.ndarray]:
        omega = unpack(x)
        rho = omega @ omega.conj().T
        w, _ = linops.polar(_cross(prob, rho))
        a = _payoff_matrix(prob, w.conj().T)
        return -float(np.real(np.trace(a @ rho))), -pack(2 * a @ omega)

    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    start = repair_state(g @ g.conj().T, hamiltonian, e)
    result = scipy.optimize.minimize(
        negative_value,
        pack(linops.psd_sqrt(start).astype(np.complex128)),
        jac=True,
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": lambda x: float(x @ x) - 1.0, "jac": lambda x: 2 * x},
            {
                "type": "ineq",
                "fun": lambda x: e - float(np.real(np.trace(h @ unpack(x) @ unpack(x).conj().T))),
                "jac": lambda x: -pack(2 * h @ unpack(x)),
            },
        ],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    omega = unpack(result.x)
    rho = repair_state(omega @ omega.conj().T, hamiltonian, e)
    lower = _inner_min(prob, rho)
    if lower < _inner_min(prob, start):
        rho, lower = start, _inner_min(prob, start)
    for _ in range(DIRECT_REFINE_ITER):
        step = _ascent_step(prob, rho, lower)
        if step.gamma == 0 or step.value <= lower + 1e-15:
            break
        rho, lower = step.rho, step.value
    return ecbures_lower_bound(phi, psi, hamiltonian, e, project_feasible(rho, hamiltonian, e))


def direct_ecbures(
    phi: QuantumOperation,
    psi: QuantumOperation,
    hamiltonian: Hamiltonian,
    energy,
    restarts: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> float:
    """Multi-restart local ascent of β(Φ⊗id(ω), Ψ⊗id(ω)) over feasible pure ω on H_A ⊗ H_A.

    Every returned value is attained at a feasible state, so it is a lower bound on β_E.
    """
    restarts = Config.RESTARTS if restarts is None else restarts
    seed = Config.SEED if seed is None else seed
    n_jobs = Config.N_JOBS if n_jobs is None else n_jobs
    if restarts < 1:
        raise InvalidInputError(f"Need at least one restart, got {restarts}")
    if (phi.d_in, phi.d_out) != (psi.d_in, psi.d_out) or phi.d_in != hamiltonian.dim:
        raise InvalidInputError("Operations and Hamiltonian act on different spaces")
    e = energy_value(hamiltonian, energy)
    values = Parallel(n_jobs=n_jobs)(
        delayed(_direct_restart)(phi, psi, hamiltonian, e, seed, i) for i in range(restarts)
    )
    best = max(range(restarts), key=lambda i: (values[i], -i))
    logger.info("direct estimate %.10f from restart %d of %d", values[best], best, restarts)
    return float(values[best])
