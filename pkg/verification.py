"""Acceptance checks for the library and the report they produce.

Every check compares one measured number against a bound in a declared
direction. Trials draw their randomness from Philox substreams keyed by
(seed, check, trial), so a report depends on the configuration only.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.optimize
from joblib import Parallel, delayed

import fidelity
import instances
import ksw_solver
import linops
import quantum_core
import serialization
from config import Config
from enorm import Hamiltonian, enorm
from errors import KswError
from instances import InstanceSpec, substream
from ksw_solver import SaddleCertificate

logger = logging.getLogger(__name__)

# Keys separating the random streams of the individual checks.
UHLMANN, ENORM, STRUCTURE, METRIC, SANDWICH, SANDWICH_LARGE, DEPHASING, OPERATIONS, SUPPORT, PADDING = range(10)


@dataclass(frozen=True)
class VerificationConfig:
    seed: int = Config.SEED
    dims: Tuple[int, int, int] = (2, 2, 2)
    trials: int = 30
    large_trials: int = 10
    large_dims: Tuple[int, int, int] = (3, 3, 2)
    uhlmann_pairs: int = 200
    enorm_instances: int = 6
    oracle_points: int = 100_000
    structure_triples: int = 100
    metric_pairs: int = 500
    dephasing_energies: Tuple[float, ...] = (0.04, 0.16, 0.25)
    brute_force_points: int = 1_000_000
    operation_pairs: int = 10
    support_operations: int = 50
    support_states: int = 100
    padding_seeds: int = 10
    pads: Tuple[int, ...] = (0, 1, 2, 4)
    tol: float = Config.TOL
    max_iter: int = Config.MAX_ITER
    pad: int = Config.PAD
    restarts: int = Config.RESTARTS
    schedule: Tuple[float, ...] = field(default_factory=Config.schedule)
    n_jobs: int = Config.N_JOBS


@dataclass(frozen=True)
class CheckRecord:
    name: str
    measured: Optional[float]
    bound: float
    tolerance: float
    direction: str = "le"
    detail: str = ""

    @property
    def status(self) -> str:
        if self.measured is None or not math.isfinite(self.measured):
            return "fail"
        if self.direction == "le":
            ok = self.measured <= self.bound + self.tolerance
        else:
            ok = self.measured >= self.bound - self.tolerance
        return "pass" if ok else "fail"

    def to_dict(self) -> Dict[str, Any]:
        measured = None if self.measured is None or not math.isfinite(self.measured) else float(self.measured)
        return {
            "name": self.name,
            "status": self.status,
            "measured": measured,
            "bound": float(self.bound),
            "tolerance": float(self.tolerance),
            "direction": self.direction,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class Report:
    checks: Tuple[CheckRecord, ...]
    seed: int
    config: Dict[str, Any]

    @property
    def summary(self) -> Dict[str, int]:
        passed = sum(c.status == "pass" for c in self.checks)
        return {"total": len(self.checks), "passed": passed, "failed": len(self.checks) - passed}

    @property
    def passed(self) -> bool:
        return self.summary["failed"] == 0

    def to_frame(self) -> pd.DataFrame:
        columns = ["name", "status", "measured", "bound", "tolerance", "direction"]
        return pd.DataFrame([c.to_dict() for c in self.checks], columns=columns + ["detail"])[columns]

    def to_text(self) -> str:
        s = self.summary
        lines = [
            f"Verification report (seed {self.seed}, {Config.PRNG_NAME})",
            self.to_frame().to_string(index=False, float_format=lambda x: f"{x:.3e}"),
            f"{s['passed']}/{s['total']} checks passed",
        ]
        return "\n".join(lines)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "prng": Config.PRNG_NAME,
            "config": self.config,
            "summary": self.summary,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return serialization.dumps(self.to_dict())


def _le(name: str, measured: Optional[float], bound: float, tolerance: float, detail: str = "") -> CheckRecord:
    return CheckRecord(name, measured, bound, tolerance, "le", detail)


def _ge(name: str, measured: Optional[float], bound: float, tolerance: float, detail: str = "") -> CheckRecord:
    return CheckRecord(name, measured, bound, tolerance, "ge", detail)


def _max(values: Sequence[float]) -> Optional[float]:
    return float(max(values)) if len(values) else None


def _child_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0])


def _purify_padded(rho: np.ndarray, d_R: int) -> np.ndarray:
    d = rho.shape[0]
    x = quantum_core.purify(rho).reshape(d, -1)
    return np.pad(x, ((0, 0), (0, d_R - x.shape[1]))).reshape(-1)


def check_uhlmann(cfg: VerificationConfig) -> List[CheckRecord]:
    """Fidelity equals the optimal purification overlap; full-rank pairs satisfy the support condition."""
    deviations, residuals = [], []
    for t in range(cfg.uhlmann_pairs):
        rng = substream(cfg.seed, UHLMANN, t)
        d = int(rng.integers(2, 7))
        full_rank = t % 2 == 0
        rho = instances.random_density(rng, d, None if full_rank else int(rng.integers(1, d + 1)))
        sigma = instances.random_density(rng, d)
        result = fidelity.align_purifications(_purify_padded(rho, d), _purify_padded(sigma, d), (d, d))
        deviations.append(abs(fidelity.fidelity(rho, sigma) - result.fidelity_value))
        if full_rank:
            residuals.append(result.u_cond_residual)
    return [
        _le("uhlmann.fidelity_overlap", _max(deviations), 0.0, 1e-9),
        _le("uhlmann.support_condition", _max(residuals), 0.0, 1e-8),
    ]


def _sphere_oracle(x: np.ndarray, h: Hamiltonian, e: float, rng: np.random.Generator, points: int) -> float:
    """Best sampled feasible ||X phi||^2, polished by SLSQP from the best sample."""
    d = x.shape[1]
    gram = x.conj().T @ x
    hm = h.matrix
    best_value, best_v = -np.inf, None
    for start in range(0, points, 20_000):
        n = min(20_000, points - start)
        v = instances.ginibre(rng, n, d)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        energies = np.einsum("ni,ij,nj->n", v.conj(), hm, v).real
        values = np.einsum("ni,ij,nj->n", v.conj(), gram, v).real
        values[energies > e] = -np.inf
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_v = values[i], v[i]
    if best_v is None:
        return 0.0

    def unpack(z):
        return z[:d] + 1j * z[d:]

    def quad(a, z):
        v = unpack(z)
        return float(np.real(np.vdot(v, a @ v)))

    result = scipy.optimize.minimize(
        lambda z: -quad(gram, z),
        np.concatenate([best_v.real, best_v.imag]),
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": lambda z: float(z @ z) - 1.0},
            {"type": "ineq", "fun": lambda z: e - quad(hm, z)},
        ],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    v = unpack(result.x)
    v = v / np.linalg.norm(v)
    if float(np.real(np.vdot(v, hm @ v))) <= e + 1e-12:
        best_value = max(best_value, float(np.real(np.vdot(v, gram @ v))))
    return float(np.sqrt(max(best_value, 0.0)))


def check_enorm(cfg: VerificationConfig) -> List[CheckRecord]:
    h = Hamiltonian.diagonal([0.0, 1.0])
    x = np.diag([0.0, 1.0])
    analytic = [abs(enorm(x, h, e) - math.sqrt(min(e, 1.0))) for e in (0.1, 0.25, 0.5, 2.0)]
    above, below = [], []
    for t in range(cfg.enorm_instances):
        rng = substream(cfg.seed, ENORM, t)
        d = 2 + t % 2
        ham = instances.gen_hamiltonian(d, "linear", seed=_child_seed(cfg.seed, ENORM, t), random_basis=True)
        x = instances.ginibre(rng, d, d)
        e = ham.E0 + rng.uniform(0.2, 0.8) * (ham.eigenvalues[-1] - ham.E0)
        library = enorm(x, ham, e)
        oracle = _sphere_oracle(x, ham, e, rng, cfg.oracle_points)
        above.append(oracle - library)
        below.append(library - oracle)
    return [
        _le("enorm.analytic_two_level", _max(analytic), 0.0, 1e-9),
        _le("enorm.oracle_not_above", _max(above), 0.0, 1e-9),
        _le("enorm.oracle_gap", _max(below), 0.0, 1e-5),
    ]


def check_enorm_structure(cfg: VerificationConfig) -> List[CheckRecord]:
    monotone, concave, ratio = [], [], []
    for t in range(cfg.structure_triples):
        rng = substream(cfg.seed, STRUCTURE, t)
        d = int(rng.integers(2, 5))
        ham = instances.gen_hamiltonian(d, "linear", seed=_child_seed(cfg.seed, STRUCTURE, t), random_basis=True)
        x = instances.ginibre(rng, d, d)
        e1, e2 = np.sort(ham.E0 + rng.uniform(0.05, 1.2, 2) * (ham.eigenvalues[-1] - ham.E0))
        n1, n2 = enorm(x, ham, e1), enorm(x, ham, e2)
        nm = enorm(x, ham, (e1 + e2) / 2)
        monotone.append(n1 - n2)
        concave.append((n1**2 + n2**2) / 2 - nm**2)
        ratio.append(n2 - math.sqrt((e2 - ham.E0) / (e1 - ham.E0)) * n1)
    return [
        _le("enorm.monotone_in_energy", _max(monotone), 0.0, 1e-9),
        _le("enorm.square_midpoint_concave", _max(concave), 0.0, 1e-9),
        _le("enorm.energy_ratio_bound", _max(ratio), 0.0, 1e-9),
    ]


def check_metric(cfg: VerificationConfig) -> List[CheckRecord]:
    lower, upper = [], []
    for t in range(cfg.metric_pairs):
        rng = substream(cfg.seed, METRIC, t)
        d = int(rng.integers(2, 6))
        traces = rng.uniform(0.1, 1.0, 2) if t % 2 else (1.0, 1.0)
        rho = instances.random_density(rng, d, int(rng.integers(1, d + 1)), traces[0])
        sigma = instances.random_density(rng, d, int(rng.integers(1, d + 1)), traces[1])
        beta = fidelity.bures_distance(rho, sigma)
        distance = linops.trace_norm(rho - sigma)
        lower.append(distance / (math.sqrt(traces[0]) + math.sqrt(traces[1])) - beta)
        upper.append(beta - math.sqrt(distance))
    return [
        _le("bures.trace_distance_lower", _max(lower), 0.0, 1e-9),
        _le("bures.trace_distance_upper", _max(upper), 0.0, 1e-9),
    ]


def _energy_for(ham: Hamiltonian, rng: np.random.Generator) -> float:
    return float(ham.E0 + rng.uniform(0.2, 0.8) * (ham.eigenvalues[-1] - ham.E0))


def _pair_trial(cfg: VerificationConfig, key: int, t: int, dims: Tuple[int, int, int], kind: str):
    """Solve one random pair; returns (certificate, error message)."""
    d_A, d_B, k = dims
    make = instances.gen_random_operation if kind == "random-operation" else instances.gen_random_channel
    try:
        phi = make(InstanceSpec(kind, d_A, d_B, k, _child_seed(cfg.seed, key, t, 0)))
        psi = make(InstanceSpec(kind, d_A, d_B, k, _child_seed(cfg.seed, key, t, 1)))
        ham = instances.gen_hamiltonian(d_A, "linear")
        e = _energy_for(ham, substream(cfg.seed, key, t))
        cert = ksw_solver.solve_with_continuation(
            phi, psi, ham, e, cfg.schedule, cfg.pad, cfg.tol, cfg.max_iter
        )
        return cert, None
    except KswError as err:
        logger.warning("trial %d of check %d failed: %s", t, key, err)
        return None, str(err)


def _run_pairs(cfg: VerificationConfig, key: int, count: int, dims, kind: str):
    return Parallel(n_jobs=cfg.n_jobs)(
        delayed(_pair_trial)(cfg, key, t, tuple(dims), kind) for t in range(count)
    )


def _sandwich_records(prefix: str, results, required: int, tol: float) -> List[CheckRecord]:
    certs = [c for c, _ in results if c is not None]
    errors = [msg for _, msg in results if msg is not None]
    closed = sum(c.gap <= tol for c in certs)
    return [
        _ge(f"{prefix}.closed", float(closed), float(required), 0.0, f"{len(errors)} numerical failures"),
        _le(f"{prefix}.validity", _max([c.lower_bound - c.upper_bound for c in certs]), 0.0, 1e-8),
    ]


def _smoothing_records(certs: Sequence[SaddleCertificate]) -> List[CheckRecord]:
    norm_excess, beta_excess = [], []
    for cert in certs:
        for s in cert.stages:
            norm_excess.append(abs(s.enorm_smoothed_sq - s.enorm_sq) - s.p * s.operator_norm_sq)
            if s.converged:
                beta_excess.append(abs(s.beta_n - cert.upper_bound) - 2 * (2 * s.p) ** 0.25 - max(cert.gap, 0.0))
    return [
        _le("smoothing.enorm_shift", _max(norm_excess), 0.0, 1e-9),
        _le("smoothing.beta_shift", _max(beta_excess), 0.0, 1e-9),
    ]


def _brute_force_oracle(phi, psi, ham: Hamiltonian, e: float, rng: np.random.Generator, points: int) -> float:
    """max over sampled feasible pure inputs of β, evaluated in batches through the Uhlmann overlap."""
    v_phi, v_psi = quantum_core.common_stinespring(phi, psi)
    d_A, d_B, d_E = v_phi.d_A, v_phi.d_B, v_phi.d_E
    tr_ops = v_phi.V.conj().T @ v_phi.V + v_psi.V.conj().T @ v_psi.V
    best = 0.0
    for start in range(0, points, 100_000):
        n = min(100_000, points - start)
        w = instances.ginibre(rng, n, d_A * d_A).reshape(n, d_A, d_A)
        w /= np.linalg.norm(w.reshape(n, -1), axis=1)[:, None, None]
        rho = np.einsum("nar,nbr->nab", w, w.conj())
        rho = rho[np.einsum("ab,nba->n", ham.matrix, rho).real <= e]
        cross = np.einsum("ia,nab,jb->nij", v_psi.V, rho, v_phi.V.conj())
        k = np.einsum("nbibj->nij", cross.reshape(-1, d_B, d_E, d_B, d_E))
        traces = np.einsum("ab,nba->n", tr_ops, rho).real
        beta_sq = traces - 2 * np.linalg.svd(k, compute_uv=False).sum(axis=1)
        if beta_sq.size:
            best = max(best, float(np.sqrt(max(beta_sq.max(), 0.0))))
    return best


def check_dephasing(cfg: VerificationConfig) -> Tuple[List[CheckRecord], List[SaddleCertificate]]:
    """β_E(id, Z) = 2 sqrt(E) on a qubit with H = diag(0, 1)."""
    phi, psi = instances.identity_channel(2), instances.dephasing_channel(2, 1.0)
    ham = Hamiltonian.diagonal([0.0, 1.0])
    ksw_dev, direct_dev, oracle_dev, certs = [], [], [], []
    for i, e in enumerate(cfg.dephasing_energies):
        exact = 2 * math.sqrt(e)
        cert = ksw_solver.solve_with_continuation(phi, psi, ham, e, cfg.schedule, cfg.pad, cfg.tol, cfg.max_iter)
        certs.append(cert)
        ksw_dev.append(max(abs(cert.upper_bound - exact), abs(cert.lower_bound - exact)))
        direct = ksw_solver.direct_ecbures(
            phi, psi, ham, e, max(cfg.restarts, 8), _child_seed(cfg.seed, DEPHASING, i), cfg.n_jobs
        )
        direct_dev.append(abs(direct - exact))
        oracle = _brute_force_oracle(phi, psi, ham, e, substream(cfg.seed, DEPHASING, i), cfg.brute_force_points)
        oracle_dev.append(abs(oracle - exact))
    energies = list(cfg.dephasing_energies)
    profile = ksw_solver.ecbures_energy_profile(
        phi, psi, ham, energies, schedule=cfg.schedule, pad=cfg.pad, tol=cfg.tol, max_iter=cfg.max_iter
    ).sort_values("energy")
    upper = profile["upper_bound"].to_numpy()
    e_sorted = profile["energy"].to_numpy()
    monotone = [a - b for a, b in zip(upper, upper[1:])]
    ratio = [
        b - math.sqrt((e2 - ham.E0) / (e1 - ham.E0)) * a
        for a, b, e1, e2 in zip(upper, upper[1:], e_sorted, e_sorted[1:])
    ]
    records = [
        _le("dephasing.ksw", _max(ksw_dev), 0.0, 1e-4),
        _le("dephasing.direct", _max(direct_dev), 0.0, 1e-4),
        _le("dephasing.brute_force", _max(oracle_dev), 0.0, 1e-3),
        _le("dephasing.monotone_in_energy", _max(monotone) if monotone else 0.0, 0.0, cfg.tol),
        _le("dephasing.energy_ratio_bound", _max(ratio) if ratio else 0.0, 0.0, cfg.tol),
    ]
    return records, certs


def check_operations(cfg: VerificationConfig, results) -> List[CheckRecord]:
    certs = [c for c, _ in results if c is not None]
    failures = len(results) - len(certs)
    gaps = [c.gap for c in certs]
    residuals, non_isometries = [], 0
    for c in certs:
        gram = c.U.conj().T @ c.U
        residuals.append(float(np.max(np.abs(gram @ gram - gram))))
        cls = linops.classify_contraction(c.U, tol=Config.MEMBERSHIP_TOL)
        if cls not in (linops.ContractionClass.PARTIAL_ISOMETRY, linops.ContractionClass.ISOMETRY,
                       linops.ContractionClass.UNITARY):
            non_isometries += 1
    return [
        _le("operations.gap", _max(gaps) if not failures else None, 0.0, 1e-3),
        _le("operations.partial_isometry", _max(residuals), 0.0, 1e-7, f"{non_isometries} not partial isometries"),
        _le("operations.w_psi_support", _max([c.membership[0] for c in certs]), 0.0, 1e-7),
        _le("operations.validity", _max([c.lower_bound - c.upper_bound for c in certs]), 0.0, 1e-8),
    ]


def check_support(cfg: VerificationConfig) -> List[CheckRecord]:
    """Outputs of every state lie in the support of the output of a nondegenerate state."""
    residuals = []
    for t in range(cfg.support_operations):
        rng = substream(cfg.seed, SUPPORT, t)
        d_A, d_B = int(rng.integers(2, 4)), int(rng.integers(2, 6))
        k = int(rng.integers(1, 3))
        k = max(k, -(-d_A // d_B))
        op = instances.gen_random_operation(InstanceSpec("random-operation", d_A, d_B, k, _child_seed(cfg.seed, SUPPORT, t)))
        sigma = instances.random_density(rng, d_A)
        complement = np.eye(d_B) - quantum_core.operation_support_subspace(op, sigma)
        for _ in range(cfg.support_states):
            rho = instances.random_density(rng, d_A, int(rng.integers(1, d_A + 1)))
            residuals.append(float(np.max(np.abs(complement @ quantum_core.apply(op, rho)))))
    return [_le("support.containment", _max(residuals), 0.0, 1e-8)]


def _padding_trial(cfg: VerificationConfig, t: int):
    d_A, d_B, k = cfg.dims
    try:
        phi = instances.gen_random_channel(InstanceSpec("random-channel", d_A, d_B, k, _child_seed(cfg.seed, PADDING, t, 0)))
        psi = instances.gen_random_channel(InstanceSpec("random-channel", d_A, d_B, k, _child_seed(cfg.seed, PADDING, t, 1)))
        ham = instances.gen_hamiltonian(d_A, "linear")
        e = _energy_for(ham, substream(cfg.seed, PADDING, t))
        return ksw_solver.padding_sweep(phi, psi, ham, e, cfg.pads, cfg.schedule, cfg.tol, cfg.max_iter), None
    except KswError as err:
        logger.warning("padding trial %d failed: %s", t, err)
        return None, str(err)


def check_padding(cfg: VerificationConfig) -> List[CheckRecord]:
    results = Parallel(n_jobs=cfg.n_jobs)(delayed(_padding_trial)(cfg, t) for t in range(cfg.padding_seeds))
    sweeps = [s for s, _ in results if s is not None]
    failures = len(results) - len(sweeps)
    increases, gap_growth = [], []
    for sweep in sweeps:
        uppers = [c.upper_bound for c in sweep]
        increases.extend(b - a for a, b in zip(uppers, uppers[1:]))
        gap_growth.append(sweep[-1].gap - sweep[0].gap)
    return [
        _le("padding.upper_non_increasing", _max(increases) if not failures else None, 0.0, 1e-8),
        _le("padding.gap_non_increasing", _max(gap_growth) if not failures else None, 0.0, 1e-8),
    ]


def _guarded(name: str, check, *args) -> List[CheckRecord]:
    try:
        return check(*args)
    except KswError as err:
        logger.error("check %s failed with %s", name, err)
        return [CheckRecord(name, None, 0.0, 0.0, "le", str(err))]


def run_verification_suite(cfg: Optional[VerificationConfig] = None) -> Report:
    """Run every acceptance check and collect the records."""
    cfg = cfg or VerificationConfig()
    logger.info("Running verification suite with seed %d", cfg.seed)
    records: List[CheckRecord] = []
    records += _guarded("uhlmann", check_uhlmann, cfg)
    records += _guarded("enorm", check_enorm, cfg)
    records += _guarded("enorm.structure", check_enorm_structure, cfg)
    records += _guarded("bures", check_metric, cfg)

    main = _run_pairs(cfg, SANDWICH, cfg.trials, cfg.dims, "random-channel")
    large = _run_pairs(cfg, SANDWICH_LARGE, cfg.large_trials, cfg.large_dims, "random-channel")
    records += _sandwich_records("sandwich", main, cfg.trials - cfg.trials // 15, cfg.tol)
    records += _sandwich_records("sandwich.large", large, cfg.large_trials - cfg.large_trials // 10, cfg.tol)

    dephasing_certs: List[SaddleCertificate] = []
    try:
        dephasing_records, dephasing_certs = check_dephasing(cfg)
        records += dephasing_records
    except KswError as err:
        logger.error("dephasing benchmark failed with %s", err)
        records.append(CheckRecord("dephasing", None, 0.0, 0.0, "le", str(err)))

    operations = _run_pairs(cfg, OPERATIONS, cfg.operation_pairs, cfg.dims, "random-operation")
    records += check_operations(cfg, operations)

    traces = [c for c, _ in main + large + operations if c is not None] + dephasing_certs
    records += _smoothing_records(traces)
    records += _guarded("support", check_support, cfg)
    records += _guarded("padding", check_padding, cfg)

    config = asdict(cfg)
    config = {k: list(v) if isinstance(v, tuple) else v for k, v in config.items()}
    report = Report(tuple(records), cfg.seed, config)
    logger.info("Verification: %d/%d checks passed", report.summary["passed"], report.summary["total"])
    return report
