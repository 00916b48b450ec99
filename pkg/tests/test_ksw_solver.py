"""
Test the saddle-point solver and the certified sandwich on the energy-constrained Bures distance
"""
import math

import numpy as np
import pandas as pd
import pytest

import ksw_solver
import linops
from enorm import Hamiltonian
from errors import InvalidInputError
from instances import (
    InstanceSpec,
    dephasing_channel,
    gen_random_channel,
    haar_unitary,
    identity_channel,
    prepare_state_channel,
    random_contraction,
    random_density,
)
from ksw_solver import KswProblem
from linops import ContractionClass

QUBIT = Hamiltonian.diagonal([0.0, 1.0])
FAST = dict(schedule=(0.1, 0.01), tol=1e-4, max_iter=200)


def _random_pair(seed=3, pad=0, p=0.0, energy=0.5):
    phi = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, seed))
    psi = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, seed + 1))
    return KswProblem.build(phi, psi, QUBIT, energy, p=p, pad=pad)


def _feasible_states(rng, prob, count):
    states = []
    while len(states) < count:
        rho = random_density(rng, prob.d_A)
        if prob.hamiltonian.energy(rho) <= prob.energy:
            states.append(rho)
    return states


def test_problem_rejects_bad_projector():
    prob = _random_pair()
    with pytest.raises(InvalidInputError):
        KswProblem(prob.V_phi, prob.V_psi, QUBIT, 0.5, prob.sp, np.zeros((2, 2)))


def test_objective_for_equal_operations_is_zero(rng):
    channel = gen_random_channel(InstanceSpec("random-channel", 2, 3, 2, 9))
    prob = KswProblem.build(channel, channel, QUBIT, 0.4, p=0.1)
    for rho in _feasible_states(rng, prob, 5):
        assert ksw_solver.objective_fn(prob, rho, prob.P_psi) == pytest.approx(0.0, abs=1e-12)


def test_objective_with_zero_contraction_is_two(rng):
    prob = _random_pair(p=0.1)
    for rho in _feasible_states(rng, prob, 5):
        assert ksw_solver.objective_fn(prob, rho, np.zeros((2, 2))) == pytest.approx(2.0, abs=1e-12)


def test_objective_rejects_non_contraction(rng):
    prob = _random_pair()
    with pytest.raises(InvalidInputError):
        ksw_solver.objective_fn(prob, np.eye(2) / 2, 2 * np.eye(2))
    with pytest.raises(InvalidInputError):
        ksw_solver.objective_fn(prob, np.eye(3) / 3, np.eye(2))


def test_objective_matches_difference_operator(rng):
    prob = _random_pair(p=0.05)
    u = haar_unitary(rng, prob.d_E)
    rho = random_density(rng, 2)
    tau = 0.95 * rho + 0.05 * prob.sp.sigma
    d = prob.difference(u)
    oracle = np.real(np.trace(d @ tau @ d.conj().T))
    assert ksw_solver.objective_fn(prob, rho, u) == pytest.approx(oracle, abs=1e-10)


def test_objective_is_biaffine(rng):
    prob = _random_pair(p=0.1, pad=1)
    rho1, rho2 = random_density(rng, 2), random_density(rng, 2)
    u1, u2 = random_contraction(rng, prob.d_E), random_contraction(rng, prob.d_E)
    a = 0.3
    f = ksw_solver.objective_fn
    assert f(prob, a * rho1 + (1 - a) * rho2, u1) == pytest.approx(
        a * f(prob, rho1, u1) + (1 - a) * f(prob, rho2, u1), abs=1e-10
    )
    assert f(prob, rho1, a * u1 + (1 - a) * u2) == pytest.approx(
        a * f(prob, rho1, u1) + (1 - a) * f(prob, rho1, u2), abs=1e-10
    )


def test_rho_step_is_exact_best_response(rng):
    prob = _random_pair(p=0.1)
    u = random_contraction(rng, prob.d_E)
    opt = ksw_solver.rho_step(prob, u)
    assert opt.value == pytest.approx(ksw_solver.objective_fn(prob, opt.rho_star, u), abs=1e-9)
    assert prob.hamiltonian.energy(opt.rho_star) <= prob.energy + 1e-9
    for rho in _feasible_states(rng, prob, 200):
        assert ksw_solver.objective_fn(prob, rho, u) <= opt.value + 1e-9


def test_rho_step_with_zero_contraction():
    prob = _random_pair()
    assert ksw_solver.rho_step(prob, np.zeros((2, 2))).value == pytest.approx(2.0, abs=1e-9)


def test_u_step_is_exact_best_response(rng):
    prob = _random_pair(p=0.1, pad=1)
    rho = random_density(rng, 2)
    u = ksw_solver.u_step(prob, rho)
    best = ksw_solver.objective_fn(prob, rho, u)
    for _ in range(200):
        assert best <= ksw_solver.objective_fn(prob, rho, random_contraction(rng, prob.d_E)) + 1e-9


def test_u_step_for_equal_operations_reaches_zero(rng):
    channel = gen_random_channel(InstanceSpec("random-channel", 2, 2, 3, 4))
    prob = KswProblem.build(channel, channel, QUBIT, 0.5)
    rho = random_density(rng, 2)
    u = ksw_solver.u_step(prob, rho)
    support, _ = ksw_solver.w_psi_residuals(prob, u)
    assert support <= 1e-8
    assert ksw_solver.objective_fn(prob, rho, u) == pytest.approx(0.0, abs=1e-10)


def test_extract_partial_isometry_keeps_unitary(rng):
    u = haar_unitary(rng, 3)
    np.testing.assert_allclose(ksw_solver.extract_partial_isometry(u, np.eye(3)), u, atol=1e-12)


def test_extract_partial_isometry_removes_scaling(rng):
    p = np.diag([1.0, 1.0, 0.0])
    u = np.zeros((3, 3), dtype=complex)
    u[:2, :2] = haar_unitary(rng, 2)
    w = ksw_solver.extract_partial_isometry(0.9 * u, p)
    np.testing.assert_allclose(w, u, atol=1e-10)
    np.testing.assert_allclose(w.conj().T @ w, p, atol=1e-10)


def test_extract_partial_isometry_completes_missing_directions():
    p = np.diag([1.0, 0.0])
    w = ksw_solver.extract_partial_isometry(np.zeros((2, 2)), p)
    np.testing.assert_allclose(w.conj().T @ w, p, atol=1e-12)
    assert linops.classify_contraction(w) == ContractionClass.PARTIAL_ISOMETRY


def test_ksw_upper_bound_membership(rng):
    prob = _random_pair()
    with pytest.raises(InvalidInputError):
        ksw_solver.ksw_upper_bound(prob, 0.5 * np.eye(2))
    same = KswProblem.build(identity_channel(2), identity_channel(2), QUBIT, 0.3)
    assert ksw_solver.ksw_upper_bound(same, same.P_psi) == pytest.approx(0.0, abs=1e-12)


def test_lower_bound_for_phase_flip():
    e = 0.25
    rho = np.diag([1 - e, e])
    value = ksw_solver.ecbures_lower_bound(identity_channel(2), dephasing_channel(2), QUBIT, e, rho)
    assert value == pytest.approx(2 * math.sqrt(e), abs=1e-9)
    with pytest.raises(InvalidInputError):
        ksw_solver.ecbures_lower_bound(identity_channel(2), dephasing_channel(2), QUBIT, e, np.eye(2) / 2)


def test_sandwich_holds_for_any_member(rng):
    prob = _random_pair(pad=1)
    phi, psi = prob.operations()
    for _ in range(10):
        u = ksw_solver.extract_partial_isometry(haar_unitary(rng, prob.d_E), prob.P_psi)
        upper = ksw_solver.ksw_upper_bound(prob, u)
        rho = _feasible_states(rng, prob, 1)[0]
        assert ksw_solver.ecbures_lower_bound(phi, psi, QUBIT, prob.energy, rho) <= upper + 1e-8


def test_solve_saddle_equal_operations():
    channel = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, 21))
    prob = KswProblem.build(channel, channel, QUBIT, 0.5, pad=1)
    cert = ksw_solver.solve_saddle(prob, tol=1e-6)
    assert cert.converged
    assert cert.iterations == 1
    assert cert.upper_bound == pytest.approx(0.0, abs=1e-6)
    assert cert.lower_bound == pytest.approx(0.0, abs=1e-6)
    assert ksw_solver.beta_n(prob) == pytest.approx(0.0, abs=1e-6)


def test_solve_saddle_rejects_bad_tolerance():
    with pytest.raises(InvalidInputError):
        ksw_solver.solve_saddle(_random_pair(), tol=0.0)


def test_certificate_invariants_on_random_pair():
    prob = _random_pair(pad=2, p=0.01)
    cert = ksw_solver.solve_saddle(prob, tol=1e-4, max_iter=100)
    support, idempotence = ksw_solver.w_psi_residuals(prob, cert.U)
    assert max(support, idempotence) <= 1e-7
    assert QUBIT.energy(cert.rho) <= prob.energy + 1e-9
    assert cert.lower_bound <= cert.upper_bound + 1e-9
    assert cert.gap == pytest.approx(cert.upper_bound - cert.lower_bound)


def test_needs_smoothing():
    assert not ksw_solver.needs_smoothing(identity_channel(2))
    assert ksw_solver.needs_smoothing(prepare_state_channel(2, [1.0, 0.0]))


@pytest.mark.parametrize("energy", [0.04, 0.25])
def test_continuation_on_phase_flip(energy):
    cert = ksw_solver.solve_with_continuation(
        identity_channel(2), dephasing_channel(2), QUBIT, energy, **FAST
    )
    assert cert.converged
    assert cert.lower_bound == pytest.approx(2 * math.sqrt(energy), abs=1e-4)
    assert cert.upper_bound == pytest.approx(2 * math.sqrt(energy), abs=1e-4)
    assert [p for p, _ in cert.p_trace][:3] == [0.1, 0.01, 0.0]


def test_continuation_equal_operations_is_zero_at_every_stage():
    channel = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, 8))
    cert = ksw_solver.solve_with_continuation(channel, channel, QUBIT, 0.5, **FAST)
    assert cert.upper_bound == pytest.approx(0.0, abs=1e-6)
    for stage in cert.stages:
        assert stage.beta_n == pytest.approx(0.0, abs=1e-6)


def test_continuation_rejects_bad_schedule():
    with pytest.raises(InvalidInputError):
        ksw_solver.solve_with_continuation(
            identity_channel(2), dephasing_channel(2), QUBIT, 0.25, schedule=(0.01, 0.1)
        )


def test_orthogonal_preparations():
    zero, one = prepare_state_channel(2, [1.0, 0.0]), prepare_state_channel(2, [0.0, 1.0])
    cert = ksw_solver.bures_distance_operations(zero, one, QUBIT, **FAST)
    assert cert.lower_bound == pytest.approx(math.sqrt(2), abs=1e-3)
    assert cert.upper_bound == pytest.approx(math.sqrt(2), abs=1e-3)
    assert ksw_solver.direct_ecbures(zero, one, QUBIT, 0.3, restarts=2) == pytest.approx(math.sqrt(2), abs=1e-6)


def test_direct_estimate_on_phase_flip():
    value = ksw_solver.direct_ecbures(identity_channel(2), dephasing_channel(2), QUBIT, 0.25, restarts=8)
    assert value == pytest.approx(1.0, abs=1e-5)
    channel = identity_channel(2)
    assert ksw_solver.direct_ecbures(channel, channel, QUBIT, 0.25, restarts=2) == pytest.approx(0.0, abs=1e-6)


def test_direct_estimate_is_deterministic():
    prob = _random_pair()
    phi, psi = prob.operations()
    first = ksw_solver.direct_ecbures(phi, psi, QUBIT, 0.5, restarts=3, seed=5)
    assert ksw_solver.direct_ecbures(phi, psi, QUBIT, 0.5, restarts=3, seed=5) == first


def test_energy_profile_on_phase_flip():
    frame = ksw_solver.ecbures_energy_profile(
        identity_channel(2), dephasing_channel(2), QUBIT, [0.04, 0.16], **FAST
    )
    assert isinstance(frame, pd.DataFrame)
    assert list(frame.columns) == ["energy", "lower_bound", "upper_bound", "gap", "converged"]
    np.testing.assert_allclose(frame["upper_bound"], [0.4, 0.8], atol=1e-4)


def test_padding_sweep_is_monotone():
    prob = _random_pair(seed=13)
    phi, psi = prob.operations()
    certs = ksw_solver.padding_sweep(phi, psi, QUBIT, 0.5, [0, 1, 2], schedule=(0.1,), tol=1e-2, max_iter=50)
    uppers = [c.upper_bound for c in certs]
    assert all(b <= a + 1e-8 for a, b in zip(uppers, uppers[1:]))
    with pytest.raises(InvalidInputError):
        ksw_solver.padding_sweep(phi, psi, QUBIT, 0.5, [2, 1])


@pytest.mark.slow
def test_random_pair_closes():
    phi = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, 31))
    psi = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, 32))
    cert = ksw_solver.solve_with_continuation(phi, psi, QUBIT, 0.5, pad=2)
    assert cert.lower_bound <= cert.upper_bound + 1e-8
    assert cert.gap <= 1e-4
    assert ksw_solver.direct_ecbures(phi, psi, QUBIT, 0.5, restarts=4) <= cert.upper_bound + 1e-8


def test_lower_bound_vanishes_for_equal_random_channels():
    for seed in range(20):
        channel = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, 100 + seed))
        value = ksw_solver.ecbures_lower_bound(channel, channel, QUBIT, 0.5, np.diag([0.6, 0.4]))
        assert value == pytest.approx(0.0, abs=1e-7)


def test_solve_saddle_records_membership_of_certificate():
    prob = _random_pair(pad=1, p=0.01)
    cert = ksw_solver.solve_saddle(prob, tol=1e-4, max_iter=50)
    assert cert.membership == pytest.approx(ksw_solver.w_psi_residuals(prob, cert.U), abs=1e-15)
    assert max(cert.membership) <= 1e-7


def test_solve_saddle_closes_after_few_iterations():
    prob = _random_pair(seed=31, pad=2, p=0.01)
    cert = ksw_solver.solve_saddle(prob, tol=1e-5, max_iter=5)
    assert cert.smoothed_upper - cert.smoothed_lower <= 1e-5
    assert cert.converged


def test_beta_n_is_the_smoothed_saddle_value():
    prob = _random_pair(p=0.01, pad=1)
    cert = ksw_solver.solve_saddle(prob, tol=1e-5)
    value = ksw_solver.beta_n(prob, tol=1e-5)
    assert value == pytest.approx(cert.smoothed_upper, abs=1e-12)
    assert cert.smoothed_lower - 1e-9 <= value <= cert.smoothed_lower + 1e-5
    flip = KswProblem.build(identity_channel(2), dephasing_channel(2), QUBIT, 0.25)
    assert ksw_solver.beta_n(flip, tol=1e-6) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.slow
def test_direct_estimate_reaches_certified_lower_bound():
    phi = prepare_state_channel(2, [1.0, 0.0])
    psi = gen_random_channel(InstanceSpec("random-channel", 2, 2, 2, 1))
    cert = ksw_solver.solve_with_continuation(phi, psi, QUBIT, 0.4, pad=1, tol=1e-6)
    value = ksw_solver.direct_ecbures(phi, psi, QUBIT, 0.4, restarts=4)
    assert value >= cert.lower_bound - 1e-4
    assert value <= cert.upper_bound + 1e-8
