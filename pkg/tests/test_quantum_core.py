"""
Test quantum operations, Stinespring operators and smoothing maps
"""
import numpy as np
import pytest

import linops
import quantum_core
from errors import InvalidInputError
from instances import (
    InstanceSpec,
    gen_random_channel,
    gen_random_operation,
    prepare_state_channel,
    random_density,
)
from quantum_core import QuantumOperation, SmoothingParams


def _channel(seed=7, d_A=2, d_B=3, k=2):
    return gen_random_channel(InstanceSpec("random-channel", d_A, d_B, k, seed))


def test_trace_increasing_family_is_rejected():
    with pytest.raises(InvalidInputError):
        QuantumOperation.from_kraus([np.eye(2), np.eye(2)])


def test_kraus_shape_is_checked():
    with pytest.raises(InvalidInputError):
        QuantumOperation(2, 2, (np.eye(3),))


def test_channel_flag():
    assert _channel().is_channel
    assert not QuantumOperation.from_kraus([0.5 * np.eye(2)]).is_channel


def test_stinespring_round_trip_and_action(rng):
    op = _channel()
    vs = quantum_core.stinespring_from_kraus(op)
    assert (vs.d_A, vs.d_B, vs.d_E) == (2, 3, 2)
    back = quantum_core.kraus_from_stinespring(vs)
    for a, b in zip(op.kraus, back.kraus):
        np.testing.assert_allclose(a, b, atol=1e-15)
    rho = random_density(rng, 2)
    np.testing.assert_allclose(vs.apply(rho), quantum_core.apply(op, rho), atol=1e-12)
    np.testing.assert_allclose(vs.V.conj().T @ vs.V, np.eye(2), atol=1e-12)


def test_zero_stinespring_gives_zero_operation(rng):
    vs = quantum_core.StinespringOperator(2, 2, 1, np.zeros((2, 2)))
    out = quantum_core.apply(quantum_core.kraus_from_stinespring(vs), random_density(rng, 2))
    np.testing.assert_allclose(out, 0.0)


def test_common_stinespring_pads_environment():
    phi = _channel(seed=1, k=1)
    psi = _channel(seed=2, k=3)
    v_phi, v_psi = quantum_core.common_stinespring(phi, psi, pad=2)
    assert v_phi.d_E == v_psi.d_E == 5
    np.testing.assert_allclose(v_phi.blocks()[:, 1:, :], 0.0)
    with pytest.raises(InvalidInputError):
        quantum_core.common_stinespring(phi, _channel(d_A=3, d_B=3, k=1), 0)


def test_complementary_preserves_trace(rng):
    op = gen_random_operation(InstanceSpec("random-operation", 3, 2, 2, 11))
    vs = quantum_core.stinespring_from_kraus(op)
    rho = random_density(rng, 3)
    comp = quantum_core.complementary(vs)
    assert np.trace(quantum_core.apply(comp, rho)).real == pytest.approx(
        np.trace(quantum_core.apply(op, rho)).real, abs=1e-12
    )


def test_smoothing_params_validation():
    with pytest.raises(InvalidInputError):
        SmoothingParams(1.5, np.eye(2) / 2)
    with pytest.raises(InvalidInputError):
        SmoothingParams(0.1, np.diag([1.0, 0.0]))


def test_smooth_state_mixes(rng):
    sp = SmoothingParams(0.25, quantum_core.reference_state(3))
    rho = random_density(rng, 3)
    np.testing.assert_allclose(quantum_core.smooth_state(rho, sp), 0.75 * rho + 0.25 * sp.sigma)


@pytest.mark.parametrize("p", [0.0, 0.1, 1.0])
def test_depolarize_operation_action(rng, p):
    op = _channel()
    sp = SmoothingParams(p, quantum_core.reference_state(3))
    smoothed = quantum_core.depolarize_operation(op, sp)
    for _ in range(5):
        rho = random_density(rng, 2, 1)
        out = quantum_core.apply(smoothed, rho)
        np.testing.assert_allclose(out, (1 - p) * quantum_core.apply(op, rho) + p * sp.sigma, atol=1e-12)
        assert np.linalg.eigvalsh(out).min() >= p * np.linalg.eigvalsh(sp.sigma).min() - 1e-10


def test_operation_support_contains_all_outputs(rng):
    op = _channel(seed=5, d_A=2, d_B=4, k=1)
    proj = quantum_core.operation_support_subspace(op, random_density(rng, 2))
    assert linops.rank(proj) == 2
    for _ in range(20):
        out = quantum_core.apply(op, random_density(rng, 2, 1))
        assert np.max(np.abs((np.eye(4) - proj) @ out)) <= 1e-8


def test_environment_support_of_prepare_channel():
    op = prepare_state_channel(2, [1.0, 0.0])
    vs = quantum_core.stinespring_from_kraus(op)
    proj = quantum_core.environment_support_projector(vs, quantum_core.reference_state(2))
    np.testing.assert_allclose(proj, np.eye(2), atol=1e-12)


def test_purify_reproduces_state(rng):
    rho = random_density(rng, 4, 2)
    omega = quantum_core.purify(rho)
    assert omega.size == 8
    np.testing.assert_allclose(
        linops.partial_trace(np.outer(omega, omega.conj()), (4, 2), trace_out=1), rho, atol=1e-12
    )
