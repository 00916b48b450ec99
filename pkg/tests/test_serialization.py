"""
Test the JSON schema for matrices, operations, Hamiltonians and certificates
"""
import json
import math

import numpy as np
import pytest

import ksw_solver
import serialization
from enorm import Hamiltonian
from errors import InvalidInputError
from instances import InstanceSpec, dephasing_channel, gen_random_operation, ginibre, identity_channel


def test_complex_values():
    assert serialization.complex_to_json(1 - 2j) == [1.0, -2.0]
    assert serialization.complex_from_json([0.5, 0.25]) == 0.5 + 0.25j
    assert serialization.complex_from_json(3) == 3 + 0j
    with pytest.raises(InvalidInputError):
        serialization.complex_from_json([1.0, 2.0, 3.0])


def test_matrix_round_trip_is_exact(rng):
    m = ginibre(rng, 3, 2)
    np.testing.assert_array_equal(serialization.matrix_from_json(serialization.matrix_to_json(m)), m)


def test_matrix_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        serialization.matrix_from_json([[[float("nan"), 0.0]]])


def test_operation_file_is_byte_stable(tmp_path):
    op = gen_random_operation(InstanceSpec("random-operation", 2, 3, 2, 40))
    path = tmp_path / "op.json"
    serialization.write_json(path, serialization.operation_to_dict(op))
    loaded = serialization.load_operation(path)
    for a, b in zip(op.kraus, loaded.kraus):
        np.testing.assert_array_equal(a, b)
    assert serialization.dumps(serialization.operation_to_dict(loaded)) == path.read_text(encoding="utf-8")


def test_operation_from_dict_errors():
    with pytest.raises(InvalidInputError):
        serialization.operation_from_dict({"kind": "choi"})
    with pytest.raises(InvalidInputError):
        serialization.operation_from_dict({"kind": "kraus", "d_in": 2})


def test_hamiltonian_without_basis_is_diagonal(tmp_path):
    path = tmp_path / "h.json"
    path.write_text(json.dumps({"eigenvalues": [1.0, 0.0]}), encoding="utf-8")
    ham = serialization.load_hamiltonian(path)
    np.testing.assert_allclose(ham.matrix, np.diag([1.0, 0.0]))
    again = serialization.hamiltonian_from_dict(serialization.hamiltonian_to_dict(ham))
    np.testing.assert_array_equal(again.eigenvalues, [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        serialization.hamiltonian_from_dict({"basis": None})


def test_dumps_rejects_nan():
    with pytest.raises(InvalidInputError):
        serialization.dumps({"value": math.nan})


def test_read_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(InvalidInputError):
        serialization.read_json(bad)
    with pytest.raises(InvalidInputError):
        serialization.read_json(tmp_path / "missing.json")


def test_certificate_to_dict():
    ham = Hamiltonian.diagonal([0.0, 1.0])
    cert = ksw_solver.solve_with_continuation(
        identity_channel(2), dephasing_channel(2), ham, 0.25, schedule=(0.1,), tol=1e-4
    )
    data = json.loads(serialization.dumps(serialization.certificate_to_dict(cert)))
    assert data["converged"] is True
    assert data["upper_bound"] == pytest.approx(1.0, abs=1e-4)
    assert len(data["stages"]) == len(data["p_trace"])
    assert max(data["membership"]) <= 1e-7
    assert np.asarray(data["U"]).shape == (cert.U.shape[0], cert.U.shape[1], 2)
