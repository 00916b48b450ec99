"""JSON schema for matrices, operations, Hamiltonians and certificates.

Complex scalars are [re, im] pairs and matrices are row-major nested lists of
them. Floats are written with Python's shortest round-trip repr.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

import linops
from enorm import Hamiltonian
from errors import InvalidInputError
from quantum_core import QuantumOperation

logger = logging.getLogger(__name__)


def complex_to_json(z) -> List[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def complex_from_json(data) -> complex:
    if isinstance(data, (int, float)):
        return complex(data)
    if not isinstance(data, (list, tuple)) or len(data) != 2:
        raise InvalidInputError(f"Complex number must be [re, im], got {data!r}")
    return complex(float(data[0]), float(data[1]))


def matrix_to_json(m) -> List[List[List[float]]]:
    return [[complex_to_json(z) for z in row] for row in np.asarray(m)]


def matrix_from_json(data) -> np.ndarray:
    try:
        rows = [[complex_from_json(z) for z in row] for row in data]
    except TypeError as e:
        raise InvalidInputError(f"Matrix must be a list of rows: {e}") from e
    return linops.as_matrix(rows)


def vector_to_json(v) -> List[List[float]]:
    return [complex_to_json(z) for z in np.asarray(v).reshape(-1)]


def operation_to_dict(op: QuantumOperation) -> Dict[str, Any]:
    return {
        "kind": "kraus",
        "d_in": op.d_in,
        "d_out": op.d_out,
        "kraus": [matrix_to_json(k) for k in op.kraus],
    }


def operation_from_dict(data: Dict[str, Any]) -> QuantumOperation:
    if data.get("kind") != "kraus":
        raise InvalidInputError(f"Unsupported operation kind {data.get('kind')!r}")
    try:
        d_in, d_out = int(data["d_in"]), int(data["d_out"])
        kraus = tuple(matrix_from_json(k) for k in data["kraus"])
    except KeyError as e:
        raise InvalidInputError(f"Operation is missing field {e}") from e
    return QuantumOperation(d_in, d_out, kraus)


def hamiltonian_to_dict(h: Hamiltonian) -> Dict[str, Any]:
    return {
        "eigenvalues": [float(x) for x in h.eigenvalues],
        "basis": matrix_to_json(h.eigenbasis),
    }


def hamiltonian_from_dict(data: Dict[str, Any]) -> Hamiltonian:
    if "eigenvalues" not in data:
        raise InvalidInputError("Hamiltonian is missing field 'eigenvalues'")
    values = np.asarray(data["eigenvalues"], dtype=float)
    if data.get("basis") is None:
        return Hamiltonian.diagonal(values)
    return Hamiltonian(values, matrix_from_json(data["basis"]))


def stage_to_dict(stage) -> Dict[str, Any]:
    return {
        "p": float(stage.p),
        "gap": float(stage.gap),
        "beta_n": float(stage.beta_n),
        "enorm_smoothed_sq": float(stage.enorm_smoothed_sq),
        "enorm_sq": float(stage.enorm_sq),
        "operator_norm_sq": float(stage.operator_norm_sq),
        "iterations": int(stage.iterations),
        "converged": bool(stage.converged),
    }


def certificate_to_dict(cert) -> Dict[str, Any]:
    return {
        "U": matrix_to_json(cert.U),
        "rho": matrix_to_json(cert.rho),
        "lower_bound": float(cert.lower_bound),
        "upper_bound": float(cert.upper_bound),
        "gap": float(cert.gap),
        "p_trace": [[float(p), float(g)] for p, g in cert.p_trace],
        "iterations": int(cert.iterations),
        "converged": bool(cert.converged),
        "smoothed_lower": float(cert.smoothed_lower),
        "smoothed_upper": float(cert.smoothed_upper),
        "stages": [stage_to_dict(s) for s in cert.stages],
        "membership": [float(x) for x in cert.membership],
    }


def dumps(obj: Any) -> str:
    """Deterministic JSON text; NaN and infinities are rejected."""
    try:
        return json.dumps(obj, indent=2, allow_nan=False) + "\n"
    except ValueError as e:
        raise InvalidInputError(f"Value cannot be written as JSON: {e}") from e


def read_json(path: Union[str, Path]) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InvalidInputError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path} is not valid JSON: {e}") from e


def write_json(path: Union[str, Path], obj: Any):
    Path(path).write_text(dumps(obj), encoding="utf-8")
    logger.info("Wrote %s", path)


def load_operation(path: Union[str, Path]) -> QuantumOperation:
    return operation_from_dict(read_json(path))


def load_hamiltonian(path: Union[str, Path]) -> Hamiltonian:
    return hamiltonian_from_dict(read_json(path))
