"""
Test dense linear algebra helpers
"""
import numpy as np
import pytest

import linops
from errors import InvalidInputError
from instances import ginibre, haar_isometry, haar_unitary, random_density
from linops import ContractionClass


def test_as_hermitian_rejects_non_hermitian():
    with pytest.raises(InvalidInputError):
        linops.as_hermitian([[1.0, 1.0], [0.0, 1.0]])


def test_as_matrix_rejects_nan():
    with pytest.raises(InvalidInputError):
        linops.as_matrix([[np.nan, 0.0], [0.0, 1.0]])


def test_as_positive_clips_roundoff_and_rejects_negative():
    p = linops.as_positive(np.diag([1.0, -1e-13]))
    assert np.linalg.eigvalsh(p).min() >= 0
    with pytest.raises(InvalidInputError):
        linops.as_positive(np.diag([1.0, -1e-3]))


def test_eigh_is_descending_with_phase_convention(rng):
    h = ginibre(rng, 4, 4)
    h = h + h.conj().T
    values, vectors = linops.eigh(h)
    assert np.all(np.diff(values) <= 0)
    np.testing.assert_allclose((vectors * values) @ vectors.conj().T, h, atol=1e-12)
    for j in range(4):
        first = vectors[np.flatnonzero(np.abs(vectors[:, j]) > linops.PHASE_TOL)[0], j]
        assert abs(first.imag) < 1e-12 and first.real > 0


def test_eigh_orders_tied_eigenvectors_by_first_component():
    values, vectors = linops.eigh(np.diag([1.0, 2.0, 2.0]))
    np.testing.assert_allclose(values, [2.0, 2.0, 1.0])
    assert np.argmax(np.abs(vectors[:, 0])) < np.argmax(np.abs(vectors[:, 1]))


def test_psd_sqrt_squares_back(rng):
    p = random_density(rng, 5, 3)
    root = linops.psd_sqrt(p)
    np.testing.assert_allclose(root @ root, p, atol=1e-12)


def test_floor_spectrum_zeroes_roundoff_only():
    w = np.array([1.0, 1e-9, 3e-16, -1e-17])
    np.testing.assert_array_equal(linops.floor_spectrum(w), [1.0, 1e-9, 0.0, 0.0])
    with pytest.raises(InvalidInputError):
        linops.floor_spectrum(np.array([1.0, -1e-3]))


def test_psd_sqrt_of_rank_deficient_product_has_no_roundoff_tail(rng):
    v = haar_isometry(rng, 4, 2)
    p = v @ np.diag([0.7, 0.3]) @ v.conj().T
    root = linops.psd_sqrt(p)
    assert linops.rank(root, 1e-12) == 2
    assert linops.trace_norm(root @ root) == pytest.approx(1.0, abs=1e-13)


def test_norms(rng):
    x = ginibre(rng, 3, 4)
    s = np.linalg.svd(x, compute_uv=False)
    assert linops.trace_norm(x) == pytest.approx(s.sum(), abs=1e-12)
    assert linops.operator_norm(x) == pytest.approx(s[0], abs=1e-12)


def test_polar_factorizes_with_partial_isometry(rng):
    x = ginibre(rng, 4, 2) @ ginibre(rng, 2, 4)
    w, p = linops.polar(x)
    np.testing.assert_allclose(w @ p, x, atol=1e-10)
    assert linops.classify_contraction(w) == ContractionClass.PARTIAL_ISOMETRY


@pytest.mark.parametrize("trace_out", [0, 1])
def test_partial_trace_of_product(rng, trace_out):
    a, b = random_density(rng, 2), random_density(rng, 3)
    result = linops.partial_trace(np.kron(a, b), (2, 3), trace_out)
    np.testing.assert_allclose(result, b if trace_out == 0 else a, atol=1e-12)


def test_partial_trace_rejects_bad_shape():
    with pytest.raises(InvalidInputError):
        linops.partial_trace(np.eye(5), (2, 3), 0)


def test_support_projector_and_rank(rng):
    p = random_density(rng, 5, 2)
    proj = linops.support_projector(p)
    np.testing.assert_allclose(proj @ p, p, atol=1e-12)
    assert linops.rank(p) == 2


@pytest.mark.parametrize(
    "make, expected",
    [
        (lambda rng: haar_unitary(rng, 3), ContractionClass.UNITARY),
        (lambda rng: haar_isometry(rng, 4, 2), ContractionClass.ISOMETRY),
        (lambda rng: np.diag([1.0, 0.0, 1.0]), ContractionClass.PARTIAL_ISOMETRY),
        (lambda rng: 0.5 * haar_unitary(rng, 3), ContractionClass.CONTRACTION),
        (lambda rng: 2.0 * np.eye(2), ContractionClass.GENERAL),
    ],
)
def test_classify_contraction(rng, make, expected):
    assert linops.classify_contraction(make(rng)) == expected
