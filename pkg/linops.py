"""Dense complex linear algebra: validity predicates, spectral factorizations and
partial traces. Matrices are plain ``numpy.ndarray`` values (complex128); the
``as_*`` helpers validate them in the role a caller needs."""

import logging
from enum import Enum
from typing import NamedTuple, Tuple

import numpy as np
import scipy.linalg

from config import Config
from errors import InvalidInputError

logger = logging.getLogger(__name__)

# Components below this magnitude do not fix the eigenvector phase.
PHASE_TOL = 1e-10
# Eigenvalues below ROUNDOFF_FACTOR * d * eps * lambda_max are treated as zero.
ROUNDOFF_FACTOR = 10


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


class ContractionClass(str, Enum):
    GENERAL = "general"
    CONTRACTION = "contraction"
    PARTIAL_ISOMETRY = "partial_isometry"
    ISOMETRY = "isometry"
    UNITARY = "unitary"


def as_matrix(x) -> np.ndarray:
    """Return a finite complex 2-D copy of ``x``."""
    m = np.array(x, dtype=np.complex128)
    if m.ndim != 2 or min(m.shape) < 1:
        raise InvalidInputError(f"Expected a non-empty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("Matrix has NaN or infinite entries")
    return m


def as_hermitian(x) -> np.ndarray:
    """Validate hermiticity within the relative tolerance and symmetrize."""
    m = as_matrix(x)
    if m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"Hermitian operator must be square, got {m.shape}")
    deviation = np.max(np.abs(m - m.conj().T))
    scale = np.max(np.abs(m))
    if deviation > Config.HERMITIAN_RTOL * scale:
        raise InvalidInputError(
            f"Matrix is not Hermitian: deviation {deviation:.3e} at scale {scale:.3e}"
        )
    return (m + m.conj().T) / 2


def clip_spectrum(w: np.ndarray) -> np.ndarray:
    """Zero eigenvalues in [-1e-10 max|w|, 0); anything lower is an error."""
    scale = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w.min() < -Config.PSD_RTOL * scale:
        raise InvalidInputError(
            f"Operator is not positive: eigenvalue {w.min():.3e} at norm {scale:.3e}"
        )
    return np.clip(w, 0.0, None)


def floor_spectrum(w: np.ndarray) -> np.ndarray:
    """``clip_spectrum``, then zero the eigenvalues lost in round-off of the largest one."""
    w = clip_spectrum(w)
    if not w.size:
        return w
    floor = ROUNDOFF_FACTOR * w.size * np.finfo(np.float64).eps * w.max()
    return np.where(w > floor, w, 0.0)


def as_positive(x) -> np.ndarray:
    """Validate positivity, clipping eigenvalues in [-1e-10 ||M||, 0) to zero."""
    m = as_hermitian(x)
    w, v = scipy.linalg.eigh(m)
    if w.min() >= 0:
        return m
    clipped = clip_spectrum(w)
    p = (v * clipped) @ v.conj().T
    return (p + p.conj().T) / 2


def _fix_phases(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    for j in range(v.shape[1]):
        nonzero = np.flatnonzero(np.abs(v[:, j]) > PHASE_TOL)
        if nonzero.size:
            c = v[nonzero[0], j]
            v[:, j] *= np.conj(c) / abs(c)
    return v


def _first_nonzero(v: np.ndarray) -> np.ndarray:
    return np.array(
        [np.flatnonzero(np.abs(v[:, j]) > PHASE_TOL)[0] for j in range(v.shape[1])]
    )


def eigh(m) -> EigenDecomposition:
    """Hermitian eigendecomposition, eigenvalues descending.

    Each eigenvector has its first nonzero component real positive; within a
    group of tied eigenvalues vectors are ordered by the index of that
    component.
    """
    h = as_hermitian(m)
    w, v = scipy.linalg.eigh(h)
    w = w[::-1]
    v = _fix_phases(v[:, ::-1])
    tie_tol = Config.HERMITIAN_RTOL * max(np.max(np.abs(w)), 1e-300)
    group = np.concatenate([[0], np.cumsum(np.diff(-w) > tie_tol)])
    order = np.lexsort((np.arange(w.size), _first_nonzero(v), group))
    return EigenDecomposition(w[order], v[:, order])


def psd_sqrt(p) -> np.ndarray:
    ed = eigh(p)
    w = floor_spectrum(ed.eigenvalues)
    r =(ed.eigenvectors * np.sqrt(w)) @ ed.eigenvectors.conj().T
    return (r + r.conj().T) / 2


def trace_norm(x) -> float:
    return float(np.sum(scipy.linalg.svdvals(as_matrix(x))))


def operator_norm(x) -> float:
    return float(scipy.linalg.svdvals(as_matrix(x))[0])


def polar(x, rank_tol: float = Config.RANK_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Polar decomposition X = W P with W a partial isometry on supp(P)."""
    m = as_matrix(x)
    u, s, vh = scipy.linalg.svd(m, full_matrices=False)
    p = (vh.conj().T * s) @ vh
    p = (p + p.conj().T) / 2
    if s[0] == 0:
        return np.zeros_like(m), p
    keep = s > rank_tol * s[0]
    return u[:, keep] @ vh[keep, :], p


def partial_trace(p, dims: Tuple[int, int], trace_out: int) -> np.ndarray:
    """Trace out factor ``trace_out`` (0 for X, 1 for Y) of an operator on X⊗Y."""
    m = as_matrix(p)
    d_x, d_y = dims
    if m.shape != (d_x * d_y, d_x * d_y):
        raise InvalidInputError(
            f"Operator of shape {m.shape} does not act on a {d_x}x{d_y} product space"
        )
    t = m.reshape(d_x, d_y, d_x, d_y)
    if trace_out == 1:
        return np.einsum("ajbj->ab", t)
    if trace_out == 0:
        return np.einsum("jajb->ab", t)
    raise InvalidInputError(f"trace_out must be 0 or 1, got {trace_out!r}")


def support_projector(p, rank_tol: float = Config.RANK_TOL) -> np.ndarray:
    """Projector onto the eigenvectors with eigenvalue above rank_tol * lambda_max."""
    ed = eigh(as_positive(p))
    w, v = ed
    if w[0] <= 0:
        return np.zeros_like(v)
    q = v[:, w > rank_tol * w[0]]
    proj = q @ q.conj().T
    return (proj + proj.conj().T) / 2


def rank(p, rank_tol: float = Config.RANK_TOL) -> int:
    return int(round(np.real(np.trace(support_projector(p, rank_tol)))))


def classify_contraction(x, tol: float = 1e-9) -> ContractionClass:
    m = as_matrix(x)
    if operator_norm(m) > 1 + tol:
        return ContractionClass.GENERAL
    gram = m.conj().T @ m
    n_rows, n_cols = m.shape
    isometric = np.linalg.norm(gram - np.eye(n_cols), 2) <= tol
    if isometric and n_rows == n_cols and np.linalg.norm(m @ m.conj().T - np.eye(n_rows), 2) <= tol:
        return ContractionClass.UNITARY
    if isometric:
        return ContractionClass.ISOMETRY
    if np.linalg.norm(gram @ gram - gram, 2) <= tol:
        return ContractionClass.PARTIAL_ISOMETRY
    return ContractionClass.CONTRACTION
