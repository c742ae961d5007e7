"""Dense complex linear-algebra primitives.

Everything downstream (decouplers, detectors, the benchmark harness) is
built on these operations.  All functions are pure: they validate their
inputs, never mutate them, and are safe to call concurrently.  When the
FLOP counter is on (see :mod:`decoupsim.flops`) each primitive adds its
model cost to the tally.

Subspaces are represented by row-orthonormal basis matrices throughout,
so the pseudo-inverse of a basis is simply its adjoint and projecting a
signal onto a subspace keeps white noise white.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flops
from .errors import InvalidInputError, ShapeError

__all__ = [
    "SubspaceBasis",
    "QrFactors",
    "as_complex_matrix",
    "identity_basis",
    "matmul",
    "numerical_rank",
    "left_nullspace_basis",
    "pseudo_inverse",
    "qr_decompose",
    "subspace_distance",
]

_EPS = np.finfo(np.float64).eps


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-D complex128 array, rejecting non-finite entries."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SubspaceBasis:
    """Row-orthonormal basis of a subspace of C^ambient_dim.

    ``basis`` is t x n with the t basis vectors as rows; ``tol`` records
    the relative rank tolerance used when the basis was extracted.
    """

    basis: np.ndarray
    ambient_dim: int
    tol: float = 0.0

    def __post_init__(self) -> None:
        b = self.basis
        if b.ndim != 2 or b.shape[1] != self.ambient_dim:
            raise InvalidInputError(
                f"basis shape {b.shape} does not match ambient dim {self.ambient_dim}"
            )
        t = b.shape[0]
        if t > self.ambient_dim:
            raise InvalidInputError("more basis rows than ambient dimensions")
        if self.tol < 0:
            raise InvalidInputError("tol must be >= 0")
        if t:
            gram = b @ b.conj().T
            err = np.linalg.norm(gram - np.eye(t))
            if err > 1e-10 * max(1.0, np.sqrt(t)):
                raise InvalidInputError(
                    f"basis rows are not orthonormal (defect {err:.3e})"
                )

    @property
    def dim(self) -> int:
        """Number of basis vectors."""
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        """Orthogonal projector B^H B onto the spanned subspace."""
        return matmul(self.basis.conj().T, self.basis)


@dataclass(frozen=True)
class QrFactors:
    """Thin QR factors: Q has orthonormal columns, R is upper-triangular
    with real non-negative diagonal."""

    q: np.ndarray
    r: np.ndarray


def identity_basis(n: int) -> SubspaceBasis:
    """Canonical basis of all of C^n."""
    return SubspaceBasis(np.eye(n, dtype=np.complex128), n)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Instrumented complex matrix product."""
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    if flops.is_instrumenting():
        m = a.shape[0] if a.ndim == 2 else 1
        p = b.shape[1] if b.ndim == 2 else 1
        flops.charge(flops.active_model().matmul(m, a.shape[-1], p))
    return a @ b


def _rank_cutoff(s: np.ndarray, shape: tuple[int, int], tol: float) -> tuple[float, float]:
    """Return (effective relative tol, absolute cutoff) for singular values."""
    rel = tol if tol > 0 else max(shape) * _EPS
    sigma_max = float(s[0]) if s.size else 0.0
    return rel, rel * sigma_max


def numerical_rank(a, tol: float = 0.0) -> int:
    """Rank of ``a`` by counting singular values above ``tol * sigma_max``.

    ``tol = 0`` uses the default ``max(rows, cols) * eps``.
    """
    m = as_complex_matrix(a)
    if min(m.shape) == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    _, cutoff = _rank_cutoff(s, m.shape, tol)
    return int(np.sum(s > cutoff))


def left_nullspace_basis(t_mat, tol: float = 0.0) -> SubspaceBasis:
    """Row-orthonormal basis of the left nullspace of ``t_mat`` (t x m).

    Rows w of the result satisfy ``w @ t_mat = 0`` up to the rank
    tolerance: they are the adjoints of the left singular vectors whose
    singular values fall at or below ``tol * sigma_max`` (``tol = 0``
    selects the default ``max(t, m) * eps``).  The row count is
    ``t - numerical_rank(t_mat)``.  A zero or empty matrix yields the
    canonical identity basis.
    """
    t_mat = as_complex_matrix(t_mat, "t_mat")
    t, m = t_mat.shape
    if flops.is_instrumenting():
        flops.charge(flops.active_model().svd_full(t, m))
    if t == 0:
        return SubspaceBasis(np.zeros((0, 0), dtype=np.complex128), 0, tol)
    if m == 0:
        rel = tol if tol > 0 else t * _EPS
        return SubspaceBasis(np.eye(t, dtype=np.complex128), t, rel)
    u, s, _ = np.linalg.svd(t_mat, full_matrices=True)
    rel, cutoff = _rank_cutoff(s, t_mat.shape, tol)
    rank = int(np.sum(s > cutoff))
    if rank == 0:
        basis = np.eye(t, dtype=np.complex128)
    else:
        basis = u[:, rank:].conj().T
    return SubspaceBasis(np.ascontiguousarray(basis), t, rel)


def pseudo_inverse(a) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with relative singular-value truncation.

    Rank-deficient inputs are allowed; singular values below
    ``max(n, m) * eps * sigma_max`` are dropped.
    """
    a = as_complex_matrix(a, "a")
    if flops.is_instrumenting():
        flops.charge(flops.active_model().pinv(*a.shape))
    if min(a.shape) == 0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=np.complex128)
    return np.linalg.pinv(a, rcond=max(a.shape) * _EPS)


def qr_decompose(a) -> QrFactors:
    """Thin QR factorization with a fixed sign convention.

    Requires n >= m for an n x m input.  The diagonal of R is forced to
    be real and non-negative (column phases are absorbed into Q), which
    makes the factorization deterministic across runs and backends.
    """
    a = as_complex_matrix(a, "a")
    n, m = a.shape
    if n < m:
        raise ShapeError(f"qr_decompose needs n >= m, got {n} x {m}")
    if flops.is_instrumenting():
        flops.charge(flops.active_model().qr(n, m))
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.diagonal(r).copy()
    phases = np.ones(m, dtype=np.complex128)
    nonzero = np.abs(diag) > 0
    phases[nonzero] = diag[nonzero] / np.abs(diag[nonzero])
    q = q * phases[None, :]
    r = phases.conj()[:, None] * r
    # the diagonal is now real up to rounding noise; make it exactly real
    idx = np.arange(m)
    r[idx, idx] = r[idx, idx].real
    return QrFactors(q, r)


def subspace_distance(b1: SubspaceBasis, b2: SubspaceBasis) -> float:
    """Frobenius distance between the orthogonal projectors of two subspaces.

    Zero iff the subspaces coincide; symmetric; satisfies the triangle
    inequality.  Requires both bases to share an ambient dimension.
    """
    if b1.ambient_dim != b2.ambient_dim:
        raise InvalidInputError(
            f"ambient dims differ: {b1.ambient_dim} vs {b2.ambient_dim}"
        )
    return float(np.linalg.norm(b1.projector() - b2.projector()))
