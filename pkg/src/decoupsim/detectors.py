"""Per-user detection after decoupling.

Once a decoupler has isolated a user, the remaining task is an ordinary
single-user MIMO detection problem on the effective link
``y_tilde = W y``, ``H_tilde = W H``.  This module provides the two
detectors used throughout the package (a linear MMSE filter and a
QR-based successive interference canceller), plus Gray-mapped QPSK/QAM
constellations with modulation, slicing and demodulation for the BER
harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError, SingularMatrixError
from .kernels import as_complex_matrix, qr_decompose

__all__ = [
    "Constellation",
    "EffectiveLink",
    "build_link",
    "lmmse_filter",
    "lmmse_detect",
    "sic_detect",
    "modulate_bits",
    "demodulate_symbols",
    "slice_symbols",
]


def _gray_inverse(g: int) -> int:
    n = 0
    while g:
        n ^= g
        g >>= 1
    return n


@dataclass(frozen=True)
class Constellation:
    """Gray-mapped square constellation with unit average symbol energy.

    ``points[s]`` is the symbol whose bit label is the binary expansion
    of ``s`` (first half of the bits selects the in-phase level, second
    half the quadrature level; adjacent levels differ in one bit).
    """

    name: str
    points: np.ndarray
    bits_per_symbol: int
    levels: np.ndarray  # per-axis amplitude levels, ascending

    @classmethod
    def qpsk(cls) -> "Constellation":
        return cls.square_qam(4, name="QPSK")

    @classmethod
    def square_qam(cls, order: int, name: str | None = None) -> "Constellation":
        """Square QAM of the given order (4, 16, 64, ...)."""
        k = int(round(np.log2(order)))
        if 2 ** k != order or k % 2 != 0 or order < 4:
            raise InvalidInputError(f"order {order} is not a square power of 4")
        half = k // 2
        n_levels = 2 ** half
        scale = np.sqrt(3.0 / (2.0 * (n_levels ** 2 - 1)))
        levels = scale * (2 * np.arange(n_levels) - n_levels + 1).astype(float)
        points = np.empty(order, dtype=np.complex128)
        for s in range(order):
            i_bits = s >> half
            q_bits = s & (n_levels - 1)
            points[s] = levels[_gray_inverse(i_bits)] + 1j * levels[_gray_inverse(q_bits)]
        return cls(name or f"QAM{order}", points, k, levels)

    @classmethod
    def from_name(cls, name: str) -> "Constellation":
        label = name.strip().upper()
        if label == "QPSK":
            return cls.qpsk()
        if label.startswith("QAM"):
            return cls.square_qam(int(label[3:]))
        raise InvalidInputError(f"unknown constellation {name!r}")

    @property
    def order(self) -> int:
        return self.points.size


def _axis_positions(values: np.ndarray, cons: Constellation) -> np.ndarray:
    """Index of the nearest per-axis level for each real value."""
    # levels are uniformly spaced: round to the grid, then clip
    step = cons.levels[1] - cons.levels[0] if cons.levels.size > 1 else 1.0
    pos = np.rint((values - cons.levels[0]) / step).astype(int)
    return np.clip(pos, 0, cons.levels.size - 1)


def slice_symbols(z, cons: Constellation) -> np.ndarray:
    """Map each entry of ``z`` to the nearest constellation point."""
    z = np.asarray(z, dtype=np.complex128)
    i_pos = _axis_positions(z.real, cons)
    q_pos = _axis_positions(z.imag, cons)
    return cons.levels[i_pos] + 1j * cons.levels[q_pos]


def _slice_scalar(z: complex, cons: Constellation) -> complex:
    """Nearest constellation point of one sample, bypassing array machinery.

    Uses the same round-to-grid rule as :func:`slice_symbols` so scalar
    and vector paths always agree.
    """
    levels = cons.levels
    n = levels.size
    if n == 1:
        return complex(levels[0], levels[0])
    step = levels[1] - levels[0]
    lo = levels[0]
    pi = round((z.real - lo) / step)
    pq = round((z.imag - lo) / step)
    pi = 0 if pi < 0 else (n - 1 if pi > n - 1 else pi)
    pq = 0 if pq < 0 else (n - 1 if pq > n - 1 else pq)
    return complex(levels[pi], levels[pq])


def _symbol_indices(z, cons: Constellation) -> np.ndarray:
    """Bit-label index of the nearest constellation point for each entry."""
    z = np.asarray(z, dtype=np.complex128)
    half = cons.bits_per_symbol // 2
    i_pos = _axis_positions(z.real, cons)
    q_pos = _axis_positions(z.imag, cons)
    i_lab = i_pos ^ (i_pos >> 1)
    q_lab = q_pos ^ (q_pos >> 1)
    return (i_lab << half) | q_lab


def modulate_bits(bits, cons: Constellation) -> np.ndarray:
    """Map a 0/1 bit stream to symbols; length must divide into symbols."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if np.any((bits != 0) & (bits != 1)):
        raise InvalidInputError("bits must be 0 or 1")
    k = cons.bits_per_symbol
    if bits.size % k:
        raise InvalidInputError(f"bit count {bits.size} not divisible by {k}")
    groups = bits.reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return cons.points[groups @ weights]


def demodulate_symbols(symbols, cons: Constellation) -> np.ndarray:
    """Slice symbols to the constellation and return their bit labels."""
    idx = _symbol_indices(symbols, cons)
    k = cons.bits_per_symbol
    weights = 1 << np.arange(k - 1, -1, -1)
    return ((idx[:, None] & weights) > 0).astype(np.int64).ravel()


@dataclass(frozen=True)
class EffectiveLink:
    """A user's post-decoupling observation model.

    ``y_tilde = W y``, ``h_tilde = W H_i`` and the noise covariance
    ``sigma_n2 * W W^H`` (exactly ``sigma_n2 * I`` when W has
    orthonormal rows).
    """

    y_tilde: np.ndarray
    h_tilde: np.ndarray
    noise_cov: np.ndarray
    sigma_n2: float


def build_link(w_i, h_i, y, sigma_n2: float) -> EffectiveLink:
    """Assemble the effective single-user link seen through a decoupler."""
    w_i = as_complex_matrix(w_i, "w_i")
    h_i = as_complex_matrix(h_i, "h_i")
    y = np.asarray(y, dtype=np.complex128).ravel()
    if sigma_n2 < 0:
        raise InvalidInputError("sigma_n2 must be >= 0")
    if w_i.shape[1] != h_i.shape[0] or w_i.shape[1] != y.size:
        raise ShapeError(
            f"incompatible shapes: W {w_i.shape}, H {h_i.shape}, y ({y.size},)"
        )
    return EffectiveLink(
        y_tilde=w_i @ y,
        h_tilde=w_i @ h_i,
        noise_cov=sigma_n2 * (w_i @ w_i.conj().T),
        sigma_n2=float(sigma_n2),
    )


def _whitened(link: EffectiveLink) -> tuple[np.ndarray, np.ndarray]:
    """Return (H, y) transformed so the noise covariance becomes sigma_n2 * I."""
    t = link.noise_cov.shape[0]
    if link.sigma_n2 == 0:
        return link.h_tilde, link.y_tilde
    shape_matrix = link.noise_cov / link.sigma_n2
    if np.linalg.norm(shape_matrix - np.eye(t)) <= 1e-9 * max(1.0, np.sqrt(t)):
        return link.h_tilde, link.y_tilde
    try:
        chol = np.linalg.cholesky(shape_matrix)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("noise covariance is not positive definite") from exc
    h = np.linalg.solve(chol, link.h_tilde)
    y = np.linalg.solve(chol, link.y_tilde)
    return h, y


def lmmse_filter(link: EffectiveLink, whiten: bool = False) -> np.ndarray:
    """Unsliced MMSE filter output ``(H^H H + sigma_n2 I)^-1 H^H y_tilde``.

    The formula treats the post-decoupling noise as white, which is exact
    for row-orthonormal decouplers.  ``whiten=True`` first applies a
    noise-whitening transform so the formula is also correct for
    decouplers with colored output noise (such as the pseudo-inverse
    construction).
    """
    h, y = _whitened(link) if whiten else (link.h_tilde, link.y_tilde)
    m = h.shape[1]
    a = h.conj().T @ h + link.sigma_n2 * np.eye(m)
    rhs = h.conj().T @ y
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            "normal matrix is singular (rank-deficient link with sigma_n2 = 0)"
        ) from exc


def lmmse_detect(link: EffectiveLink, cons: Constellation, whiten: bool = False) -> np.ndarray:
    """Linear MMSE detection: filter, then slice per coordinate."""
    return slice_symbols(lmmse_filter(link, whiten=whiten), cons)


def _sic_backsubstitute(v: np.ndarray, r: np.ndarray, cons: Constellation) -> np.ndarray:
    """Slice-and-cancel back-substitution shared by all SIC entry points."""
    m = r.shape[1]
    x_hat = np.zeros(m, dtype=np.complex128)
    scale = float(np.linalg.norm(r))
    for j in range(m - 1, -1, -1):
        if abs(r[j, j]) <= 1e-12 * max(scale, 1.0):
            raise SingularMatrixError(f"zero pivot R[{j},{j}] in SIC back-substitution")
        residual = v[j] - r[j, j + 1:] @ x_hat[j + 1:]
        x_hat[j] = _slice_scalar(residual / r[j, j], cons)
    return x_hat


def sic_detect(link: EffectiveLink, cons: Constellation) -> np.ndarray:
    """QR-based successive interference cancellation.

    Factor ``H_tilde = Q R``, rotate ``v = Q^H y_tilde`` and detect
    symbols from the last stream to the first, subtracting each sliced
    decision from the streams still to come:

        x_hat[j] = slice((v[j] - sum_{p>j} R[j,p] x_hat[p]) / R[j,j])

    Requires a full-column-rank effective channel (every R[j,j] != 0).
    """
    h = link.h_tilde
    if h.shape[0] < h.shape[1]:
        raise ShapeError(f"effective channel {h.shape} has more streams than rows")
    factors = qr_decompose(h)
    v = factors.q.conj().T @ link.y_tilde
    return _sic_backsubstitute(v, factors.r, cons)
