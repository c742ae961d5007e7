"""Real-FLOP cost model and instrumentation.

Complex arithmetic is counted as fixed bundles of real floating-point
operations (one complex multiply = 6 real FLOPs, one complex add = 2,
one complex divide = 11 by default).  Factorization costs are standard
dense-matrix operation counts scaled by 4 for complex arithmetic, with
configurable leading constants since published counts vary by algorithm
variant.

Accounting convention
---------------------
The counter charges every matrix-kernel primitive (matrix product, QR,
SVD-based nullspace extraction, pseudo-inverse) with its model cost at
the dimensions actually used.  For the sequential decoupler family the
charged work is the recursion's own arithmetic: the projection products
``T = Z @ A`` and the nullspace factorizations of the small projected
blocks, at the subspace dimensions where they execute.  Re-expressing
already-orthonormal bases (products of orthonormal factors, and carrying
pending channel blocks into a child node's coordinates) is bookkeeping
on known-orthonormal data and is excluded from the tally.  The same
convention is applied to every algorithm being compared, so reported
ratios are internally consistent; the convention is recorded in every
output manifest.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, fields

from .errors import InfeasibleSystemError, InvalidInputError

__all__ = [
    "CostModel",
    "FlopReport",
    "count_matmul",
    "estimate_flops",
    "instrument",
    "is_instrumenting",
    "read_counter",
    "reset_counter",
    "counting",
    "configure",
    "active_model",
    "charge",
]


@dataclass(frozen=True)
class CostModel:
    """Per-operation real-FLOP prices.

    ``add``/``mul``/``div`` price one complex addition, multiplication and
    division.  ``qr_scale``, ``svd_scale`` and ``inv_scale`` are leading
    constants on the closed-form polynomials below.
    """

    add: float = 2.0
    mul: float = 6.0
    div: float = 11.0
    qr_scale: float = 16.0   # complex Householder thin QR with explicit Q
    svd_scale: float = 4.0   # complex scaling of the real bidiagonal-SVD counts
    inv_scale: float = 8.0   # complex Gauss-Jordan: n^3 multiplies + n^3 adds

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise InvalidInputError(f"cost model field {f.name!r} must be >= 0")

    def matmul(self, m: int, n: int, p: int) -> float:
        """Cost of an (m x n) @ (n x p) complex product."""
        if min(m, n, p) <= 0:
            return 0.0
        return m * p * (n * self.mul + (n - 1) * self.add)

    def qr(self, m: int, n: int) -> float:
        """Thin QR of an m x n matrix (m >= n), Q materialized."""
        if min(m, n) <= 0:
            return 0.0
        return self.qr_scale * n * n * (m - n / 3.0)

    def svd_full(self, m: int, n: int) -> float:
        """Full SVD of an m x n matrix with all singular vectors."""
        if min(m, n) <= 0:
            return 0.0
        return self.svd_scale * (4 * m * m * n + 8 * m * n * n + 9 * n ** 3)

    def svd_values(self, m: int, n: int) -> float:
        """Bidiagonalization-phase SVD cost (singular values plus the short side)."""
        if min(m, n) <= 0:
            return 0.0
        return self.svd_scale * (4 * m * n * n + 8 * n ** 3)

    def inverse(self, n: int) -> float:
        """Dense inverse of an n x n matrix."""
        if n <= 0:
            return 0.0
        return self.inv_scale * n ** 3

    def pinv(self, m: int, n: int) -> float:
        """Pseudo-inverse of an m x n matrix via the normal equations."""
        if min(m, n) <= 0:
            return 0.0
        return self.matmul(n, m, n) + self.inverse(n) + self.matmul(n, n, m)


@dataclass(frozen=True)
class FlopReport:
    """Tally for one algorithm on one system, with a per-phase breakdown."""

    algorithm: str
    n_r: int
    m_per_user: tuple[int, ...]
    total: int
    breakdown: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        if self.total != sum(c for _, c in self.breakdown):
            raise InvalidInputError("report total does not equal the sum of its breakdown")


# ---------------------------------------------------------------------------
# Instrumentation counter (process-global, lock-guarded).

_lock = threading.Lock()
_enabled = False
_counter = 0.0
_model = CostModel()


def configure(model: CostModel) -> None:
    """Install ``model`` as the cost model used by instrumented primitives."""
    global _model
    with _lock:
        _model = model


def active_model() -> CostModel:
    return _model


def instrument(enabled: bool = True) -> None:
    """Turn the FLOP counter on or off.  The tally is kept across toggles."""
    global _enabled
    with _lock:
        _enabled = enabled


def is_instrumenting() -> bool:
    return _enabled


def reset_counter() -> None:
    global _counter
    with _lock:
        _counter = 0.0


def read_counter() -> int:
    """Current tally in FLOPs.  Monotone between resets."""
    with _lock:
        return int(round(_counter))


def charge(flops: float) -> None:
    """Add ``flops`` to the tally if instrumentation is on.  Thread-safe."""
    global _counter
    if _enabled and flops:
        with _lock:
            _counter += flops


@contextmanager
def counting(model: CostModel | None = None):
    """Context manager that instruments a block and yields a tally handle.

    >>> with counting() as tally:
    ...     some_instrumented_work()
    >>> tally.total
    """
    previous_enabled = _enabled
    previous_model = _model
    if model is not None:
        configure(model)
    reset_counter()
    instrument(True)
    handle = _Tally()
    try:
        yield handle
    finally:
        handle.total = read_counter()
        instrument(previous_enabled)
        configure(previous_model)


class _Tally:
    total: int = 0


# ---------------------------------------------------------------------------
# Closed-form estimates.

def count_matmul(m: int, n: int, p: int, model: CostModel | None = None) -> int:
    """Closed-form cost of an (m x n) @ (n x p) complex product."""
    model = model or _model
    return int(round(model.matmul(m, n, p)))


def _normalize_users(k: int | None, m_per_user) -> tuple[int, ...]:
    if m_per_user is None:
        raise InvalidInputError("m_per_user is required")
    if isinstance(m_per_user, int):
        if k is None:
            raise InvalidInputError("k is required when m_per_user is a scalar")
        m_list = (m_per_user,) * k
    else:
        m_list = tuple(int(m) for m in m_per_user)
    if not m_list or any(m < 1 for m in m_list):
        raise InvalidInputError("every user needs at least one stream")
    return m_list


def _check_feasible(n_r: int, m_list: tuple[int, ...]) -> None:
    total = sum(m_list)
    for i, m in enumerate(m_list):
        if total - m >= n_r:
            raise InfeasibleSystemError(
                f"user {i}: complementary streams {total - m} must be < n_r={n_r}"
            )


def _split_pending(pending: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    half = (len(pending) + 1) // 2
    return pending[:half], pending[half:]


def _sd_breakdown(n_r: int, m_list: tuple[int, ...], model: CostModel):
    """Walk the partition tree, summing the charged recursion arithmetic per level."""
    k = len(m_list)
    per_level: list[float] = []
    if k == 1:
        return per_level
    levels = math.ceil(math.log2(k))
    nodes = [(n_r, tuple(range(k)))]
    for _ in range(levels):
        level_cost = 0.0
        nxt = []
        for entry_dim, pending in nodes:
            first, second = _split_pending(pending)
            for keep, annihilate in ((first, second), (second, first)):
                if not keep:
                    continue  # dead leaf: no nullspace work
                if not annihilate:
                    nxt.append((entry_dim, keep))
                    continue
                t = entry_dim
                for p in annihilate:
                    m = m_list[p]
                    level_cost += model.matmul(t, entry_dim, m)
                    level_cost += model.svd_values(t, m)
                    t -= m
                nxt.append((t, keep))
        per_level.append(level_cost)
        nodes = nxt
    return per_level


def _sd_ui_breakdown(n_r: int, m_list: tuple[int, ...], added: tuple[int, ...],
                     model: CostModel):
    """Per-inclusion cost of updating an existing decoupler set."""
    per_inclusion: list[float] = []
    current = list(m_list)
    for m_new in added:
        total_m = sum(current)
        cost = 0.0
        # derive the newcomer's decoupler from user 0's
        t_donor = n_r - (total_m - current[0])
        cost += model.matmul(t_donor, n_r, current[0])
        cost += model.svd_values(t_donor, current[0])
        # fold the new channel into every existing decoupler
        for m_j in current:
            t_j = n_r - (total_m - m_j)
            cost += model.matmul(t_j, n_r, m_new)
            cost += model.svd_values(t_j, m_new)
        per_inclusion.append(cost)
        current.append(m_new)
    return per_inclusion


def estimate_flops(algorithm: str, n_r: int, m_per_user, k: int | None = None,
                   added=None, model: CostModel | None = None) -> FlopReport:
    """Closed-form FLOP tally for one decoupler algorithm.

    ``algorithm`` is one of ``"SD"``, ``"SVD"``, ``"PINV"``, ``"SD_UI"``.
    ``m_per_user`` may be a scalar (with ``k``) or a per-user sequence.
    ``added`` lists the stream counts of newly included users (``SD_UI``
    only); the report then covers the incremental update, starting from a
    decoupler set for the base system.
    """
    model = model or _model
    m_list = _normalize_users(k, m_per_user)
    algorithm = algorithm.upper()

    if algorithm == "SD_UI":
        added = _normalize_users(None, tuple(added or ()))
        _check_feasible(n_r, m_list + added)
        per_inc = _sd_ui_breakdown(n_r, m_list, added, model)
        breakdown = tuple(
            (f"inclusion {i + 1}", int(round(c))) for i, c in enumerate(per_inc)
        )
        return FlopReport("SD_UI", n_r, m_list + added,
                          sum(c for _, c in breakdown), breakdown)

    if added:
        raise InvalidInputError("added users only apply to the SD_UI algorithm")
    _check_feasible(n_r, m_list)
    total_m = sum(m_list)

    if algorithm == "SD":
        per_level = _sd_breakdown(n_r, m_list, model)
        breakdown = tuple(
            (f"level {l + 1}", int(round(c))) for l, c in enumerate(per_level)
        )
    elif algorithm == "SVD":
        breakdown = tuple(
            (f"user {i}", int(round(model.svd_full(n_r, total_m - m))))
            for i, m in enumerate(m_list)
        )
    elif algorithm == "PINV":
        if total_m > n_r:
            raise InfeasibleSystemError(
                f"pseudo-inverse decoupler needs total streams {total_m} <= n_r={n_r}"
            )
        breakdown = (
            ("gram matrix", int(round(model.matmul(total_m, n_r, total_m)))),
            ("inverse", int(round(model.inverse(total_m)))),
            ("apply adjoint", int(round(model.matmul(total_m, total_m, n_r)))),
        )
    else:
        raise InvalidInputError(f"unknown algorithm {algorithm!r}")

    return FlopReport(algorithm, n_r, m_list, sum(c for _, c in breakdown), breakdown)
