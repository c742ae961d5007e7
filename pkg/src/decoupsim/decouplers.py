"""Interference-removing decouplers for the multi-user MIMO uplink.

A decoupler for user i is a matrix ``W_i`` whose rows span the common
left nullspace of every other user's channel, so that ``W_i @ y`` is
free of inter-user interference.  Three constructions are provided:

* :func:`svd_decoupler` factors each user's complementary channel
  directly (the straightforward baseline, one large SVD per user);
* :func:`sequential_decoupler` builds all decouplers at once over a
  binary partition tree, reusing intermediate common-nullspace
  estimates so that later stages work in ever smaller subspaces;
* :func:`pinv_decoupler` takes block rows of the channel pseudo-inverse
  (which also equalizes each user's own channel to the identity).

:func:`include_users` updates a sequential decoupler set in place when
new users join, and :func:`verify_decoupling` checks the residual
interference of any decoupler set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import flops
from .errors import InfeasibleSystemError, InvalidInputError, ShapeError, SingularMatrixError
from .kernels import (
    SubspaceBasis,
    as_complex_matrix,
    left_nullspace_basis,
    matmul,
    numerical_rank,
    pseudo_inverse,
)

__all__ = [
    "SystemChannel",
    "DecouplerSet",
    "PartitionNode",
    "recursive_common_nullspace",
    "sequential_decoupler",
    "partition_tree",
    "include_users",
    "svd_decoupler",
    "pinv_decoupler",
    "verify_decoupling",
    "DecouplingReport",
]

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class SystemChannel:
    """Ordered per-user channel blocks observed at a common receiver.

    ``users[i]`` is the n_r x m_i channel of user i.  Construction
    checks decoupling feasibility: the combined streams of the other
    users must stay below the receiver dimension for every user.
    """

    n_r: int
    users: tuple[np.ndarray, ...]

    def __init__(self, n_r: int, users) -> None:
        if n_r < 1:
            raise InvalidInputError("n_r must be >= 1")
        mats = []
        for i, h in enumerate(users):
            h = as_complex_matrix(h, f"user {i} channel")
            if h.shape[0] != n_r:
                raise ShapeError(
                    f"user {i} channel has {h.shape[0]} rows, expected n_r={n_r}"
                )
            if h.shape[1] < 1:
                raise InvalidInputError(f"user {i} has no streams")
            mats.append(h)
        if not mats:
            raise InvalidInputError("at least one user is required")
        total = sum(h.shape[1] for h in mats)
        for i, h in enumerate(mats):
            if total - h.shape[1] >= n_r:
                raise InfeasibleSystemError(
                    f"user {i} cannot be decoupled: other users carry "
                    f"{total - h.shape[1]} streams but n_r={n_r}"
                )
        object.__setattr__(self, "n_r", int(n_r))
        object.__setattr__(self, "users", tuple(mats))

    @property
    def k(self) -> int:
        return len(self.users)

    @property
    def m_per_user(self) -> tuple[int, ...]:
        return tuple(h.shape[1] for h in self.users)

    @property
    def m_total(self) -> int:
        return sum(self.m_per_user)

    def m_bar(self, i: int) -> int:
        """Combined stream count of everyone except user i."""
        return self.m_total - self.users[i].shape[1]

    def complement(self, i: int) -> np.ndarray:
        """Concatenation of all channels except user i's (built on demand)."""
        blocks = [h for j, h in enumerate(self.users) if j != i]
        if not blocks:
            return np.zeros((self.n_r, 0), dtype=np.complex128)
        return np.concatenate(blocks, axis=1)

    def stacked(self) -> np.ndarray:
        """The full n_r x m_total channel with users side by side."""
        return np.concatenate(self.users, axis=1)


@dataclass(frozen=True)
class DecouplerSet:
    """Per-user decoupling matrices plus provenance.

    ``w[i]`` has n_r columns; for generic channels its row count is
    ``n_r - m_bar(i)``.  ``method`` records which algorithm produced the
    set ("SD", "SVD" or "PINV") and ``row_orthonormal`` whether every
    ``w[i]`` has orthonormal rows.
    """

    w: tuple[np.ndarray, ...]
    method: str
    row_orthonormal: bool

    @property
    def k(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class PartitionNode:
    """One node of the sequential decoupler's partition tree.

    ``processed`` lists the users whose channels this node's basis
    annihilates, ``pending`` the users still waiting for their turn, and
    ``z`` the accumulated common left nullspace.
    """

    level: int
    processed: tuple[int, ...]
    pending: tuple[int, ...]
    z: SubspaceBasis


# ---------------------------------------------------------------------------
# Algorithm core.

def _nullspace_rows(tmat: np.ndarray, tol: float) -> np.ndarray:
    """Rows spanning the left nullspace of ``tmat`` (raw ndarray, no checks)."""
    t, m = tmat.shape
    if t == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    if m == 0:
        return np.eye(t, dtype=np.complex128)
    u, s, _ = np.linalg.svd(tmat, full_matrices=True)
    rel = tol if tol > 0 else max(t, m) * _EPS
    cutoff = rel * (float(s[0]) if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    if rank == 0:
        return np.eye(t, dtype=np.complex128)
    return np.ascontiguousarray(u[:, rank:].conj().T)


def _annihilate(z: np.ndarray, blocks, tol: float) -> np.ndarray:
    """Fold each block's left nullspace into ``z``, one block at a time.

    For every block A the loop forms T = Z @ A, extracts rows W spanning
    the left nullspace of T, and replaces Z by W @ Z.  The FLOP counter
    is charged for the projection product and the factorization of T;
    the final W @ Z product only re-expresses an orthonormal basis and
    is excluded from the declared accounting convention.
    """
    model = flops.active_model()
    for block in blocks:
        t_rows, span = z.shape
        tmat = z @ block
        if flops.is_instrumenting():
            flops.charge(model.matmul(t_rows, span, block.shape[1]))
            flops.charge(model.svd_values(t_rows, block.shape[1]))
        w = _nullspace_rows(tmat, tol)
        z = w @ z
    return z


def recursive_common_nullspace(blocks, z0: SubspaceBasis, tol: float = 0.0) -> SubspaceBasis:
    """Common left nullspace of several blocks, restricted to a starting subspace.

    Processes the blocks sequentially: the returned basis Z satisfies
    ``Z @ A_i = 0`` for every block while its row space stays inside the
    row space of ``z0``.  An empty block list returns ``z0`` unchanged.
    The result does not depend on the block order (only on the spanned
    subspace), and equals the nullspace of the column-concatenation of
    the blocks when ``z0`` is the full space.
    """
    mats = [as_complex_matrix(b, f"block {i}") for i, b in enumerate(blocks)]
    n = z0.ambient_dim
    for i, b in enumerate(mats):
        if b.shape[0] != n:
            raise InvalidInputError(
                f"block {i} has {b.shape[0]} rows, expected ambient dim {n}"
            )
    if not mats:
        return z0
    z = z0.basis
    for b in mats:
        tmat = matmul(z, b)
        w = left_nullspace_basis(tmat, tol)
        z = matmul(w.basis, z)
    return SubspaceBasis(z, n, tol if tol > 0 else 0.0)


# ---------------------------------------------------------------------------
# Sequential decoupler over the binary partition tree.

class _Node:
    """Internal tree node: ambient basis plus pending blocks in node coordinates."""

    __slots__ = ("z", "local", "processed", "pending")

    def __init__(self, z, local, processed, pending):
        self.z = z                # (t x n_r) ambient row-orthonormal basis
        self.local = local        # {user: (t x m) block expressed in this basis}
        self.processed = processed
        self.pending = pending


def _split(pending: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    half = (len(pending) + 1) // 2
    return pending[:half], pending[half:]


def _sd_levels(sys: SystemChannel, tol: float) -> list[list[_Node]]:
    """Run the level-order tree walk, returning every level including the root."""
    k = sys.k
    n_r = sys.n_r
    root = _Node(
        z=np.eye(n_r, dtype=np.complex128),
        local={i: sys.users[i] for i in range(k)},
        processed=(),
        pending=tuple(range(k)),
    )
    all_levels = [[root]]
    depth = math.ceil(math.log2(k)) if k > 1 else 0
    current = [root]
    for _ in range(depth):
        nxt: list[_Node] = []
        for node in current:
            first, second = _split(node.pending)
            for keep, annihilate in ((first, second), (second, first)):
                if not keep:
                    # dead branch for non-power-of-two K: materialized, no work
                    nxt.append(_Node(node.z, {}, node.processed, ()))
                    continue
                if not annihilate:
                    nxt.append(_Node(node.z, node.local, node.processed, keep))
                    continue
                entry_dim = node.z.shape[0]
                v = _annihilate(
                    np.eye(entry_dim, dtype=np.complex128),
                    [node.local[p] for p in annihilate],
                    tol,
                )
                # basis assembly and block transport: orthonormal bookkeeping
                z_child = v @ node.z
                local_child = {p: v @ node.local[p] for p in keep}
                nxt.append(
                    _Node(z_child, local_child, node.processed + annihilate, keep)
                )
        all_levels.append(nxt)
        current = nxt
    return all_levels


def sequential_decoupler(sys: SystemChannel, tol: float = 0.0) -> DecouplerSet:
    """Build all users' decouplers jointly over a binary partition tree.

    At each level every node's pending users are split in half; each
    child annihilates the sibling half's channels inside the parent's
    accumulated nullspace, so no channel is ever factored at full
    receiver dimension more than once.  After ceil(log2 K) levels each
    surviving leaf holds exactly one user's decoupler.  A single-user
    system needs no interference removal and gets the identity.

    The result spans, per user, the same subspace as the per-user SVD
    baseline, and every matrix has orthonormal rows.
    """
    levels = _sd_levels(sys, tol)
    w: list[np.ndarray | None] = [None] * sys.k
    for leaf in levels[-1]:
        if leaf.pending:
            if len(leaf.pending) != 1:
                raise AssertionError("leaf with more than one pending user")
            w[leaf.pending[0]] = leaf.z
    if any(m is None for m in w):
        raise AssertionError("partition tree failed to cover every user")
    return DecouplerSet(tuple(w), method="SD", row_orthonormal=True)


def partition_tree(sys: SystemChannel, tol: float = 0.0) -> list[list[PartitionNode]]:
    """The sequential decoupler's tree as inspectable nodes, level by level.

    Level 0 is the root (nothing processed, everyone pending, full-space
    basis).  Dead branches that arise for non-power-of-two user counts
    appear with an empty pending set and an unchanged basis.
    """
    return [
        [
            PartitionNode(
                level=level,
                processed=node.processed,
                pending=node.pending,
                z=SubspaceBasis(node.z, sys.n_r, tol),
            )
            for node in nodes
        ]
        for level, nodes in enumerate(_sd_levels(sys, tol))
    ]


def include_users(
    sys: SystemChannel,
    existing: DecouplerSet,
    new_channels,
    tol: float = 0.0,
    literal_update: bool = False,
) -> tuple[SystemChannel, DecouplerSet]:
    """Extend a decoupler set when new users join, without a full rebuild.

    Each newcomer's decoupler is derived from an existing user's (fold
    that user's own channel into its decoupler), then every existing
    decoupler is updated by folding in the newcomer's channel.  The
    result is subspace-equal to rebuilding from scratch on the augmented
    system.  Feasibility of the augmented system is checked before
    anything is touched; with no new channels the inputs are returned
    unchanged.

    ``literal_update=True`` switches the per-user update to fold in the
    i-th original user's channel instead of the newcomer's.  Existing
    decouplers already annihilate those channels, so this variant leaves
    them untouched and fails to decouple the newcomers; it exists only
    for comparing the two readings of the update rule.
    """
    if existing.k != sys.k:
        raise InvalidInputError(
            f"decoupler set has {existing.k} users, system has {sys.k}"
        )
    for i, w in enumerate(existing.w):
        if w.shape[1] != sys.n_r:
            raise ShapeError(f"decoupler {i} has {w.shape[1]} columns, expected {sys.n_r}")
    new_mats = [as_complex_matrix(h, f"new user {i} channel") for i, h in enumerate(new_channels)]
    if not new_mats:
        return sys, existing
    augmented = SystemChannel(sys.n_r, list(sys.users) + new_mats)

    k = sys.k
    w_all = list(existing.w)
    holders = list(range(k))
    for idx, h_new in enumerate(new_mats):
        donor = holders[0]
        w_new = _annihilate(w_all[donor], [augmented.users[donor]], tol)
        if literal_update:
            if idx >= k:
                raise InvalidInputError(
                    "literal update needs at least as many existing users as inclusions"
                )
            fold_in = augmented.users[idx]
        else:
            fold_in = h_new
        for j in holders:
            w_all[j] = _annihilate(w_all[j], [fold_in], tol)
        w_all.append(w_new)
        holders.append(k + idx)
    return augmented, DecouplerSet(tuple(w_all), method="SD",
                                   row_orthonormal=existing.row_orthonormal)


# ---------------------------------------------------------------------------
# Baselines.

def svd_decoupler(sys: SystemChannel, tol: float = 0.0) -> DecouplerSet:
    """Per-user decouplers from one factorization of each complementary channel.

    This is the correctness oracle for the tree-based construction and
    the expensive baseline of the complexity comparisons: user i's
    decoupler is the left-nullspace basis of the concatenation of all
    other users' channels.  Rows are orthonormal by construction.
    """
    w = []
    for i in range(sys.k):
        basis = left_nullspace_basis(sys.complement(i), tol)
        w.append(basis.basis)
    return DecouplerSet(tuple(w), method="SVD", row_orthonormal=True)


def pinv_decoupler(sys: SystemChannel) -> DecouplerSet:
    """Zero-forcing decouplers from block rows of the channel pseudo-inverse.

    Requires the stacked channel to have full column rank (total streams
    at most n_r).  User i's block satisfies ``W_i @ H_i = I`` as well as
    the usual cross-user annihilation; rows are not orthonormal.
    """
    h = sys.stacked()
    if sys.m_total > sys.n_r or numerical_rank(h) < sys.m_total:
        raise SingularMatrixError(
            f"stacked channel is not full column rank "
            f"({sys.m_total} streams, n_r={sys.n_r})"
        )
    w_full = pseudo_inverse(h)
    w = []
    offset = 0
    for m in sys.m_per_user:
        w.append(np.ascontiguousarray(w_full[offset:offset + m]))
        offset += m
    return DecouplerSet(tuple(w), method="PINV", row_orthonormal=False)


# ---------------------------------------------------------------------------
# Verification.

@dataclass(frozen=True)
class DecouplingReport:
    """Residual interference summary for one decoupler set."""

    max_cross_residual: float
    per_user: tuple[dict, ...]

    def all_full_rank(self) -> bool:
        return all(u["full_rank"] for u in self.per_user)


def verify_decoupling(sys: SystemChannel, dec: DecouplerSet) -> DecouplingReport:
    """Measure how well ``dec`` suppresses cross-user interference.

    For each user the report records the worst relative residual
    ``norm(W_i @ H_k) / norm(H_k)`` over all other users k, and whether
    the effective own channel ``W_i @ H_i`` keeps full stream rank.
    """
    if dec.k != sys.k:
        raise ShapeError(f"decoupler set covers {dec.k} users, system has {sys.k}")
    per_user = []
    worst = 0.0
    for i, w in enumerate(dec.w):
        if w.shape[1] != sys.n_r:
            raise ShapeError(f"decoupler {i} has {w.shape[1]} columns, expected {sys.n_r}")
        cross = 0.0
        for kk, h in enumerate(sys.users):
            if kk == i:
                continue
            cross = max(cross, float(np.linalg.norm(w @ h) / np.linalg.norm(h)))
        m_i = sys.users[i].shape[1]
        eff_rank = numerical_rank(w @ sys.users[i])
        per_user.append(
            {
                "user": i,
                "rows": w.shape[0],
                "cross_residual": cross,
                "effective_rank": eff_rank,
                "streams": m_i,
                "full_rank": eff_rank == m_i,
            }
        )
        worst = max(worst, cross)
    return DecouplingReport(max_cross_residual=worst, per_user=tuple(per_user))
