"""Spectra of leader-follower matrices and the switching instability budget.

Every leader-follower matrix ``H = L + Delta`` of an undirected graph is
symmetric PSD, and its nonzero eigenvalues never drop below
``lambda_H(N) = 4 / (N (N^2 - N + 4))``. Kernel detection relies on that gap:
an eigenvalue below ``lambda_H(N) / 2`` is treated as exactly zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .netgraph import (
    FollowerTopology,
    SwitchingSchedule,
    leader_follower_matrix,
    validate_schedule,
)

JACOBI_TOL = 1e-12
SYMMETRY_TOL = 1e-10
MAX_SWEEPS = 100


def jacobi_eigh(S, tol=JACOBI_TOL, max_sweeps=MAX_SWEEPS):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix or a stack of them.

    Sweeps row by row over the strict upper triangle, annihilating each
    off-diagonal entry with a plane rotation, until the off-diagonal Frobenius
    mass of every matrix falls below ``tol * ||S||_F``. A leading batch shape
    ``(..., n, n)`` is rotated in lockstep.

    Returns
    -------
    w : (..., n) ndarray
        Eigenvalues in ascending order.
    V : (..., n, n) ndarray
        Orthonormal eigenvectors as columns, ``S ~= V diag(w) V^T``.
    """
    A = np.array(S, dtype=float)
    n = A.shape[-1]
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    target = tol * np.linalg.norm(A, axis=(-2, -1))
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(A[..., iu[0], iu[1]] ** 2, axis=-1))
        if np.all(off <= target):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[..., p, q]
                nz = apq != 0.0
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    theta = (A[..., q, q] - A[..., p, p]) / (2.0 * apq)
                    t = 1.0 / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(nz, np.where(theta < 0.0, -t, t), 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c_ = c[..., None]
                s_ = s[..., None]
                colp = A[..., :, p].copy()
                colq = A[..., :, q].copy()
                A[..., :, p] = c_ * colp - s_ * colq
                A[..., :, q] = s_ * colp + c_ * colq
                rowp = A[..., p, :].copy()
                rowq = A[..., q, :].copy()
                A[..., p, :] = c_ * rowp - s_ * rowq
                A[..., q, :] = s_ * rowp + c_ * rowq
                A[..., p, q] = np.where(nz, 0.0, A[..., p, q])
                A[..., q, p] = A[..., p, q]
                vp = V[..., :, p].copy()
                vq = V[..., :, q].copy()
                V[..., :, p] = c_ * vp - s_ * vq
                V[..., :, q] = s_ * vp + c_ * vq
    else:
        raise ArithmeticError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[..., None, :], axis=-1)
    # Deterministic sign: largest-magnitude entry of each eigenvector positive.
    pivots = np.argmax(np.abs(V), axis=-2)[..., None, :]
    V *= np.where(np.take_along_axis(V, pivots, axis=-2) < 0, -1.0, 1.0)
    return w, V


def _check_symmetric(H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {H.shape}")
    asym = np.max(np.abs(H - H.T)) if H.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(H))):
        raise ValidationError(f"matrix is not symmetric (max |H - H^T| = {asym:.3g})")
    return 0.5 * (H + H.T)


def spectral_norm(M) -> float:
    """Largest singular value, from the Jacobi spectrum of ``M^T M``."""
    M = np.asarray(M, dtype=float)
    if not M.any():
        return 0.0
    w, _ = jacobi_eigh(M.T @ M)
    return math.sqrt(max(0.0, w[-1]))


@dataclass(frozen=True)
class SpectralSplit:
    """Kernel/range decomposition of a leader-follower matrix.

    ``kernel_basis`` (Q) and ``range_basis`` (Gamma) together form an
    orthonormal eigenbasis; ``projector = Q Q^T`` projects onto ``ker H``.
    """

    eigenvalues: np.ndarray
    kernel_basis: np.ndarray
    range_basis: np.ndarray
    projector: np.ndarray
    nullity: int

    @property
    def range_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.nullity :]

    @property
    def basis(self) -> np.ndarray:
        return np.hstack([self.kernel_basis, self.range_basis])


def sym_eig(H, zero_tol=None) -> SpectralSplit:
    """Eigendecomposition of a symmetric PSD matrix split at the zero eigenvalue.

    ``zero_tol`` defaults to ``lambda_H(N) / 2``, which is safe for any
    leader-follower matrix because of the spectral gap above zero.
    """
    H = _check_symmetric(H)
    n = H.shape[0]
    if zero_tol is None:
        zero_tol = 0.5 * lambda_H(n)
    w, V = jacobi_eigh(H)
    nullity = int(np.count_nonzero(w < zero_tol))
    Q = V[:, :nullity]
    Gamma = V[:, nullity:]
    P = Q @ Q.T if nullity else np.zeros((n, n))
    return SpectralSplit(w, Q, Gamma, P, nullity)


def topology_split(topology: FollowerTopology) -> SpectralSplit:
    return sym_eig(leader_follower_matrix(topology))


def _phase_projectors(schedule):
    cache = {}
    out = []
    for k, _ in schedule.phases:
        if k not in cache:
            cache[k] = topology_split(schedule.topologies[k]).projector
        out.append(cache[k])
    return out


def window_projector_product(schedule: SwitchingSchedule, window_index: int) -> np.ndarray:
    """``P_last ... P_first`` over the phases of one window (later phases on the left)."""
    windows = schedule.windows()
    if not 0 <= window_index < len(windows):
        raise IndexError(f"window {window_index} out of range (schedule has {len(windows)})")
    projectors = _phase_projectors(schedule)
    M = np.eye(schedule.n_followers)
    for j in windows[window_index]:
        M = projectors[j] @ M
    return M


def window_chain_product(schedule: SwitchingSchedule, start_window: int, ell: int) -> np.ndarray:
    """Projector product over ``ell`` consecutive windows, wrapping around the period."""
    n_windows = len(schedule.windows())
    M = np.eye(schedule.n_followers)
    for k in range(start_window, start_window + ell):
        M = window_projector_product(schedule, k % n_windows) @ M
    return M


def window_product_norms(schedule: SwitchingSchedule) -> list[float]:
    return [
        spectral_norm(window_projector_product(schedule, k))
        for k in range(len(schedule.windows()))
    ]


def delta(schedule: SwitchingSchedule) -> float:
    """Largest spectral norm of a window projector product over one period.

    Raises :class:`ValidationError` when the schedule fails joint connectivity,
    since the bound ``delta < 1`` then no longer holds.
    """
    report = validate_schedule(schedule)
    if not report.valid:
        raise ValidationError("invalid schedule: " + "; ".join(report.messages()))
    return max(window_product_norms(schedule))


def min_nonzero_eigenvalue(schedule: SwitchingSchedule) -> float:
    """Smallest nonzero eigenvalue of any leader-follower matrix the schedule visits."""
    values = [
        split.range_eigenvalues.min()
        for split in (topology_split(t) for t in schedule.topologies)
        if split.nullity < schedule.n_followers
    ]
    if not values:
        raise ValidationError("no topology in the schedule has a nonzero eigenvalue")
    return float(min(values))


def fiedler_lower_bound(N: int) -> float:
    """Lower bound ``4 / (N (N - 1))`` on nonzero Laplacian eigenvalues of a connected graph."""
    if N < 2:
        raise ValueError(f"fiedler_lower_bound needs N >= 2, got {N}")
    return 4.0 / (N * (N - 1))


def lambda_H(N: int) -> float:
    """Uniform floor ``4 / (N (N^2 - N + 4))`` on nonzero eigenvalues of ``L + Delta``."""
    if N < 1:
        raise ValueError(f"lambda_H needs N >= 1, got {N}")
    return 4.0 / (N * (N * N - N + 4))


def _leaderless_components(adj, links):
    """Number of connected components that contain no leader-linked follower."""
    n = len(links)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        parent[find(i)] = find(j)
    roots = {find(i) for i in range(n)}
    anchored = {find(i) for i in range(n) if links[i]}
    return len(roots - anchored)


@dataclass
class FloorWitness:
    N: int
    adjacency: np.ndarray
    leader_links: np.ndarray
    eigenvalue: float
    floor: float


def verify_lambda_H_floor(N_max: int, scale: float = 1.0, N_min: int = 1):
    """Exhaustively check ``min nonzero eig(L + Delta) >= scale * lambda_H(N)``.

    Enumerates every undirected graph on ``N`` followers and every 0/1 leader
    diagonal for ``N_min <= N <= N_max``. The kernel dimension is taken from
    the graph itself (components not touching the leader), so the check does
    not depend on an eigenvalue threshold.

    Returns
    -------
    (bool, FloorWitness or None)
        ``(True, None)`` when the floor holds; otherwise the first violation.
    """
    if N_max > 5:
        raise ValueError("enumeration budget is N_max <= 5")
    for N in range(max(1, N_min), N_max + 1):
        floor = scale * lambda_H(N)
        pairs = list(itertools.combinations(range(N), 2))
        for mask in range(1 << len(pairs)):
            adj = np.zeros((N, N))
            for b, (i, j) in enumerate(pairs):
                if mask >> b & 1:
                    adj[i, j] = adj[j, i] = 1.0
            lap = np.diag(adj.sum(axis=1)) - adj
            diagonals = np.array(list(itertools.product((0.0, 1.0), repeat=N)))
            stack = lap + diagonals[:, None, :] * np.eye(N)
            spectra, _ = jacobi_eigh(stack)
            for links, w in zip(diagonals, spectra):
                k = _leaderless_components(adj, links)
                if k and abs(w[k - 1]) > 1e-9:
                    raise ArithmeticError(
                        f"kernel dimension mismatch at N={N}: expected {k} zero eigenvalues"
                    )
                if k < N and w[k] < floor - 1e-12:
                    return False, FloorWitness(N, adj, links, float(w[k]), floor)
    return True, None
