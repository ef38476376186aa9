"""Node states and the N x K estimation grid."""

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errors import BadDimensions, DimensionMismatch, OutOfRange

STATE_DIM = 18

# poses are re-projected onto SE(3) after this many perturbation updates
REORTHONORMALIZE_EVERY = 20


@dataclass
class NodeState:
    """Pose, strain and body velocity at one (s, t) location.

    Attributes may carry leading batch dimensions, in which case the object
    describes a whole set of nodes at once.

    Attributes
    ----------
    T : ndarray (..., 4, 4)
        Pose ``T_bi`` (inertial frame seen from the body frame).
    eps : ndarray (..., 6)
        Strain ``[shear/elongation; curvature/twist]``.
    varpi : ndarray (..., 6)
        Body velocity ``[linear; angular]``.
    """

    T: np.ndarray
    eps: np.ndarray
    varpi: np.ndarray

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)
        self.varpi = np.asarray(self.varpi, dtype=float)

    @classmethod
    def identity(cls):
        return cls(np.eye(4), np.zeros(6), np.zeros(6))

    def __getitem__(self, idx):
        return NodeState(self.T[idx], self.eps[idx], self.varpi[idx])

    def copy(self):
        return NodeState(self.T.copy(), self.eps.copy(), self.varpi.copy())

    def perturbed(self, d):
        """Return ``exp(dt^) T, eps + de, varpi + dw`` for an 18-vector ``d``."""
        d = np.asarray(d, dtype=float)
        return NodeState(
            lie.exp_se3(d[..., :6]) @ self.T, self.eps + d[..., 6:12], self.varpi + d[..., 12:18]
        )


@dataclass
class StateGrid:
    """States on an N (arclength) by K (time) lattice.

    Arrays are stored time-major, ``T[k, n]``, so that reshaping to
    ``(K * N, ...)`` gives the stacking order of the estimator: all nodes of
    the first timestep from base to tip, then the second timestep, and so on.

    Parameters
    ----------
    s : array_like (N,)
        Strictly increasing arclengths [m].
    t : array_like (K,)
        Strictly increasing times [s].
    T : ndarray (K, N, 4, 4)
    eps : ndarray (K, N, 6)
    varpi : ndarray (K, N, 6)
    """

    s: np.ndarray
    t: np.ndarray
    T: np.ndarray
    eps: np.ndarray
    varpi: np.ndarray
    n_updates: int = field(default=0)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        N, K = len(self.s), len(self.t)
        if N < 2 or K < 1:
            raise BadDimensions(f"grid needs N >= 2 and K >= 1, got N={N}, K={K}")
        if np.any(np.diff(self.s) <= 0) or np.any(np.diff(self.t) <= 0):
            raise BadDimensions("s and t must be strictly increasing")
        self.T = np.asarray(self.T, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)
        self.varpi = np.asarray(self.varpi, dtype=float)
        if (
            self.T.shape != (K, N, 4, 4)
            or self.eps.shape != (K, N, 6)
            or self.varpi.shape != (K, N, 6)
        ):
            raise BadDimensions(
                f"state arrays do not match a {N}x{K} grid: "
                f"{self.T.shape}, {self.eps.shape}, {self.varpi.shape}"
            )

    @property
    def N(self):
        return len(self.s)

    @property
    def K(self):
        return len(self.t)

    @property
    def n_nodes(self):
        return self.N * self.K

    def node(self, n, k):
        """State at zero-based arclength index ``n`` and time index ``k``."""
        return NodeState(self.T[k, n], self.eps[k, n], self.varpi[k, n])

    def flat(self):
        """All nodes as one batched NodeState in stacking order."""
        m = self.n_nodes
        return NodeState(
            self.T.reshape(m, 4, 4), self.eps.reshape(m, 6), self.varpi.reshape(m, 6)
        )

    def copy(self):
        return StateGrid(
            self.s.copy(),
            self.t.copy(),
            self.T.copy(),
            self.eps.copy(),
            self.varpi.copy(),
            self.n_updates,
        )


def initialize_straight(N, K, length, dt, axis=0, t0=0.0):
    """Straight rod at rest, ``T(s) = exp(s e^)`` with ``eps = e``.

    Parameters
    ----------
    N, K : int
        Number of arclength and time nodes.
    length : float
        Rod length [m]; nodes are evenly spaced on ``[0, length]``.
    dt : float
        Node period [s].
    axis : int
        Index of the linear strain component along the backbone.
    """
    if N < 2 or K < 1 or not length > 0 or not dt > 0:
        raise BadDimensions(f"invalid grid N={N}, K={K}, length={length}, dt={dt}")
    s = np.linspace(0.0, length, N)
    t = t0 + dt * np.arange(K)
    return straight_grid(s, t, axis)


def straight_grid(s, t, axis=0):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    e = np.zeros(6)
    e[axis] = 1.0
    T = np.broadcast_to(lie.exp_se3(s[:, None] * e), (len(t), len(s), 4, 4)).copy()
    eps = np.broadcast_to(e, (len(t), len(s), 6)).copy()
    varpi = np.zeros((len(t), len(s), 6))
    return StateGrid(s, t, T, eps, varpi)


def apply_perturbation(grid, d, in_place=False):
    """Apply the stacked perturbation ``d`` (length 18*N*K) to ``grid``.

    Poses update on the left, ``T <- exp(dt^) T``; strain and velocity
    additively. Rotation blocks are re-projected onto SO(3) every
    ``REORTHONORMALIZE_EVERY`` updates.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (STATE_DIM * grid.n_nodes,):
        raise DimensionMismatch(
            f"perturbation has shape {d.shape}, expected ({STATE_DIM * grid.n_nodes},)"
        )
    out = grid if in_place else grid.copy()
    d = d.reshape(grid.K, grid.N, STATE_DIM)
    out.T = lie.exp_se3(d[..., :6]) @ out.T
    out.eps = out.eps + d[..., 6:12]
    out.varpi = out.varpi + d[..., 12:]
    out.n_updates += 1
    if out.n_updates % REORTHONORMALIZE_EVERY == 0:
        out.T = lie.project_to_se3(out.T)
    return out


def flat_index(n, k, N, K=None):
    """Block index of node ``(n, k)`` in the stacked state.

    ``n`` and ``k`` are one-based grid labels (``1..N``, ``1..K``), matching
    the stacking ``x_{1,1}, x_{2,1}, ..., x_{N,K}``.
    """
    if not 1 <= n <= N or k < 1 or (K is not None and k > K):
        raise OutOfRange(f"node ({n}, {k}) outside a {N}x{K if K else '?'} grid")
    return (k - 1) * N + (n - 1)


def node_of(index, N, K=None):
    """Inverse of ``flat_index``; returns one-based ``(n, k)``."""
    if index < 0 or (K is not None and index >= N * K):
        raise OutOfRange(f"flat index {index} outside the grid")
    k, n = divmod(index, N)
    return n + 1, k + 1
