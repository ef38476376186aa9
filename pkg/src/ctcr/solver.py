"""Batch Gauss-Newton estimation on the space-time grid.

The information matrix of the grid problem is block banded: with nodes
stacked base-to-tip within each timestep, a node only couples to its
arclength neighbours (distance 1) and its time neighbours (distance N).
The matrix therefore has scalar bandwidth 18 (N + 1) - 1 and is factorized
with a band Cholesky for a total cost of O(N^3 K).
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas, lapack

from . import _backend, factors as fac, lie
from .errors import BandViolation, DivergedNaN, NotPositiveDefinite, OutOfInterval, OutOfRange
from .interpolation import (
    interp_state_jacobian,
    interp_weights_time,
    interpolate,
    interpolated_measurement_factor,
)
from .state import STATE_DIM, NodeState, apply_perturbation

log = logging.getLogger(__name__)

D = STATE_DIM
VELOCITY = slice(12, 18)


def _t(M):
    return np.swapaxes(M, -1, -2)


# -- problem description ------------------------------------------------------


@dataclass
class MeasurementSet:
    """Measurements of a single type.

    Attributes
    ----------
    kind : {'pose', 'gyro'}
    n_index : ndarray (M,) of int
        Zero-based grid arclength index of the sensor.
    times : ndarray (M,)
        Timestamps [s].
    values : ndarray (M, 4, 4) or (M, 3)
        Measured poses or angular rates [rad/s].
    R : ndarray (M, 6, 6) or (M, 3, 3)
        Noise covariances.
    """

    kind: str
    n_index: np.ndarray
    times: np.ndarray
    values: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.n_index = np.asarray(self.n_index, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.kind not in ("pose", "gyro"):
            raise ValueError(f"unknown measurement kind {self.kind!r}")

    def __len__(self):
        return len(self.times)

    def subset(self, keep):
        return MeasurementSet(
            self.kind, self.n_index[keep], self.times[keep], self.values[keep], self.R[keep]
        )


@dataclass
class SolverOptions:
    """Gauss-Newton settings.

    Attributes
    ----------
    eps_tol : float
        Stop when the norm of the stacked update falls below this value.
    max_iters : int
    mask_velocity : bool
        Hold all velocities fixed (quasi-static estimation).
    covariance_variant : {'conditional', 'printed'}
        Local prior covariance added at interpolated queries.
    levenberg_marquardt : bool
        Damp steps that increase the cost instead of taking plain steps.
    time_tol : float
        Measurements closer than this to a node time [s] attach directly to
        the node instead of through interpolation.
    """

    eps_tol: float = 0.1
    max_iters: int = 50
    mask_velocity: bool = False
    covariance_variant: str = "conditional"
    levenberg_marquardt: bool = False
    time_tol: float = 1e-9


class _Attached:
    """Measurements bound to grid nodes, with cached interpolation weights."""

    def __init__(self, ms, s, t, N, Q, options):
        self.kind = ms.kind
        times = ms.times
        K = len(t)
        if len(ms) and (
            np.any(times < t[0] - options.time_tol) or np.any(times > t[-1] + options.time_tol)
        ):
            raise OutOfInterval(
                f"{ms.kind} timestamps span [{times.min()}, {times.max()}], "
                f"outside the grid window [{t[0]}, {t[-1]}]"
            )
        if len(ms) and (np.any(ms.n_index < 0) or np.any(ms.n_index >= N)):
            raise OutOfRange(f"{ms.kind} sensor arclength index outside the grid")
        k = np.clip(np.searchsorted(t, times, side="right") - 1, 0, K - 1)
        near_a = np.abs(times - t[k]) <= options.time_tol
        kn = np.minimum(k + 1, K - 1)
        near_b = (~near_a) & (np.abs(times - t[kn]) <= options.time_tol)
        direct = near_a | near_b
        kd = np.where(near_b, kn, k)

        d = direct
        self.direct = ms.subset(d)
        self.direct_idx = kd[d] * N + ms.n_index[d]
        self.direct_W = fac.spd_inverse(self.direct.R, f"{ms.kind} noise") if d.any() else None

        i = ~direct
        self.interp = ms.subset(i)
        self.ia = k[i] * N + ms.n_index[i]
        self.ib = self.ia + N
        if i.any():
            self.weights = interp_weights_time(
                times[i], t[k[i]], t[k[i] + 1], Q, options.covariance_variant
            )

    @property
    def n_interp(self):
        return len(self.interp)


class Problem:
    """Everything the estimator needs apart from the operating point.

    Parameters
    ----------
    s, t : array_like
        Grid arclengths [m] and times [s].
    psd : PsdMatrices
    x0 : NodeState
        Boundary state applied at ``s[0]`` at every timestep.
    measurements : list of MeasurementSet
    boundary_mask : iterable of {'pose', 'strain', 'velocity'}, optional
    options : SolverOptions, optional
    """

    def __init__(self, s, t, psd, x0, measurements=(), boundary_mask=None, options=None):
        self.s = np.asarray(s, dtype=float)
        self.t = np.asarray(t, dtype=float)
        self.psd = psd
        self.x0 = x0
        self.options = options or SolverOptions()
        self.boundary_mask = boundary_mask
        self.has_boundary = boundary_mask is None or len(list(boundary_mask)) > 0
        self.measurements = list(measurements)
        N, K = self.N, self.K
        self.dt = np.diff(self.t)
        self.ds = np.diff(self.s)
        self.Wt = fac.spd_inverse(fac.q_time(self.dt, psd), "time step covariance") if K > 1 else None
        if self.has_boundary:
            rows = fac._mask_rows(boundary_mask)
            self.boundary_rows = rows
            self.W0 = fac.spd_inverse(psd.Q0[np.ix_(rows, rows)], "Q0")
        self.attached = [
            _Attached(ms, self.s, self.t, N, psd, self.options) for ms in self.measurements if len(ms)
        ]

    @property
    def N(self):
        return len(self.s)

    @property
    def K(self):
        return len(self.t)


# -- banded storage -----------------------------------------------------------


@dataclass
class BlockBandedSystem:
    """Lower block-band storage of the symmetric normal equations.

    Attributes
    ----------
    N, K : int
    diag : ndarray (N*K, 18, 18)
        Diagonal blocks.
    lower1 : ndarray (N*K - 1, 18, 18)
        ``lower1[i]`` is block ``(i + 1, i)``; nonzero only for arclength
        neighbours (``(i + 1) % N != 0``).
    lowerN : ndarray (N*K - N, 18, 18)
        ``lowerN[i]`` is block ``(i + N, i)``, time neighbours.
    rhs : ndarray (18*N*K,)
        Right-hand side; the update solves ``A dx = rhs``.
    """

    N: int
    K: int
    diag: np.ndarray
    lower1: np.ndarray
    lowerN: np.ndarray
    rhs: np.ndarray

    @classmethod
    def zeros(cls, N, K):
        m = N * K
        return cls(
            N,
            K,
            np.zeros((m, D, D)),
            np.zeros((max(m - 1, 0), D, D)),
            np.zeros((max(m - N, 0), D, D)),
            np.zeros(m * D),
        )

    @property
    def dim(self):
        return D * self.N * self.K

    @property
    def block_bandwidth(self):
        return self.N

    def add_block(self, i, j, M):
        """Accumulate ``M`` into block ``(i, j)`` of the symmetric matrix."""
        if i < j:
            i, j, M = j, i, M.T
        if i == j:
            self.diag[i] += M
        elif i - j == self.N:
            self.lowerN[j] += M
        elif i - j == 1 and i % self.N != 0:
            self.lower1[j] += M
        else:
            raise BandViolation(
                f"blocks {j} and {i} differ in both arclength and time (N={self.N})"
            )

    def to_dense(self):
        n = self.dim
        A = np.zeros((n, n))
        for i in range(self.N * self.K):
            A[D * i : D * i + D, D * i : D * i + D] = self.diag[i]
        for i in range(len(self.lower1)):
            blk = self.lower1[i]
            A[D * (i + 1) : D * (i + 2), D * i : D * i + D] = blk
            A[D * i : D * i + D, D * (i + 1) : D * (i + 2)] = blk.T
        N = self.N
        for i in range(len(self.lowerN)):
            blk = self.lowerN[i]
            A[D * (i + N) : D * (i + N + 1), D * i : D * i + D] = blk
            A[D * i : D * i + D, D * (i + N) : D * (i + N + 1)] = blk.T
        return A

    def mask_velocity(self):
        """Pin all velocity components: identity rows/columns, zero rhs."""
        self.diag[:, VELOCITY, :] = 0.0
        self.diag[:, :, VELOCITY] = 0.0
        self.diag[:, VELOCITY, VELOCITY] = np.eye(6)
        for band in (self.lower1, self.lowerN):
            band[:, VELOCITY, :] = 0.0
            band[:, :, VELOCITY] = 0.0
        self.rhs.reshape(-1, D)[:, VELOCITY] = 0.0


def assemble(grid, factor_list, N=None, K=None):
    """Sum ``J^T W J`` and ``-J^T W e`` over a list of FactorEvaluation.

    Returns the system and the total cost ``sum 0.5 e^T W e``.
    """
    N = grid.N if grid is not None else N
    K = grid.K if grid is not None else K
    sys = BlockBandedSystem.zeros(N, K)
    cost = 0.0
    m = N * K
    for f in factor_list:
        for i, _ in f.jacobian_blocks:
            if not 0 <= i < m:
                raise OutOfRange(f"factor references node {i}, grid has {m}")
        WJ = [(i, f.inv_cov @ J) for i, J in f.jacobian_blocks]
        We = f.inv_cov @ f.error
        for i, Ji in f.jacobian_blocks:
            sys.rhs[D * i : D * i + D] -= Ji.T @ We
            for j, WJj in WJ:
                if i >= j:
                    sys.add_block(i, j, Ji.T @ WJj)
        cost += 0.5 * float(f.error @ We)
    return sys, cost


# -- linearization ------------------------------------------------------------


def _grid_nodes(grid):
    return grid.flat()


def _prior_terms_numpy(problem, grid, sys):
    N, K = grid.N, grid.K
    cost = 0.0
    diag = sys.diag.reshape(K, N, D, D)
    rhs = sys.rhs.reshape(K, N, D)

    # time factors between (k, n) and (k + 1, n)
    if K > 1:
        xa = NodeState(grid.T[:-1], grid.eps[:-1], grid.varpi[:-1])
        xb = NodeState(grid.T[1:], grid.eps[1:], grid.varpi[1:])
        e, F, E = fac.time_linearize(xa, xb, problem.dt[:, None])
        W = problem.Wt[:, None]
        We = np.einsum("...ij,...j->...i", W, e)
        WF, WE = W @ F, W @ E
        diag[:-1] += _t(F) @ WF
        diag[1:] += _t(E) @ WE
        sys.lowerN[:] += (_t(E) @ WF).reshape(-1, D, D)
        rhs[:-1] -= np.einsum("...ji,...j->...i", F, We)
        rhs[1:] -= np.einsum("...ji,...j->...i", E, We)
        cost += 0.5 * float(np.sum(e * We))

    # arclength factors between (k, n) and (k, n + 1)
    xa = NodeState(grid.T[:, :-1], grid.eps[:, :-1], grid.varpi[:, :-1])
    xb = NodeState(grid.T[:, 1:], grid.eps[:, 1:], grid.varpi[:, 1:])
    e, F, E = fac.space_linearize(xa, xb, problem.ds)
    W = fac.spd_inverse(
        fac.q_space(problem.ds, xa.varpi, problem.psd, check=False), "arclength step covariance"
    )
    We = np.einsum("...ij,...j->...i", W, e)
    WF, WE = W @ F, W @ E
    diag[:, :-1] += _t(F) @ WF
    diag[:, 1:] += _t(E) @ WE
    l1 = np.zeros((K, N, D, D))
    l1[:, :-1] = _t(E) @ WF
    sys.lower1[:] += l1.reshape(-1, D, D)[: N * K - 1]
    rhs[:, :-1] -= np.einsum("...ji,...j->...i", F, We)
    rhs[:, 1:] -= np.einsum("...ji,...j->...i", E, We)
    cost += 0.5 * float(np.sum(e * We))
    return cost


def _prior_terms_numba(problem, grid, sys):
    from . import _jit

    N, K = grid.N, grid.K
    T = np.ascontiguousarray(grid.T.reshape(-1, 4, 4))
    eps = np.ascontiguousarray(grid.eps.reshape(-1, 6))
    varpi = np.ascontiguousarray(grid.varpi.reshape(-1, 6))
    cost = 0.0
    if K > 1:
        cost += _jit.time_prior_normal_equations(
            T, eps, varpi, N, problem.dt, problem.Wt, sys.diag, sys.lowerN, sys.rhs
        )
    Ws = fac.spd_inverse(
        fac.q_space(problem.ds, grid.varpi[:, :-1], problem.psd, check=False),
        "arclength step covariance",
    )
    cost += _jit.space_prior_normal_equations(
        T, eps, varpi, N, problem.ds, np.ascontiguousarray(Ws), sys.diag, sys.lower1, sys.rhs
    )
    if np.isnan(cost):
        # the kernels bail out on a relative rotation near pi; let the
        # numpy path raise the descriptive error
        return _prior_terms_numpy(problem, grid, BlockBandedSystem.zeros(N, K))
    return cost


def _boundary_terms(problem, grid, sys):
    if not problem.has_boundary:
        return 0.0
    N = grid.N
    x = NodeState(grid.T[:, 0], grid.eps[:, 0], grid.varpi[:, 0])
    x0 = problem.x0
    e = fac.boundary_error(x, x0, problem.boundary_mask)
    G = fac.boundary_jacobian(x, x0, problem.boundary_mask)
    W = problem.W0
    We = e @ W.T
    idx = np.arange(grid.K) * N
    sys.diag[idx] += _t(G) @ W @ G
    sys.rhs.reshape(-1, D)[idx] -= np.einsum("kji,kj->ki", G, We)
    return 0.5 * float(np.sum(e * We))


def _scatter(sys, idx, blocks, vecs):
    np.add.at(sys.diag, idx, blocks)
    np.add.at(sys.rhs.reshape(-1, D), idx, vecs)


def _measurement_terms(problem, grid, sys):
    nodes = _grid_nodes(grid)
    cost = 0.0
    for at in problem.attached:
        ms = at.direct
        if len(ms):
            x = nodes[at.direct_idx]
            if at.kind == "pose":
                e = lie.log_rel(x.T, ms.values)
                G = fac.pose_meas_jacobian(ms.values, x)
            else:
                e = ms.values - x.varpi[:, 3:]
                G = np.broadcast_to(fac.gyro_meas_jacobian(), (len(ms), 3, D))
            W = at.direct_W
            We = np.einsum("mij,mj->mi", W, e)
            _scatter(sys, at.direct_idx, _t(G) @ W @ G, -np.einsum("mji,mj->mi", G, We))
            cost += 0.5 * float(np.sum(e * We))
        ms = at.interp
        if len(ms):
            xa, xb = nodes[at.ia], nodes[at.ib]
            w = at.weights
            xq = interpolate(xa, xb, w)
            M_a, M_b, Gam = interp_state_jacobian(xa, xb, w, return_gamma=True)
            if at.kind == "pose":
                e = lie.log_rel(xq.T, ms.values)
                G = fac.pose_meas_jacobian(ms.values, xq)
            else:
                e = ms.values - xq.varpi[:, 3:]
                G = np.broadcast_to(fac.gyro_meas_jacobian(), (len(ms), 3, D))
            GG = G @ Gam
            W = fac.spd_inverse(ms.R + GG @ w.P_check @ _t(GG), f"{at.kind} inflated noise")
            Ja, Jb = G @ M_a, G @ M_b
            We = np.einsum("mij,mj->mi", W, e)
            WJa, WJb = W @ Ja, W @ Jb
            _scatter(sys, at.ia, _t(Ja) @ WJa, -np.einsum("mji,mj->mi", Ja, We))
            _scatter(sys, at.ib, _t(Jb) @ WJb, -np.einsum("mji,mj->mi", Jb, We))
            np.add.at(sys.lowerN, at.ia, _t(Jb) @ WJa)
            cost += 0.5 * float(np.sum(e * We))
    return cost


def linearize(problem, grid):
    """Normal equations of all factors at the operating point ``grid``.

    Returns ``(system, cost)``.
    """
    sys = BlockBandedSystem.zeros(grid.N, grid.K)
    if _backend.get_backend() == "numba":
        cost = _prior_terms_numba(problem, grid, sys)
    else:
        cost = _prior_terms_numpy(problem, grid, sys)
    cost += _boundary_terms(problem, grid, sys)
    cost += _measurement_terms(problem, grid, sys)
    if problem.options.mask_velocity:
        sys.mask_velocity()
    return sys, cost


def build_factors(problem, grid):
    """All factors as FactorEvaluation objects (reference path, slow)."""
    N, K = grid.N, grid.K
    Q = problem.psd
    out = []
    node = grid.node
    for k in range(K):
        if problem.has_boundary:
            out.append(fac.boundary_factor(node(0, k), problem.x0, Q.Q0, k * N, problem.boundary_mask))
        for n in range(N - 1):
            out.append(
                fac.space_factor(node(n, k), node(n + 1, k), problem.ds[n], Q, k * N + n, k * N + n + 1)
            )
        if k + 1 < K:
            for n in range(N):
                out.append(
                    fac.time_factor(
                        node(n, k), node(n, k + 1), problem.dt[k], Q, k * N + n, (k + 1) * N + n
                    )
                )
    nodes = grid.flat()
    for at in problem.attached:
        ms = at.direct
        for j in range(len(ms)):
            i = int(at.direct_idx[j])
            if at.kind == "pose":
                out.append(fac.pose_factor(ms.values[j], nodes[i], ms.R[j], i))
            else:
                out.append(fac.gyro_factor(ms.values[j], nodes[i], ms.R[j], i))
        ms = at.interp
        for j in range(len(ms)):
            w = at.weights
            wj = type(w)(w.Lambda[j], w.Psi[j], w.P_check[j], w.alpha[j], w.delta[j])
            ia, ib = int(at.ia[j]), int(at.ib[j])
            out.append(
                interpolated_measurement_factor(
                    at.kind, ms.values[j], nodes[ia], nodes[ib], wj, ms.R[j], ia, ib
                )
            )
    return out


# -- factorization ------------------------------------------------------------


def _band_pairs(lo, hi):
    a, b = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    keep = (a - b >= lo) & (a - b <= hi)
    return a[keep], b[keep]


class BandedCholesky:
    """Cholesky factor ``A = L L^T`` of the block-banded system.

    The factorization runs in LAPACK symmetric band storage with scalar
    bandwidth ``18 (N + 1) - 1``, which covers the time-neighbour blocks;
    Cholesky fill stays inside this band, so the cost is O(N^3 K).
    """

    def __init__(self, sys):
        N, K = sys.N, sys.K
        self.N, self.K, self.m = N, K, D * N
        self.kd = D * (N + 1) - 1
        n = D * N * K
        ab = np.zeros((self.kd + 1, n), order="F")
        nb = N * K
        for a, b in zip(*_band_pairs(0, D)):
            ab[a - b, b : n : D] = sys.diag[:, a, b]
        if nb > 1:
            for a, b in zip(*_band_pairs(-D, D)):
                ab[D + a - b, b : n - D : D] = sys.lower1[:, a, b]
        if K > 1:
            for a, b in zip(*_band_pairs(-D, D)):
                ab[D * N + a - b, b : n - D * N : D] = sys.lowerN[:, a, b]
        c, info = lapack.dpbtrf(ab, lower=1, overwrite_ab=1)
        if info != 0:
            node = (info - 1) // D
            raise NotPositiveDefinite(
                f"information matrix is not positive definite (fails at node {node}, "
                f"timestep {node // N}); the problem is under-constrained, "
                "check that a boundary factor is configured"
            )
        self.ab = c

    def solve(self, rhs):
        x, info = lapack.dpbtrs(self.ab, np.asarray(rhs, dtype=float), lower=1)
        if info != 0:
            raise NotPositiveDefinite("band solve failed")
        return x

    def _dense_block(self, r0, c0, m):
        """Dense copy of ``L[r0:r0+m, c0:c0+m]`` from band storage."""
        i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        d = (r0 - c0) + i - j
        ok = (d >= 0) & (d <= self.kd)
        out = np.zeros((m, m))
        out[ok] = self.ab[d[ok], c0 + j[ok]]
        return out

    def covariance(self):
        """Band-restricted blocks of ``A^-1``.

        With timestep super-blocks ``L_k`` (diagonal) and ``B_k`` (below it)
        of the factor and ``G_k = B_k L_k^-1``, the backward recursion is
        ``Sigma_{k+1,k} = -Sigma_{k+1,k+1} G_k`` and
        ``Sigma_kk = (L_k L_k^T)^-1 - G_k^T Sigma_{k+1,k}``.
        """
        N, K, m = self.N, self.K, self.m
        node = np.empty((K, N, D, D))
        space = np.zeros((K, N, D, D))
        tcross = np.empty((max(K - 1, 0), N, D, D))
        ar = np.arange(N)
        il = np.tril_indices(m, -1)

        def store(k, S):
            S4 = S.reshape(N, D, N, D)
            node[k] = S4[ar, :, ar, :]
            space[k, :-1] = S4[ar[1:], :, ar[:-1], :]

        def chol_inverse(Lk):
            P, info = lapack.dpotri(Lk, lower=1)
            if info != 0:
                raise NotPositiveDefinite("singular Cholesky block")
            P[il[1], il[0]] = P[il]
            return P

        Lk = self._dense_block((K - 1) * m, (K - 1) * m, m)
        Snext = chol_inverse(Lk)
        store(K - 1, Snext)
        for k in range(K - 2, -1, -1):
            Lk = self._dense_block(k * m, k * m, m)
            Bk = self._dense_block((k + 1) * m, k * m, m)
            G = blas.dtrsm(1.0, Lk, Bk, side=1, lower=1)
            Sc = -(Snext @ G)
            Sk = chol_inverse(Lk) - G.T @ Sc
            Sk = 0.5 * (Sk + Sk.T)
            tcross[k] = Sc.reshape(N, D, N, D)[ar, :, ar, :]
            store(k, Sk)
            Snext = Sk
        return PosteriorCovariance(
            N,
            K,
            node.reshape(-1, D, D),
            space.reshape(-1, D, D)[: N * K - 1],
            tcross.reshape(-1, D, D),
        )


def solve_banded(sys, return_factor=False):
    """Solve ``A dx = rhs`` for the stacked perturbation ``dx``."""
    chol = BandedCholesky(sys)
    dx = chol.solve(sys.rhs)
    return (dx, chol) if return_factor else dx


@dataclass
class PosteriorCovariance:
    """Band of the posterior covariance.

    Attributes
    ----------
    node : ndarray (N*K, 18, 18)
        Marginal covariance of each node.
    space : ndarray (N*K - 1, 18, 18)
        ``space[i]`` is the cross-covariance block ``(i + 1, i)``; zero where
        ``i + 1`` starts a new timestep.
    time : ndarray (N*K - N, 18, 18)
        ``time[i]`` is the cross-covariance block ``(i + N, i)``.
    """

    N: int
    K: int
    node: np.ndarray
    space: np.ndarray
    time: np.ndarray

    def block(self, i, j):
        if i < j:
            return self.block(j, i).T
        if i == j:
            return self.node[i]
        if i - j == self.N:
            return self.time[j]
        if i - j == 1 and i % self.N != 0:
            return self.space[j]
        raise BandViolation(f"covariance block ({i}, {j}) is outside the stored band")


def extract_covariance(sys_or_factor):
    """Posterior covariance blocks from a system or its factorization."""
    chol = sys_or_factor
    if isinstance(sys_or_factor, BlockBandedSystem):
        chol = BandedCholesky(sys_or_factor)
    return chol.covariance()


# -- Gauss-Newton -------------------------------------------------------------


@dataclass
class SolveReport:
    """Outcome of a Gauss-Newton run.

    Attributes
    ----------
    iterations : int
    final_step_norm : float
    converged : bool
    cost_trace : list of float
        Cost at each linearization point.
    step_trace : list of float
    wall_time : float
        Seconds spent in the solve.
    """

    iterations: int = 0
    final_step_norm: float = float("inf")
    converged: bool = False
    cost_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    wall_time: float = 0.0
    factorization: object = field(default=None, repr=False)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "final_step_norm": self.final_step_norm,
            "converged": self.converged,
            "cost_trace": list(self.cost_trace),
            "step_trace": list(self.step_trace),
            "wall_time": self.wall_time,
        }


def _damped(sys, lam):
    out = BlockBandedSystem(sys.N, sys.K, sys.diag.copy(), sys.lower1, sys.lowerN, sys.rhs)
    d = np.einsum("mii->mi", out.diag)
    d += lam * np.maximum(d, 1e-12)
    return out


def evaluate_cost(problem, grid):
    return linearize(problem, grid)[1]


def gauss_newton(grid, problem, options=None, callback=None):
    """Iterate Gauss-Newton from the operating point ``grid``.

    Parameters
    ----------
    grid : StateGrid
        Initial operating point; not modified.
    problem : Problem
    options : SolverOptions, optional
        Defaults to ``problem.options``.
    callback : callable, optional
        Called as ``callback(iteration, grid, cost, step_norm)``.

    Returns
    -------
    grid : StateGrid
    report : SolveReport
        ``report.factorization`` holds the Cholesky factor of the last
        linearization, for covariance extraction.
    """
    opts = options or problem.options
    report = SolveReport()
    t0 = time.perf_counter()
    grid = grid.copy()
    lam = 1e-4
    chol = None
    for it in range(opts.max_iters):
        sys, cost = linearize(problem, grid)
        if not np.isfinite(cost):
            raise DivergedNaN(f"cost became non-finite at iteration {it}")
        report.cost_trace.append(cost)
        if opts.levenberg_marquardt:
            while True:
                dx, chol = solve_banded(_damped(sys, lam), return_factor=True)
                trial = apply_perturbation(grid, dx)
                try:
                    new_cost = evaluate_cost(problem, trial)
                except (ArithmeticError, ValueError):
                    new_cost = np.inf
                if new_cost <= cost or lam > 1e8:
                    lam = max(lam / 10.0, 1e-12)
                    break
                lam *= 10.0
            grid = trial
        else:
            dx, chol = solve_banded(sys, return_factor=True)
            if not np.all(np.isfinite(dx)):
                raise DivergedNaN(f"non-finite update at iteration {it}")
            grid = apply_perturbation(grid, dx, in_place=True)
        step = float(np.linalg.norm(dx))
        report.step_trace.append(step)
        report.iterations = it + 1
        report.final_step_norm = step
        log.debug("iteration %d cost %.6e step %.3e", it, cost, step)
        if callback is not None:
            callback(it, grid, cost, step)
        if step < opts.eps_tol:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - t0
    report.factorization = chol
    return grid, report
