"""Prior and measurement factors.

Every error and Jacobian function broadcasts over leading batch dimensions
of its NodeState arguments. Jacobians are taken with respect to the
perturbation ``x <- (exp(dt^) T, eps + de, varpi + dw)`` of each node.
"""

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errors import EmptyMask, NotPositiveDefinite
from .state import STATE_DIM

I3 = np.eye(3)
I6 = np.eye(6)

MASK_BLOCKS = ("pose", "strain", "velocity")


def _check_pd(M, name):
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{name} is not positive definite") from None


@dataclass
class PsdMatrices:
    """Prior noise parameters.

    Attributes
    ----------
    Q0 : ndarray (18, 18)
        Covariance of the base boundary factor.
    Q1 : ndarray (6, 6)
        PSD of the white noise on acceleration (velocity rate in time).
    Q2 : ndarray (6, 6)
        PSD of the strain gradient along arclength.
    Q3 : ndarray (6, 6)
        PSD of the strain rate in time (and velocity gradient in arclength).
    strain_psd : {'q2', 'q1'}
        Which PSD drives the strain blocks of the arclength step covariance.
    """

    Q0: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray
    strain_psd: str = "q2"

    def __post_init__(self):
        for name in ("Q0", "Q1", "Q2", "Q3"):
            M = np.asarray(getattr(self, name), dtype=float)
            want = (18, 18) if name == "Q0" else (6, 6)
            if M.shape != want:
                raise ValueError(f"{name} must be {want}, got {M.shape}")
            _check_pd(M, name)
            setattr(self, name, M)
        if self.strain_psd not in ("q1", "q2"):
            raise ValueError(f"strain_psd must be 'q1' or 'q2', got {self.strain_psd!r}")

    @classmethod
    def from_diagonals(cls, q0, q1, q2, q3, strain_psd="q2"):
        return cls(np.diag(q0), np.diag(q1), np.diag(q2), np.diag(q3), strain_psd)

    @property
    def Qx(self):
        return self.Q2 if self.strain_psd == "q2" else self.Q1


@dataclass
class MeasurementNoise:
    R_pose: np.ndarray
    R_gyro: np.ndarray

    def __post_init__(self):
        self.R_pose = np.asarray(self.R_pose, dtype=float)
        self.R_gyro = np.asarray(self.R_gyro, dtype=float)
        _check_pd(self.R_pose, "R_pose")
        _check_pd(self.R_gyro, "R_gyro")


@dataclass
class FactorEvaluation:
    """Linearized factor: residual, Jacobian blocks and residual weight.

    Attributes
    ----------
    error : ndarray (m,)
    jacobian_blocks : list of (int, ndarray (m, 18))
        Zero-based flat node index and the Jacobian with respect to it.
    inv_cov : ndarray (m, m)
    """

    error: np.ndarray
    jacobian_blocks: list = field(default_factory=list)
    inv_cov: np.ndarray = None

    def cost(self):
        return 0.5 * float(self.error @ self.inv_cov @ self.error)


def spd_inverse(M, name="covariance"):
    """Inverse of a symmetric positive definite matrix (batched)."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{name} is not positive definite") from None
    Li = np.linalg.inv(L)
    return np.swapaxes(Li, -1, -2) @ Li


# -- time prior ---------------------------------------------------------------


def time_error(x_a, x_b, dt):
    """Residual of the constant-velocity step from ``x_a`` to ``x_b``."""
    dt = np.asarray(dt, dtype=float)[..., None]
    xi = lie.log_rel(x_a.T, x_b.T)
    return np.concatenate(
        [xi - dt * x_a.varpi, x_b.eps - x_a.eps, x_b.varpi - x_a.varpi], axis=-1
    )


def _pose_blocks(xi, T_a, T_b):
    Ji = lie.left_jacobian_inv(xi)
    Ad = lie.adjoint(T_b @ lie.inv_se3(T_a))
    return Ji, Ad


def time_linearize(x_a, x_b, dt):
    """Return ``(e, F, E)``: residual and Jacobians w.r.t. ``x_a``, ``x_b``."""
    dt = np.asarray(dt, dtype=float)[..., None]
    xi = lie.log_rel(x_a.T, x_b.T)
    e = np.concatenate([xi - dt * x_a.varpi, x_b.eps - x_a.eps, x_b.varpi - x_a.varpi], -1)
    Ji, Ad = _pose_blocks(xi, x_a.T, x_b.T)
    shape = xi.shape[:-1] + (STATE_DIM, STATE_DIM)
    F = np.zeros(shape)
    E = np.zeros(shape)
    F[..., :6, :6] = -Ji @ Ad
    F[..., :6, 12:] = -dt[..., None] * I6
    F[..., 6:12, 6:12] = -I6
    F[..., 12:, 12:] = -I6
    E[..., :6, :6] = Ji
    E[..., 6:12, 6:12] = I6
    E[..., 12:, 12:] = I6
    return e, F, E


def time_jacobians(x_a, x_b, dt):
    _, F, E = time_linearize(x_a, x_b, dt)
    return F, E


def q_time(dt, Q):
    """Covariance accumulated by the time prior over ``dt``.

    ``dt`` may be an array, giving a stack of matrices.
    """
    dt = np.asarray(dt, dtype=float)[..., None, None]
    Qt = np.zeros(dt.shape[:-2] + (STATE_DIM, STATE_DIM))
    Qt[..., :6, :6] = dt**3 / 3.0 * Q.Q1
    Qt[..., 12:, :6] = dt**2 / 2.0 * Q.Q1
    Qt[..., :6, 12:] = dt**2 / 2.0 * Q.Q1
    Qt[..., 6:12, 6:12] = dt * Q.Q3
    Qt[..., 12:, 12:] = dt * Q.Q1
    return Qt


# -- arclength prior ----------------------------------------------------------


def space_error(x_a, x_b, ds):
    """Residual of the constant-strain step from ``x_a`` to ``x_b``."""
    ds = np.asarray(ds, dtype=float)[..., None]
    xi = lie.log_rel(x_a.T, x_b.T)
    transport = np.einsum("...ij,...j->...i", lie.curly_wedge(x_a.eps), x_a.varpi)
    return np.concatenate(
        [xi - ds * x_a.eps, x_b.eps - x_a.eps, x_b.varpi - x_a.varpi - ds * transport], -1
    )


def space_linearize(x_a, x_b, ds):
    ds = np.asarray(ds, dtype=float)[..., None]
    xi = lie.log_rel(x_a.T, x_b.T)
    ce = lie.curly_wedge(x_a.eps)
    transport = np.einsum("...ij,...j->...i", ce, x_a.varpi)
    e = np.concatenate(
        [xi - ds * x_a.eps, x_b.eps - x_a.eps, x_b.varpi - x_a.varpi - ds * transport], -1
    )
    Ji, Ad = _pose_blocks(xi, x_a.T, x_b.T)
    shape = xi.shape[:-1] + (STATE_DIM, STATE_DIM)
    F = np.zeros(shape)
    E = np.zeros(shape)
    F[..., :6, :6] = -Ji @ Ad
    F[..., :6, 6:12] = -ds[..., None] * I6
    F[..., 6:12, 6:12] = -I6
    F[..., 12:, 6:12] = ds[..., None] * lie.curly_wedge(x_a.varpi)
    F[..., 12:, 12:] = -I6 - ds[..., None] * ce
    E[..., :6, :6] = Ji
    E[..., 6:12, 6:12] = I6
    E[..., 12:, 12:] = I6
    return e, F, E


def space_jacobians(x_a, x_b, ds):
    _, F, E = space_linearize(x_a, x_b, ds)
    return F, E


def q_space(ds, varpi_a, Q, check=True):
    """Covariance accumulated by the arclength prior over ``ds``.

    Depends on the velocity ``varpi_a`` at the start of the step through the
    linearized transport term. Broadcasts over leading dimensions of
    ``varpi_a``.
    """
    varpi_a = np.asarray(varpi_a, dtype=float)
    ds = np.asarray(ds, dtype=float)[..., None, None]
    cw = lie.curly_wedge(varpi_a)
    Wst = cw @ Q.Q2
    Qx = Q.Qx
    lead = np.broadcast_shapes(varpi_a.shape[:-1], ds.shape[:-2])
    out = np.zeros(lead + (STATE_DIM, STATE_DIM))
    out[..., :6, :6] = ds**3 / 3.0 * Q.Q2
    out[..., 6:12, :6] = ds**2 / 2.0 * Qx
    out[..., :6, 6:12] = ds**2 / 2.0 * Qx
    out[..., 6:12, 6:12] = ds * Qx
    out[..., 12:, :6] = -(ds**3) / 3.0 * Wst
    out[..., 12:, 6:12] = -(ds**2) / 2.0 * Wst
    out[..., 12:, 12:] = ds * Q.Q3 + ds**3 / 3.0 * Wst @ np.swapaxes(cw, -1, -2)
    out[..., :6, 12:] = np.swapaxes(out[..., 12:, :6], -1, -2)
    out[..., 6:12, 12:] = np.swapaxes(out[..., 12:, 6:12], -1, -2)
    if check:
        _check_pd(0.5 * (out + np.swapaxes(out, -1, -2)), "arclength step covariance")
    return out


# -- boundary (unary) prior ---------------------------------------------------


def _mask_rows(mask):
    if mask is None:
        mask = MASK_BLOCKS
    mask = [m for m in MASK_BLOCKS if m in set(mask)]
    if not mask:
        raise EmptyMask("boundary mask selects no state blocks")
    return np.concatenate([np.arange(6) + 6 * MASK_BLOCKS.index(m) for m in mask])


def boundary_error(x, x0, mask=None):
    e = np.concatenate(
        [lie.log_rel(x.T, x0.T), x0.eps - x.eps, x0.varpi - x.varpi], axis=-1
    )
    return e[..., _mask_rows(mask)]


def boundary_jacobian(x, x0, mask=None):
    xi = lie.log_rel(x.T, x0.T)
    Ji, Ad = _pose_blocks(xi, x.T, x0.T)
    G = np.zeros(xi.shape[:-1] + (STATE_DIM, STATE_DIM))
    G[..., :6, :6] = -Ji @ Ad
    G[..., 6:12, 6:12] = -I6
    G[..., 12:, 12:] = -I6
    return G[..., _mask_rows(mask), :]


# -- measurements -------------------------------------------------------------


def pose_meas_error(T_meas, x):
    """``ln(T_meas T^-1)``."""
    return lie.log_rel(x.T, T_meas)


def pose_meas_jacobian(T_meas, x):
    e = lie.log_rel(x.T, T_meas)
    Ji, Ad = _pose_blocks(e, x.T, T_meas)
    G = np.zeros(e.shape[:-1] + (6, STATE_DIM))
    G[..., :, :6] = -Ji @ Ad
    return G


def gyro_meas_error(w_meas, x):
    """Measured minus modelled angular velocity."""
    return np.asarray(w_meas, dtype=float) - x.varpi[..., 3:]


def gyro_meas_jacobian(w_meas=None, x=None):
    G = np.zeros((3, STATE_DIM))
    G[:, 15:] = -I3
    return G


# -- FactorEvaluation builders ------------------------------------------------


def time_factor(x_a, x_b, dt, Q, ia, ib, inv_cov=None):
    e, F, E = time_linearize(x_a, x_b, dt)
    W = spd_inverse(q_time(dt, Q), "time step covariance") if inv_cov is None else inv_cov
    return FactorEvaluation(e, [(ia, F), (ib, E)], W)


def space_factor(x_a, x_b, ds, Q, ia, ib):
    e, F, E = space_linearize(x_a, x_b, ds)
    W = spd_inverse(q_space(ds, x_a.varpi, Q), "arclength step covariance")
    return FactorEvaluation(e, [(ia, F), (ib, E)], W)


def boundary_factor(x, x0, Q0, i, mask=None):
    rows = _mask_rows(mask)
    W = spd_inverse(Q0[np.ix_(rows, rows)], "Q0")
    return FactorEvaluation(boundary_error(x, x0, mask), [(i, boundary_jacobian(x, x0, mask))], W)


def pose_factor(T_meas, x, R, i):
    return FactorEvaluation(
        pose_meas_error(T_meas, x), [(i, pose_meas_jacobian(T_meas, x))], spd_inverse(R)
    )


def gyro_factor(w_meas, x, R, i):
    return FactorEvaluation(gyro_meas_error(w_meas, x), [(i, gyro_meas_jacobian())], spd_inverse(R))
