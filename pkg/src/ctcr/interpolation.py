"""Gaussian-process interpolation between neighbouring grid nodes.

Queries between two nodes ``a`` and ``b`` (adjacent in time, or adjacent in
arclength) are formed in the local coordinate

    gamma = [xi; J(xi)^-1 eps; J(xi)^-1 varpi],   xi = ln(T T_a^-1),

which evolves linearly under the white-noise prior, so the posterior mean
at the query is ``Lambda gamma_a + Psi gamma_b``.

All functions broadcast over leading batch dimensions.
"""

from dataclasses import dataclass

import numpy as np

from . import lie
from .errors import OutOfInterval
from .factors import FactorEvaluation, pose_meas_jacobian, q_space, q_time, spd_inverse
from .state import STATE_DIM, NodeState

I6 = np.eye(6)

# position of the derivative block that drives the pose coordinate
TIME_SLOT = 2
SPACE_SLOT = 1


@dataclass
class LocalCoords:
    xi: np.ndarray
    xi_s: np.ndarray
    xi_t: np.ndarray

    @property
    def vector(self):
        return np.concatenate([self.xi, self.xi_s, self.xi_t], axis=-1)

    @classmethod
    def from_vector(cls, g):
        g = np.asarray(g, dtype=float)
        return cls(g[..., :6], g[..., 6:12], g[..., 12:])


@dataclass
class InterpWeights:
    """Interpolation weights for one query.

    Attributes
    ----------
    Lambda, Psi : ndarray (..., 18, 18)
        Weights on the local coordinates of the first and second node.
    P_check : ndarray (..., 18, 18)
        Prior covariance of the query given both nodes, in local coordinates.
    alpha, delta : ndarray
        Offset of the query from the first node and node spacing.
    """

    Lambda: np.ndarray
    Psi: np.ndarray
    P_check: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray


def phi(delta, slot=TIME_SLOT):
    """Transition matrix of the local coordinate over ``delta``."""
    delta = np.asarray(delta, dtype=float)
    out = np.zeros(delta.shape + (STATE_DIM, STATE_DIM))
    out[...] = np.eye(STATE_DIM)
    out[..., :6, 6 * slot : 6 * slot + 6] = delta[..., None, None] * I6
    return out


def phi_t(dt):
    return phi(dt, TIME_SLOT)


def phi_s(ds):
    return phi(ds, SPACE_SLOT)


def _weights(alpha, delta, Qfun, slot, variant="conditional"):
    alpha = np.asarray(alpha, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), alpha.shape)
    Qa = Qfun(alpha)
    Qd = Qfun(delta)
    # Psi = Qa Phi(delta - alpha)^T Qd^-1, solved as Qd Psi^T = Phi Qa
    rhs = phi(delta - alpha, slot) @ Qa
    Psi = np.swapaxes(np.linalg.solve(Qd, rhs), -1, -2)
    Lam = phi(alpha, slot) - Psi @ phi(delta, slot)
    if variant == "conditional":
        Pc = Qa - Psi @ Qd @ np.swapaxes(Psi, -1, -2)
        Pc = 0.5 * (Pc + np.swapaxes(Pc, -1, -2))
    elif variant == "printed":
        Pc = Qa
    else:
        raise ValueError(f"unknown covariance variant {variant!r}")
    # exact boundary values
    at_a = alpha == 0.0
    if np.any(at_a):
        Lam = np.where(at_a[..., None, None], np.eye(STATE_DIM), Lam)
        Psi = np.where(at_a[..., None, None], 0.0, Psi)
        Pc = np.where(at_a[..., None, None], 0.0, Pc)
    return InterpWeights(Lam, Psi, Pc, alpha, delta)


def _check_interval(q, lo, hi):
    q = np.asarray(q, dtype=float)
    if np.any(q < lo) or np.any(q > hi) or np.any(np.asarray(hi) <= np.asarray(lo)):
        raise OutOfInterval(f"query {q} outside [{lo}, {hi}]")
    return q


def interp_weights_time(tau, t_k, t_k1, Q, variant="conditional"):
    """Weights for a query at time ``tau`` between ``t_k`` and ``t_k1``."""
    tau = _check_interval(tau, t_k, t_k1)
    return _weights(tau - t_k, np.asarray(t_k1) - t_k, lambda d: q_time(d, Q), TIME_SLOT, variant)


def interp_weights_space(sigma, s_n, s_n1, Q, variant="conditional"):
    """Weights for a query at arclength ``sigma`` between ``s_n`` and ``s_n1``.

    The arclength step covariance is evaluated at zero velocity, so the
    velocity block is interpolated linearly.
    """
    sigma = _check_interval(sigma, s_n, s_n1)
    qfun = lambda d: q_space(d, np.zeros(6), Q, check=False)  # noqa: E731
    return _weights(sigma - s_n, np.asarray(s_n1) - s_n, qfun, SPACE_SLOT, variant)


def gamma_from_state(x, anchor):
    xi = lie.log_rel(anchor.T, x.T)
    Ji = lie.left_jacobian_inv(xi)
    return LocalCoords(
        xi,
        np.einsum("...ij,...j->...i", Ji, x.eps),
        np.einsum("...ij,...j->...i", Ji, x.varpi),
    )


def state_from_gamma(g, anchor):
    J = lie.left_jacobian(g.xi)
    return NodeState(
        lie.exp_se3(g.xi) @ anchor.T,
        np.einsum("...ij,...j->...i", J, g.xi_s),
        np.einsum("...ij,...j->...i", J, g.xi_t),
    )


def _anchor_gamma(x_a):
    return np.concatenate([np.zeros_like(x_a.eps), x_a.eps, x_a.varpi], axis=-1)


def interpolate(x_a, x_b, w):
    """Posterior mean between ``x_a`` and ``x_b`` given weights ``w``."""
    ga = _anchor_gamma(x_a)
    gb = gamma_from_state(x_b, x_a).vector
    g = np.einsum("...ij,...j->...i", w.Lambda, ga) + np.einsum("...ij,...j->...i", w.Psi, gb)
    out = state_from_gamma(LocalCoords.from_vector(g), x_a)
    # node queries return the stored node values exactly
    alpha = np.asarray(w.alpha)
    for mask, src in ((alpha == 0.0, x_a), (alpha == np.asarray(w.delta), x_b)):
        if np.any(mask):
            out = NodeState(
                np.where(mask[..., None, None], src.T, out.T),
                np.where(mask[..., None], src.eps, out.eps),
                np.where(mask[..., None], src.varpi, out.varpi),
            )
    return out


def interpolate_time(x_a, x_b, t_k, t_k1, tau, Q):
    return interpolate(x_a, x_b, interp_weights_time(tau, t_k, t_k1, Q))


def interpolate_space(x_a, x_b, s_n, s_n1, sigma, Q):
    return interpolate(x_a, x_b, interp_weights_space(sigma, s_n, s_n1, Q))


def interpolate_covariance(P_aa, P_ab, P_ba, P_bb, weights, P_check_local=None):
    """Covariance of the interpolated local coordinate.

    ``P_check + [Lambda Psi] P [Lambda Psi]^T`` with ``P`` the joint
    covariance of the two bracketing nodes.
    """
    L, S = weights.Lambda, weights.Psi
    Lt, St = np.swapaxes(L, -1, -2), np.swapaxes(S, -1, -2)
    out = L @ P_aa @ Lt + L @ P_ab @ St + S @ P_ba @ Lt + S @ P_bb @ St
    if P_check_local is None:
        P_check_local = weights.P_check
    out = out + P_check_local
    return 0.5 * (out + np.swapaxes(out, -1, -2))


# -- chain-rule Jacobians -----------------------------------------------------


def _gamma_b_jacobians(x_a, x_b):
    """Jacobians of gamma_b (second node in the first node's frame)."""
    xi = lie.log_rel(x_a.T, x_b.T)
    Ji = lie.left_jacobian_inv(xi)
    Ad = lie.adjoint(x_b.T @ lie.inv_se3(x_a.T))
    De = lie.d_jacinv_times(xi, x_b.eps)
    Dw = lie.d_jacinv_times(xi, x_b.varpi)
    shape = xi.shape[:-1] + (STATE_DIM, STATE_DIM)
    Ga = np.zeros(shape)
    Gb = np.zeros(shape)
    JA = -Ji @ Ad
    Ga[..., :6, :6] = JA
    Ga[..., 6:12, :6] = De @ JA
    Ga[..., 12:, :6] = Dw @ JA
    Gb[..., :6, :6] = Ji
    Gb[..., 6:12, :6] = De @ Ji
    Gb[..., 12:, :6] = Dw @ Ji
    Gb[..., 6:12, 6:12] = Ji
    Gb[..., 12:, 12:] = Ji
    return Ga, Gb


def state_gamma_jacobian(g):
    """``Gamma``: Jacobian of the node perturbation w.r.t. its local coordinate."""
    J = lie.left_jacobian(g.xi)
    out = np.zeros(g.xi.shape[:-1] + (STATE_DIM, STATE_DIM))
    out[..., :6, :6] = J
    out[..., 6:12, :6] = lie.d_jac_times(g.xi, g.xi_s)
    out[..., 12:, :6] = lie.d_jac_times(g.xi, g.xi_t)
    out[..., 6:12, 6:12] = J
    out[..., 12:, 12:] = J
    return out


def interp_state_jacobian(x_a, x_b, w, return_gamma=False):
    """Jacobians ``(M_a, M_b)`` of the interpolated state perturbation.

    The query perturbation is ``M_a dx_a + M_b dx_b`` to first order.
    """
    ga = _anchor_gamma(x_a)
    gb = gamma_from_state(x_b, x_a).vector
    g = np.einsum("...ij,...j->...i", w.Lambda, ga) + np.einsum("...ij,...j->...i", w.Psi, gb)
    g = LocalCoords.from_vector(g)
    Ga, Gb = _gamma_b_jacobians(x_a, x_b)
    J1 = np.diag(np.r_[np.zeros(6), np.ones(12)])
    dg_a = w.Lambda @ J1 + w.Psi @ Ga
    dg_b = w.Psi @ Gb
    Gam = state_gamma_jacobian(g)
    M_a = Gam @ dg_a
    M_a[..., :6, :6] += lie.adjoint(lie.exp_se3(g.xi))
    M_b = Gam @ dg_b
    if return_gamma:
        return M_a, M_b, Gam
    return M_a, M_b


def interpolated_covariance(x_a, x_b, w, P_aa, P_ab, P_ba, P_bb):
    """Posterior covariance of the interpolated state perturbation."""
    M_a, M_b, Gam = interp_state_jacobian(x_a, x_b, w, return_gamma=True)
    Mat, Mbt = np.swapaxes(M_a, -1, -2), np.swapaxes(M_b, -1, -2)
    out = M_a @ P_aa @ Mat + M_a @ P_ab @ Mbt + M_b @ P_ba @ Mat + M_b @ P_bb @ Mbt
    out = out + Gam @ w.P_check @ np.swapaxes(Gam, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def interpolated_measurement_factor(kind, meas, x_a, x_b, w, R, ia, ib):
    """Measurement factor at a time between two nodes.

    Parameters
    ----------
    kind : {'pose', 'gyro'}
    meas : ndarray
        Measured pose (4x4) or angular rate (3,).
    x_a, x_b : NodeState
        Bracketing nodes at the sensor arclength.
    w : InterpWeights
    R : ndarray
        Measurement noise covariance.
    ia, ib : int
        Flat indices of the bracketing nodes.
    """
    xq = interpolate(x_a, x_b, w)
    M_a, M_b, Gam = interp_state_jacobian(x_a, x_b, w, return_gamma=True)
    if kind == "pose":
        e = lie.log_rel(xq.T, meas)
        G = pose_meas_jacobian(meas, xq)
    elif kind == "gyro":
        e = np.asarray(meas, dtype=float) - xq.varpi[3:]
        G = np.zeros((3, STATE_DIM))
        G[:, 15:] = -np.eye(3)
    else:
        raise ValueError(f"unknown measurement kind {kind!r}")
    GG = G @ Gam
    Rinf = R + GG @ w.P_check @ GG.T
    return FactorEvaluation(e, [(ia, G @ M_a), (ib, G @ M_b)], spd_inverse(Rinf))
