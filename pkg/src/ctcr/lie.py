"""SE(3) primitives.

Twists are 6-vectors ordered ``[rho; phi]`` (translation first). Poses are
4x4 matrices ``T_bi``: the inertial frame expressed in the body frame, so
body-frame perturbations act on the left, ``T = exp(d^) T_op``, and the
Jacobian that appears everywhere is the *left* Jacobian.

Every function accepts arbitrary leading batch dimensions.
"""

import numpy as np

from .errors import AngleNearPi, AngleTooLarge

# Below this rotation angle the trigonometric coefficients are evaluated by
# their Taylor series (truncation error < 1e-17).
SMALL_ANGLE = 1e-2

# Smallest admissible 1 + trace(R); see log_so3.
TRACE_MARGIN = 1e-9


def wedge3(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee3(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def wedge6(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (4, 4))
    out[..., :3, :3] = wedge3(x[..., 3:])
    out[..., :3, 3] = x[..., :3]
    return out


def vee6(m):
    m = np.asarray(m, dtype=float)
    return np.concatenate([m[..., :3, 3], vee3(m[..., :3, :3])], axis=-1)


def curly_wedge(x):
    """6x6 adjoint-algebra matrix ``[[phi^, rho^], [0, phi^]]``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (6, 6))
    pw = wedge3(x[..., 3:])
    out[..., :3, :3] = pw
    out[..., 3:, 3:] = pw
    out[..., :3, 3:] = wedge3(x[..., :3])
    return out


def _series(theta2, coeffs):
    out = np.zeros_like(theta2)
    for c in reversed(coeffs):
        out = out * theta2 + c
    return out


def _so3_coeffs(phi):
    """Return theta and the Rodrigues-family coefficients.

    a = sin t / t, b = (1 - cos t) / t^2, c = (t - sin t) / t^3,
    d = (1 - (t/2) cot(t/2)) / t^2.
    """
    theta2 = np.einsum("...i,...i->...", phi, phi)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = t * t
    s, c = np.sin(t), np.cos(t)
    a = np.where(small, _series(theta2, [1.0, -1 / 6, 1 / 120, -1 / 5040]), s / t)
    b = np.where(small, _series(theta2, [0.5, -1 / 24, 1 / 720, -1 / 40320]), (1 - c) / t2)
    cc = np.where(
        small, _series(theta2, [1 / 6, -1 / 120, 1 / 5040, -1 / 362880]), (t - s) / (t2 * t)
    )
    d = np.where(
        small,
        _series(theta2, [1 / 12, 1 / 720, 1 / 30240, 1 / 1209600]),
        (1 - 0.5 * t * s / (1 - c)) / t2,
    )
    return theta, a, b, cc, d


def exp_so3(phi):
    phi = np.asarray(phi, dtype=float)
    _, a, b, _, _ = _so3_coeffs(phi)
    w = wedge3(phi)
    return np.eye(3) + a[..., None, None] * w + b[..., None, None] * (w @ w)


def left_jacobian_so3(phi):
    phi = np.asarray(phi, dtype=float)
    _, _, b, c, _ = _so3_coeffs(phi)
    w = wedge3(phi)
    return np.eye(3) + b[..., None, None] * w + c[..., None, None] * (w @ w)


def left_jacobian_so3_inv(phi):
    phi = np.asarray(phi, dtype=float)
    _, _, _, _, d = _so3_coeffs(phi)
    w = wedge3(phi)
    return np.eye(3) - 0.5 * w + d[..., None, None] * (w @ w)


def log_so3(R):
    """Principal rotation vector of ``R``.

    Raises AngleNearPi when ``1 + trace(R) <= TRACE_MARGIN``.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R, axis1=-2, axis2=-1)
    if np.any(tr <= -1.0 + TRACE_MARGIN):
        raise AngleNearPi(
            f"rotation angle too close to pi (1 + trace = {np.min(tr) + 1.0:.3e})"
        )
    axis_s = vee3(R - np.swapaxes(R, -1, -2)) * 0.5
    sin_t = np.linalg.norm(axis_s, axis=-1)
    cos_t = np.clip(0.5 * (tr - 1.0), -1.0, 1.0)
    theta = np.arctan2(sin_t, cos_t)
    small = theta < SMALL_ANGLE
    safe_sin = np.where(small, 1.0, sin_t)
    # theta / sin(theta) by series near zero
    f = np.where(
        small, _series(theta * theta, [1.0, 1 / 6, 7 / 360, 31 / 15120]), theta / safe_sin
    )
    phi = f[..., None] * axis_s
    # near pi the antisymmetric part loses precision; recover the axis from
    # the symmetric part instead
    big = theta > 2.5
    if np.any(big):
        Rb = R[big]
        cb = cos_t[big]
        S = 0.5 * (Rb + np.swapaxes(Rb, -1, -2)) - cb[:, None, None] * np.eye(3)
        S = S / (1.0 - cb)[:, None, None]
        diag = np.diagonal(S, axis1=-2, axis2=-1)
        j = np.argmax(diag, axis=-1)
        rows = np.arange(len(j))
        col = S[rows, :, j]
        axis = col / np.sqrt(np.maximum(diag[rows, j], 1e-300))[:, None]
        sgn = np.sign(np.einsum("ij,ij->i", axis, axis_s[big]))
        sgn = np.where(sgn == 0, 1.0, sgn)
        phi[big] = (sgn * theta[big])[:, None] * axis
    return phi


def _q_block(x):
    """Upper-right 3x3 block of the SE(3) left Jacobian."""
    rho, phi = x[..., :3], x[..., 3:]
    theta2 = np.einsum("...i,...i->...", phi, phi)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    s, c = np.sin(t), np.cos(t)
    c1 = np.where(
        small, _series(theta2, [1 / 6, -1 / 120, 1 / 5040, -1 / 362880]), (t - s) / t**3
    )
    c2 = np.where(
        small,
        _series(theta2, [1 / 24, -1 / 720, 1 / 40320, -1 / 3628800]),
        (t * t + 2 * c - 2) / (2 * t**4),
    )
    c3 = np.where(
        small,
        _series(theta2, [1 / 120, -1 / 2520, 1 / 120960, -1 / 9979200]),
        (2 * t - 3 * s + t * c) / (2 * t**5),
    )
    P = wedge3(phi)
    Rh = wedge3(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    PPR = P @ PR
    RPP = RP @ P
    PRPP = PRP @ P
    PPRP = P @ PRP
    return (
        0.5 * Rh
        + c1[..., None, None] * (PR + RP + PRP)
        + c2[..., None, None] * (PPR + RPP - 3 * PRP)
        + c3[..., None, None] * (PRPP + PPRP)
    )


def exp_se3(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (4, 4))
    out[..., :3, :3] = exp_so3(x[..., 3:])
    out[..., :3, 3] = np.einsum("...ij,...j->...i", left_jacobian_so3(x[..., 3:]), x[..., :3])
    out[..., 3, 3] = 1.0
    return out


def log_se3(T):
    T = np.asarray(T, dtype=float)
    phi = log_so3(T[..., :3, :3])
    rho = np.einsum("...ij,...j->...i", left_jacobian_so3_inv(phi), T[..., :3, 3])
    return np.concatenate([rho, phi], axis=-1)


def inv_se3(T):
    T = np.asarray(T, dtype=float)
    out = np.zeros_like(T)
    Rt = np.swapaxes(T[..., :3, :3], -1, -2)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, T[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def adjoint(T):
    T = np.asarray(T, dtype=float)
    R = T[..., :3, :3]
    out = np.zeros(T.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., :3, 3:] = wedge3(T[..., :3, 3]) @ R
    return out


def left_jacobian(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (6, 6))
    J = left_jacobian_so3(x[..., 3:])
    out[..., :3, :3] = J
    out[..., 3:, 3:] = J
    out[..., :3, 3:] = _q_block(x)
    return out


def left_jacobian_inv(x):
    """Inverse SE(3) left Jacobian; requires rotation angle below 2*pi."""
    x = np.asarray(x, dtype=float)
    ang = np.linalg.norm(x[..., 3:], axis=-1)
    if np.any(ang >= 2 * np.pi):
        raise AngleTooLarge(f"rotation angle {np.max(ang):.4f} >= 2*pi")
    Ji = left_jacobian_so3_inv(x[..., 3:])
    out = np.zeros(x.shape[:-1] + (6, 6))
    out[..., :3, :3] = Ji
    out[..., 3:, 3:] = Ji
    out[..., :3, 3:] = -Ji @ _q_block(x) @ Ji
    return out


def log_rel(Ta, Tb):
    """``ln(Tb Ta^-1)^v``, the twist carrying ``Ta`` to ``Tb``."""
    return log_se3(np.asarray(Tb) @ inv_se3(Ta))


# Series coefficients for the derivative helpers below.
_N_SERIES = 40


def _jac_coeffs():
    c = np.empty(_N_SERIES)
    f = 1.0
    for n in range(_N_SERIES):
        f /= n + 1
        c[n] = f  # 1 / (n+1)!
    return c


def _jacinv_coeffs():
    # Bernoulli numbers B_n / n! with B_1 = -1/2, via the generating
    # recursion sum_{k<=n} C(n+1, k) B_k = 0.
    from math import comb, factorial

    B = [1.0]
    for n in range(1, _N_SERIES):
        B.append(-sum(comb(n + 1, k) * B[k] for k in range(n)) / (n + 1))
    return np.array([B[n] / factorial(n) for n in range(_N_SERIES)])


JAC_SERIES = _jac_coeffs()
JACINV_SERIES = _jacinv_coeffs()


def _n_terms(x, coeffs, radius):
    """Series length giving ~1e-18 truncation error for the batch ``x``."""
    r = float(np.max(np.linalg.norm(x, axis=-1), initial=0.0))
    if r == 0.0:
        return 2
    n = len(coeffs)
    for k in range(2, n):
        if abs(coeffs[k]) * r**k < 1e-18 and (r / radius) ** k < 1e-18:
            return k + 1
    return n


def _series_derivative(x, v, coeffs, radius):
    """d/dx of ``sum_n coeffs[n] (x^curly)^n v``; shape (..., 6, 6).

    Using d(A^n v) = sum_j A^j dA A^(n-1-j) v and dA u = -u^curly dx.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    A = curly_wedge(x)
    n = _n_terms(x, coeffs, radius)
    u = [v]
    for _ in range(n - 2):
        u.append(np.einsum("...ij,...j->...i", A, u[-1]))
    # w_j = sum_m c_{j+m+1} u_m, a Hankel contraction
    idx = np.arange(n - 1)
    H = np.where(idx[:, None] + idx[None, :] < n - 1, np.asarray(coeffs)[:n][(idx[:, None] + idx[None, :] + 1) % n], 0.0)
    W = curly_wedge(np.einsum("jm,m...->j...", H, np.stack(u)))
    S = W[n - 2]
    for j in range(n - 3, -1, -1):
        S = A @ S + W[j]
    return -S


def d_jac_times(x, v):
    """Jacobian of ``J(x) v`` with respect to ``x``."""
    return _series_derivative(x, v, JAC_SERIES, np.inf)


def d_jacinv_times(x, v):
    """Jacobian of ``J(x)^-1 v`` with respect to ``x`` (rotation below pi)."""
    return _series_derivative(x, v, JACINV_SERIES, 2 * np.pi)


def project_to_se3(T):
    """Nearest proper rotation (polar decomposition) in the rotation block."""
    T = np.array(T, dtype=float)
    U, _, Vt = np.linalg.svd(T[..., :3, :3])
    d = np.sign(np.linalg.det(U @ Vt))
    U[..., :, 2] *= d[..., None]
    T[..., :3, :3] = U @ Vt
    T[..., 3, :3] = 0.0
    T[..., 3, 3] = 1.0
    return T


def is_transform(T, tol=1e-9):
    T = np.asarray(T, dtype=float)
    if T.shape[-2:] != (4, 4):
        return False
    R = T[..., :3, :3]
    ortho = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max() <= tol
    det = np.abs(np.linalg.det(R) - 1.0).max() <= tol
    bottom = np.all(T[..., 3, :] == np.array([0.0, 0.0, 0.0, 1.0]))
    return bool(ortho and det and bottom)
