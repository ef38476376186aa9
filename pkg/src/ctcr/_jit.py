"""Numba kernels for the prior part of the normal equations.

These loop over node pairs and accumulate straight into the banded storage,
avoiding the (pairs, 18, 18) temporaries of the vectorized numpy path. They
mirror ``solver._prior_terms_numpy`` term for term.
"""

import numpy as np
from numba import njit

SMALL = 1e-2


@njit(cache=True)
def _hat(v, out, r0, c0):
    out[r0 + 0, c0 + 0] = 0.0
    out[r0 + 0, c0 + 1] = -v[2]
    out[r0 + 0, c0 + 2] = v[1]
    out[r0 + 1, c0 + 0] = v[2]
    out[r0 + 1, c0 + 1] = 0.0
    out[r0 + 1, c0 + 2] = -v[0]
    out[r0 + 2, c0 + 0] = -v[1]
    out[r0 + 2, c0 + 1] = v[0]
    out[r0 + 2, c0 + 2] = 0.0


@njit(cache=True)
def _rel(Ta, Tb):
    """Tb @ inv(Ta)."""
    out = np.zeros((4, 4))
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for m in range(3):
                acc += Tb[i, m] * Ta[j, m]
            out[i, j] = acc
    for i in range(3):
        acc = 0.0
        for j in range(3):
            acc += out[i, j] * Ta[j, 3]
        out[i, 3] = Tb[i, 3] - acc
    out[3, 3] = 1.0
    return out


@njit(cache=True)
def _log_so3(R):
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    a = np.empty(3)
    a[0] = 0.5 * (R[2, 1] - R[1, 2])
    a[1] = 0.5 * (R[0, 2] - R[2, 0])
    a[2] = 0.5 * (R[1, 0] - R[0, 1])
    s = np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    c = min(max(0.5 * (tr - 1.0), -1.0), 1.0)
    th = np.arctan2(s, c)
    phi = np.empty(3)
    if th < SMALL:
        t2 = th * th
        f = 1.0 + t2 * (1.0 / 6 + t2 * (7.0 / 360 + t2 * 31.0 / 15120))
        for i in range(3):
            phi[i] = f * a[i]
    elif th > 2.5:
        j = 0
        best = -1.0
        for i in range(3):
            d = (R[i, i] - c) / (1.0 - c)
            if d > best:
                best = d
                j = i
        nrm = np.sqrt(max(best, 1e-300))
        dot = 0.0
        for i in range(3):
            v = (0.5 * (R[i, j] + R[j, i]) - (c if i == j else 0.0)) / (1.0 - c)
            phi[i] = v / nrm
            dot += phi[i] * a[i]
        sg = -1.0 if dot < 0 else 1.0
        for i in range(3):
            phi[i] *= sg * th
    else:
        f = th / s
        for i in range(3):
            phi[i] = f * a[i]
    return phi, tr


@njit(cache=True)
def _coeffs(phi):
    t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    th = np.sqrt(t2)
    if th < SMALL:
        c1 = 1.0 / 6 + t2 * (-1.0 / 120 + t2 * (1.0 / 5040 - t2 / 362880))
        c2 = 1.0 / 24 + t2 * (-1.0 / 720 + t2 * (1.0 / 40320 - t2 / 3628800))
        c3 = 1.0 / 120 + t2 * (-1.0 / 2520 + t2 * (1.0 / 120960 - t2 / 9979200))
        d = 1.0 / 12 + t2 * (1.0 / 720 + t2 * (1.0 / 30240 + t2 / 1209600))
    else:
        s = np.sin(th)
        c = np.cos(th)
        c1 = (th - s) / (t2 * th)
        c2 = (t2 + 2 * c - 2) / (2 * t2 * t2)
        c3 = (2 * th - 3 * s + th * c) / (2 * t2 * t2 * th)
        d = (1.0 - 0.5 * th * s / (1.0 - c)) / t2
    return c1, c2, c3, d


@njit(cache=True)
def _mm3(A, B):
    return A @ B


@njit(cache=True)
def log_and_jinv(Trel):
    """Return xi = ln(Trel) and the inverse left Jacobian at xi."""
    R = Trel[:3, :3].copy()
    phi, tr = _log_so3(R)
    c1, c2, c3, d = _coeffs(phi)
    P = np.zeros((3, 3))
    _hat(phi, P, 0, 0)
    P2 = _mm3(P, P)
    Ji3 = np.eye(3) - 0.5 * P + d * P2
    t = Trel[:3, 3].copy()
    rho = Ji3 @ t
    Rh = np.zeros((3, 3))
    _hat(rho, Rh, 0, 0)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    Qb = (
        0.5 * Rh
        + c1 * (PR + RP + PRP)
        + c2 * (P @ PR + RP @ P - 3.0 * PRP)
        + c3 * (PRP @ P + P @ PRP)
    )
    Ji = np.zeros((6, 6))
    Ji[:3, :3] = Ji3
    Ji[3:, 3:] = Ji3
    Ji[:3, 3:] = -(Ji3 @ Qb @ Ji3)
    xi = np.empty(6)
    xi[:3] = rho
    xi[3:] = phi
    return xi, Ji, tr


@njit(cache=True)
def adjoint(T):
    Ad = np.zeros((6, 6))
    R = T[:3, :3].copy()
    Ad[:3, :3] = R
    Ad[3:, 3:] = R
    H = np.zeros((3, 3))
    _hat(T[:3, 3].copy(), H, 0, 0)
    Ad[:3, 3:] = H @ R
    return Ad


@njit(cache=True)
def _curly(x):
    C = np.zeros((6, 6))
    _hat(x[3:], C, 0, 0)
    _hat(x[3:], C, 3, 3)
    _hat(x[:3], C, 0, 3)
    return C


@njit(cache=True)
def _right(W, Fb, nz, out):
    """out = W @ F for F given as 3x3 blocks of 6x6 with nonzero mask nz."""
    out[:, :] = 0.0
    for p in range(3):
        for q in range(3):
            if nz[p, q]:
                for r in range(18):
                    for a in range(6):
                        acc = 0.0
                        for b in range(6):
                            acc += W[r, 6 * p + b] * Fb[p, q, b, a]
                        out[r, 6 * q + a] += acc


@njit(cache=True)
def _left_t(Fb, nz, M, out, sign):
    """out += sign * F^T @ M."""
    for p in range(3):
        for q in range(3):
            if nz[p, q]:
                for a in range(6):
                    for c in range(18):
                        acc = 0.0
                        for b in range(6):
                            acc += Fb[p, q, b, a] * M[6 * p + b, c]
                        out[6 * q + a, c] += sign * acc


@njit(cache=True)
def _accumulate(Fb, fnz, Eb, enz, W, e, diag, ia, ib, off, rhs, WF, WE):
    _right(W, Fb, fnz, WF)
    _right(W, Eb, enz, WE)
    We = W @ e
    _left_t(Fb, fnz, WF, diag[ia], 1.0)
    _left_t(Eb, enz, WE, diag[ib], 1.0)
    _left_t(Eb, enz, WF, off, 1.0)
    for p in range(3):
        for q in range(3):
            for a in range(6):
                if fnz[p, q]:
                    acc = 0.0
                    for b in range(6):
                        acc += Fb[p, q, b, a] * We[6 * p + b]
                    rhs[18 * ia + 6 * q + a] -= acc
                if enz[p, q]:
                    acc = 0.0
                    for b in range(6):
                        acc += Eb[p, q, b, a] * We[6 * p + b]
                    rhs[18 * ib + 6 * q + a] -= acc
    cost = 0.0
    for r in range(18):
        cost += e[r] * We[r]
    return 0.5 * cost


@njit(cache=True)
def time_prior_normal_equations(T, eps, varpi, N, dt, Wt, diag, lowerN, rhs):
    """Accumulate all time factors; returns their cost (nan near angle pi)."""
    m = T.shape[0]
    cost = 0.0
    Fb = np.zeros((3, 3, 6, 6))
    Eb = np.zeros((3, 3, 6, 6))
    fnz = np.zeros((3, 3), dtype=np.bool_)
    enz = np.zeros((3, 3), dtype=np.bool_)
    fnz[0, 0] = fnz[0, 2] = fnz[1, 1] = fnz[2, 2] = True
    enz[0, 0] = enz[1, 1] = enz[2, 2] = True
    WF = np.empty((18, 18))
    WE = np.empty((18, 18))
    e = np.empty(18)
    for r in range(6):
        Fb[1, 1, r, r] = -1.0
        Fb[2, 2, r, r] = -1.0
        Eb[1, 1, r, r] = 1.0
        Eb[2, 2, r, r] = 1.0
    for i in range(m - N):
        k = i // N
        j = i + N
        Trel = _rel(T[i], T[j])
        xi, Ji, tr = log_and_jinv(Trel)
        if tr <= -1.0 + 1e-9:
            return np.nan
        Fb[0, 0] = -(Ji @ adjoint(Trel))
        Eb[0, 0] = Ji
        h = dt[k]
        for r in range(6):
            e[r] = xi[r] - h * varpi[i, r]
            e[6 + r] = eps[j, r] - eps[i, r]
            e[12 + r] = varpi[j, r] - varpi[i, r]
            Fb[0, 2, r, r] = -h
        cost += _accumulate(Fb, fnz, Eb, enz, Wt[k], e, diag, i, j, lowerN[i], rhs, WF, WE)
    return cost


@njit(cache=True)
def space_prior_normal_equations(T, eps, varpi, N, ds, Ws, diag, lower1, rhs):
    """Accumulate all arclength factors; ``Ws`` has shape (K, N-1, 18, 18)."""
    m = T.shape[0]
    K = m // N
    cost = 0.0
    Fb = np.zeros((3, 3, 6, 6))
    Eb = np.zeros((3, 3, 6, 6))
    fnz = np.zeros((3, 3), dtype=np.bool_)
    enz = np.zeros((3, 3), dtype=np.bool_)
    fnz[0, 0] = fnz[0, 1] = fnz[1, 1] = fnz[2, 1] = fnz[2, 2] = True
    enz[0, 0] = enz[1, 1] = enz[2, 2] = True
    WF = np.empty((18, 18))
    WE = np.empty((18, 18))
    e = np.empty(18)
    for r in range(6):
        Fb[1, 1, r, r] = -1.0
        Eb[1, 1, r, r] = 1.0
        Eb[2, 2, r, r] = 1.0
    for k in range(K):
        for n in range(N - 1):
            i = k * N + n
            j = i + 1
            Trel = _rel(T[i], T[j])
            xi, Ji, tr = log_and_jinv(Trel)
            if tr <= -1.0 + 1e-9:
                return np.nan
            Fb[0, 0] = -(Ji @ adjoint(Trel))
            Eb[0, 0] = Ji
            h = ds[n]
            ce = _curly(eps[i])
            cw = _curly(varpi[i])
            tv = ce @ varpi[i]
            for r in range(6):
                e[r] = xi[r] - h * eps[i, r]
                e[6 + r] = eps[j, r] - eps[i, r]
                e[12 + r] = varpi[j, r] - varpi[i, r] - h * tv[r]
                Fb[0, 1, r, r] = -h
            Fb[2, 1] = h * cw
            Fb[2, 2] = -h * ce
            for r in range(6):
                Fb[2, 2, r, r] -= 1.0
            cost += _accumulate(
                Fb, fnz, Eb, enz, Ws[k, n], e, diag, i, j, lower1[i], rhs, WF, WE
            )
    return cost
