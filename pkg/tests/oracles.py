"""Reference implementations the package is checked against.

Nothing here imports the package's Lie or solver code: group operations go
through scipy's matrix exponential and logarithm, Jacobians through finite
differences and linear algebra through dense numpy routines.
"""

import numpy as np
from scipy.linalg import expm, logm


def hat3(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def hat6(x):
    M = np.zeros((4, 4))
    M[:3, :3] = hat3(x[3:])
    M[:3, 3] = x[:3]
    return M


def vee6(M):
    return np.array([M[0, 3], M[1, 3], M[2, 3], M[2, 1], M[0, 2], M[1, 0]])


def exp6(x):
    return expm(hat6(x))


def log6(T):
    return vee6(np.real(logm(T)))


def bracket(x, y):
    """``[x^, y^]^v`` in the 4x4 representation."""
    X, Y = hat6(x), hat6(y)
    return vee6(X @ Y - Y @ X)


def adjoint_by_conjugation(T):
    """Columns ``(T e_i^ T^-1)^v``."""
    Ti = np.linalg.inv(T)
    return np.column_stack([vee6(T @ hat6(e) @ Ti) for e in np.eye(6)])


def ad_matrix(x):
    """Matrix of ``y -> [x, y]``."""
    return np.column_stack([bracket(x, e) for e in np.eye(6)])


def left_jacobian_quadrature(x, n=10000):
    """``int_0^1 Ad(exp(a x)) da`` with the midpoint rule on exp(a ad_x)."""
    A = ad_matrix(x)
    a = (np.arange(n) + 0.5) / n
    # midpoint rule on the matrix exponential, batched through eigen-free series
    out = np.zeros((6, 6))
    for ai in a:
        out += expm(ai * A)
    return out / n


def expm_series(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


def jacinv_series(x, terms=30):
    """``sum_n B_n / n! ad_x^n`` with Bernoulli numbers ``B_n``."""
    from math import comb, factorial

    B = [1.0]
    for m in range(1, terms):
        B.append(-sum(comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    A = ad_matrix(x)
    out = np.zeros((6, 6))
    P = np.eye(6)
    for n in range(terms):
        out += B[n] / factorial(n) * P
        P = P @ A
    return out


# -- finite differences -------------------------------------------------------


def perturb_state(state, d):
    """Left pose perturbation plus additive strain and velocity (dense oracle)."""
    T, eps, varpi = state
    return exp6(d[:6]) @ T, eps + d[6:12], varpi + d[12:18]


def numerical_jacobian(f, x0, perturb, dim, h=1e-6):
    """Central differences of ``f(perturb(x0, d))`` at ``d = 0``."""
    f0 = np.asarray(f(x0))
    J = np.zeros((f0.size, dim))
    for i in range(dim):
        d = np.zeros(dim)
        d[i] = h
        fp = np.asarray(f(perturb(x0, d))).ravel()
        fm = np.asarray(f(perturb(x0, -d))).ravel()
        J[:, i] = (fp - fm) / (2 * h)
    return J


def assert_jacobian_close(J, Jn, rel=1e-5, abs_=1e-8):
    err = np.abs(J - Jn)
    tol = np.maximum(abs_, rel * np.abs(Jn))
    # relative to the block scale for entries near zero
    scale = max(1.0, np.abs(Jn).max())
    ok = (err <= tol) | (err <= rel * scale * 1e-1)
    assert ok.all(), f"max abs error {err.max():.3e} (scale {scale:.3e})"


# -- dense linear algebra -----------------------------------------------------


def dense_assemble(factors, n_nodes, D=18):
    """Dense ``J^T W J`` and ``-J^T W e`` from (error, [(i, J_i)], W) triples."""
    A = np.zeros((D * n_nodes, D * n_nodes))
    b = np.zeros(D * n_nodes)
    for e, blocks, W in factors:
        J = np.zeros((len(e), D * n_nodes))
        for i, Ji in blocks:
            J[:, D * i : D * i + D] += Ji
        A += J.T @ W @ J
        b -= J.T @ W @ e
    return A, b


# -- independent quasi-static smoother ----------------------------------------


def log6_fast(T):
    """SE(3) log through scipy's rotation vector and a Van Loan block exponential.

    ``rho = V(phi)^-1 r`` with ``V = int_0^1 exp(a phi^) da`` read off
    ``expm([[phi^, I], [0, 0]])``.
    """
    from scipy.spatial.transform import Rotation

    phi = Rotation.from_matrix(T[:3, :3]).as_rotvec()
    M = np.zeros((6, 6))
    M[:3, :3] = hat3(phi)
    M[:3, 3:] = np.eye(3)
    V = expm(M)[:3, 3:]
    return np.r_[np.linalg.solve(V, T[:3, 3]), phi]


def quasi_static_smoother(s, T_meas, n_meas, R, Q0_pose, Q0_strain, eps0, Q2, Qx, x_init=None,
                          tol=1e-11, max_iters=50):
    """Arclength-only GP smoother on poses and strains at a single instant.

    State per node is ``(T, eps)``; the prior is white noise on the strain
    gradient with the 12x12 step covariance built from ``Q2`` (pose) and
    ``Qx`` (strain), a boundary prior at ``s[0]`` and pose measurements at
    nodes ``n_meas``. Solved by Gauss-Newton on whitened residuals over the
    left perturbation, with a central-difference Jacobian.
    """
    N = len(s)
    ds = np.diff(s)

    def Lw(C):
        return np.linalg.cholesky(np.linalg.inv(C)).T

    Wpr = []
    for h in ds:
        C = np.zeros((12, 12))
        C[:6, :6] = h**3 / 3 * Q2
        C[:6, 6:] = h**2 / 2 * Qx
        C[6:, :6] = h**2 / 2 * Qx
        C[6:, 6:] = h * Qx
        Wpr.append(Lw(C))
    W0 = Lw(np.block([[Q0_pose, np.zeros((6, 6))], [np.zeros((6, 6)), Q0_strain]]))
    Wm = [Lw(Ri) for Ri in R]

    if x_init is None:
        T = [exp6(si * eps0) for si in s]
        e = [eps0.copy() for _ in s]
    else:
        T, e = [t.copy() for t in x_init[0]], [v.copy() for v in x_init[1]]

    # residual blocks as (rows, nodes, function of the node states)
    blocks = [(W0, (0,), lambda T0, e0: np.r_[log6_fast(np.linalg.inv(T0)), eps0 - e0])]
    for n in range(N - 1):
        blocks.append((Wpr[n], (n, n + 1), lambda Ta, ea, Tb, eb, h=ds[n]: np.r_[
            log6_fast(Tb @ np.linalg.inv(Ta)) - h * ea, eb - ea]))
    for Tm, n, W in zip(T_meas, n_meas, Wm):
        blocks.append((W, (n,), lambda Tn, en, Tm=Tm: log6_fast(Tm @ np.linalg.inv(Tn))))
    rows = np.cumsum([0] + [W.shape[0] for W, _, _ in blocks])

    def evaluate(W, nodes, f, T, e):
        return W @ f(*[a for n in nodes for a in (T[n], e[n])])

    def residual(T, e):
        return np.concatenate([evaluate(W, nd, f, T, e) for W, nd, f in blocks])

    def jacobian(T, e, h=1e-6):
        J = np.zeros((rows[-1], 12 * N))
        for b, (W, nodes, f) in enumerate(blocks):
            for n in nodes:
                for j in range(12):
                    d = np.zeros(12)
                    d[j] = h
                    out = []
                    for sgn in (1, -1):
                        Tp, ep = list(T), list(e)
                        Tp[n] = exp6(sgn * d[:6]) @ T[n]
                        ep[n] = e[n] + sgn * d[6:]
                        out.append(evaluate(W, nodes, f, Tp, ep))
                    J[rows[b] : rows[b + 1], 12 * n + j] += (out[0] - out[1]) / (2 * h)
        return J

    for _ in range(max_iters):
        r = residual(T, e)
        J = jacobian(T, e)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0].reshape(N, 12)
        T = [exp6(dx[n, :6]) @ T[n] for n in range(N)]
        e = [e[n] + dx[n, 6:] for n in range(N)]
        if np.abs(dx).max() < tol:
            break
    return T, e


# -- random inputs ------------------------------------------------------------


def random_twist(rng, rot_scale=1.0, trans_scale=1.0):
    return np.r_[trans_scale * rng.standard_normal(3), rot_scale * rng.standard_normal(3)]


def random_pose(rng, rot_scale=1.0):
    return exp6(random_twist(rng, rot_scale))


def random_state(rng, scale=0.5):
    """NodeState-like tuple ``(T, eps, varpi)``."""
    return random_pose(rng), scale * rng.standard_normal(6), scale * rng.standard_normal(6)


# -- extended precision -------------------------------------------------------


def log6_mp(T, dps=40):
    """Twist of ``T`` through mpmath's matrix logarithm at ``dps`` digits."""
    import mpmath as mp

    with mp.workdps(dps):
        L = mp.logm(mp.matrix(T.tolist()))
        return np.array([float(mp.re(L[i, j])) for i, j in ((0, 3), (1, 3), (2, 3), (2, 1), (0, 2), (1, 0))])


def rel_pose_mp(Ta, Tb, dps=40):
    """``ln(Tb Ta^-1)`` evaluated with mpmath."""
    import mpmath as mp

    with mp.workdps(dps):
        A = mp.matrix(Ta.tolist())
        B = mp.matrix(Tb.tolist())
        M = B * mp.inverse(A)
        L = mp.logm(M)
        return np.array([float(mp.re(L[i, j])) for i, j in ((0, 3), (1, 3), (2, 3), (2, 1), (0, 2), (1, 0))])
