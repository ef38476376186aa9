"""Dataset-to-estimate plumbing shared by the command line and the tests."""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import interpolation as itp
from .errors import ArclengthMismatch, MixedQuery, OutOfInterval
from .solver import MeasurementSet, Problem, gauss_newton
from .state import NodeState, StateGrid, straight_grid

ARCLENGTH_TOL = 1e-9
TIME_TOL = 1e-9


def suggest_N(arclengths, length, at_least=2, max_N=257):
    """Smallest ``N >= at_least`` whose evenly spaced grid holds every arclength."""
    fr = [Fraction(a / length).limit_denominator(10000) for a in arclengths]
    den = 1
    for f in fr:
        den = den * f.denominator // math.gcd(den, f.denominator)
    N = den * max(1, -(-(at_least - 1) // den)) + 1
    return N if N <= max_N else None


def arclength_indices(arclengths, s):
    """Grid index of each arclength; raises ``ArclengthMismatch`` if off-grid."""
    arclengths = np.asarray(arclengths, dtype=float)
    idx = np.clip(np.searchsorted(s, arclengths), 0, len(s) - 1)
    lo = np.clip(idx - 1, 0, len(s) - 1)
    idx = np.where(np.abs(s[lo] - arclengths) < np.abs(s[idx] - arclengths), lo, idx)
    bad = np.abs(s[idx] - arclengths) > ARCLENGTH_TOL * max(1.0, s[-1])
    if np.any(bad):
        length = s[-1]
        N = suggest_N(np.unique(arclengths), length, at_least=len(s))
        hint = f"; N={N} aligns every sensor" if N else ""
        raise ArclengthMismatch(
            f"sensor arclengths {np.unique(arclengths[bad]).tolist()} are not grid nodes "
            f"of N={len(s)} over [0, {length}]{hint}"
        )
    return idx


def node_times(dataset, rate):
    """Node times at ``rate`` covering the dataset's time span."""
    spec = dataset.metadata.get("spec") if dataset.metadata else None
    t0, t1 = dataset.time_span()
    if spec:
        t0, t1 = min(t0, 0.0), max(t1, float(spec["duration"]))
    K = int(math.floor((t1 - t0) * rate + 1e-9)) + 1
    t = t0 + np.arange(K) / rate
    if t[-1] < t1 - TIME_TOL:
        t = np.append(t, t0 + K / rate)
    return t


def measurement_sets(dataset, s):
    out = []
    for kind in ("pose", "gyro"):
        ms = [m for m in dataset.measurements if m.kind == kind]
        if not ms:
            continue
        idx = arclength_indices([m.arclength for m in ms], s)
        out.append(
            MeasurementSet(
                kind,
                idx,
                [m.t for m in ms],
                np.stack([m.value for m in ms]),
                np.stack([m.R for m in ms]),
            )
        )
    return out


@dataclass
class EstimateResult:
    """Estimated grid, optional posterior covariance and solve report."""

    grid: StateGrid
    report: object
    config: object
    covariance: object = None
    dataset_hash: str = ""
    psd: object = None
    extra: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.grid.N

    def node(self, n, k):
        return self.grid.node(n, k)


def build_problem(dataset, cfg, s=None, t=None):
    if s is None:
        s = np.linspace(0.0, cfg.length, cfg.grid.N)
    if t is None:
        t = node_times(dataset, cfg.grid.node_rate_hz)
    ms = measurement_sets(dataset, s)
    return Problem(
        s, t, cfg.psd, cfg.boundary_state(), ms, cfg.boundary_mask, cfg.solver_options()
    )


def estimate(dataset, cfg, compute_covariance=None, init=None, dataset_hash=""):
    """Run the batch estimator on ``dataset``.

    Parameters
    ----------
    dataset : Dataset
    cfg : Config
    compute_covariance : bool, optional
        Defaults to the config flag.
    init : StateGrid, optional
        Initial operating point; a straight rod at rest otherwise.

    Returns
    -------
    EstimateResult
    """
    problem = build_problem(dataset, cfg)
    if init is None:
        init = straight_grid(problem.s, problem.t, cfg.backbone_axis)
    grid, report = gauss_newton(init, problem)
    if compute_covariance is None:
        compute_covariance = cfg.flags.compute_covariance
    cov = None
    if compute_covariance and report.factorization is not None:
        cov = report.factorization.covariance()
    report.factorization = None
    return EstimateResult(grid, report, cfg, cov, dataset_hash, cfg.psd)


# -- queries ------------------------------------------------------------------


def _locate(grid_vals, q, tol):
    """``(index, on_node)`` of the interval containing ``q``."""
    i = int(np.clip(np.searchsorted(grid_vals, q, side="right") - 1, 0, len(grid_vals) - 2))
    for j in (i, i + 1):
        if abs(grid_vals[j] - q) <= tol:
            return j, True
    if q < grid_vals[0] or q > grid_vals[-1]:
        raise OutOfInterval(f"query {q} outside [{grid_vals[0]}, {grid_vals[-1]}]")
    return i, False


@dataclass
class QueryResult:
    state: NodeState
    cov: np.ndarray = None
    mode: str = "node"


def query(result, s, t, variant=None):
    """Posterior mean (and covariance, when available) at ``(s, t)``.

    One of ``s``, ``t`` must fall on the grid: a grid arclength gives time
    interpolation, a grid time gives arclength interpolation.
    """
    g = result.grid
    psd = result.psd
    variant = variant or result.config.flags.covariance_variant
    cov = result.covariance
    n, s_on = _locate(g.s, s, ARCLENGTH_TOL * max(1.0, g.s[-1]))
    if g.K == 1:
        k, t_on = 0, abs(t - g.t[0]) <= TIME_TOL
        if not t_on:
            raise OutOfInterval(f"query time {t} differs from the only node time {g.t[0]}")
    else:
        k, t_on = _locate(g.t, t, TIME_TOL)
    if s_on and t_on:
        P = None if cov is None else cov.node[k * g.N + n]
        return QueryResult(g.node(n, k), P, "node")
    if s_on:
        ia, ib = k * g.N + n, (k + 1) * g.N + n
        xa, xb = g.node(n, k), g.node(n, k + 1)
        w = itp.interp_weights_time(t, g.t[k], g.t[k + 1], psd, variant)
        mode = "time"
    elif t_on:
        ia, ib = k * g.N + n, k * g.N + n + 1
        xa, xb = g.node(n, k), g.node(n + 1, k)
        w = itp.interp_weights_space(s, g.s[n], g.s[n + 1], psd, variant)
        mode = "space"
    else:
        raise MixedQuery(
            f"query (s={s}, t={t}) is off the grid in both arclength and time; "
            "fix one coordinate to a node value"
        )
    x = itp.interpolate(xa, xb, w)
    P = None
    if cov is not None:
        P = itp.interpolated_covariance(
            xa, xb, w, cov.block(ia, ia), cov.block(ia, ib), cov.block(ib, ia), cov.block(ib, ib)
        )
    return QueryResult(x, P, mode)


def query_time_batch(result, n, times, with_cov=True):
    """Vectorized time interpolation at grid arclength index ``n``.

    Returns the interpolated states and their pose covariances (M, 6, 6), or
    ``None`` for the latter when the result carries no covariance.
    """
    g = result.grid
    times = np.asarray(times, dtype=float)
    if np.any(times < g.t[0] - TIME_TOL) or np.any(times > g.t[-1] + TIME_TOL):
        raise OutOfInterval("query times outside the estimation window")
    times = np.clip(times, g.t[0], g.t[-1])
    if g.K == 1:
        x = NodeState(g.T[0, n], g.eps[0, n], g.varpi[0, n])
        x = NodeState(*(np.broadcast_to(a, (len(times),) + a.shape) for a in (x.T, x.eps, x.varpi)))
        P = None
        if with_cov and result.covariance is not None:
            P = np.broadcast_to(result.covariance.node[n][:6, :6], (len(times), 6, 6))
        return x, P
    k = np.clip(np.searchsorted(g.t, times, side="right") - 1, 0, g.K - 2)
    w = itp.interp_weights_time(
        times, g.t[k], g.t[k + 1], result.psd, result.config.flags.covariance_variant
    )
    xa = NodeState(g.T[k, n], g.eps[k, n], g.varpi[k, n])
    xb = NodeState(g.T[k + 1, n], g.eps[k + 1, n], g.varpi[k + 1, n])
    x = itp.interpolate(xa, xb, w)
    P = None
    cov = result.covariance
    if with_cov and cov is not None:
        ia = k * g.N + n
        Paa = cov.node[ia]
        Pbb = cov.node[ia + g.N]
        Pba = cov.time[ia]
        Pab = np.swapaxes(Pba, -1, -2)
        P = itp.interpolated_covariance(xa, xb, w, Paa, Pab, Pba, Pbb)[:, :6, :6]
    return x, P


# -- serialization ------------------------------------------------------------


def result_to_dict(result, include_covariance=True):
    g = result.grid
    out = {
        "schema": 1,
        "dataset_hash": result.dataset_hash,
        "config": result.config.raw,
        "grid": {
            "s": g.s,
            "t": g.t,
            "T": g.T.reshape(g.K, g.N, 16),
            "eps": g.eps,
            "varpi": g.varpi,
        },
        "report": result.report.to_dict() if hasattr(result.report, "to_dict") else result.report,
    }
    cov = result.covariance
    if include_covariance and cov is not None:
        out["covariance"] = {"node": cov.node, "space": cov.space, "time": cov.time}
    return out


def result_from_dict(d, path=None):
    from .config import config_from_dict
    from .errors import ParseError
    from .solver import PosteriorCovariance

    try:
        cfg = config_from_dict(d["config"], path)
        g = d["grid"]
        s = np.asarray(g["s"], float)
        t = np.asarray(g["t"], float)
        T = np.asarray(g["T"], float).reshape(len(t), len(s), 4, 4)
        grid = StateGrid(s, t, T, np.asarray(g["eps"], float), np.asarray(g["varpi"], float))
        cov = None
        if d.get("covariance"):
            c = d["covariance"]
            cov = PosteriorCovariance(
                len(s),
                len(t),
                np.asarray(c["node"], float).reshape(-1, 18, 18),
                np.asarray(c["space"], float).reshape(-1, 18, 18),
                np.asarray(c["time"], float).reshape(-1, 18, 18),
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed estimate result: {exc}", path) from None
    return EstimateResult(grid, d.get("report", {}), cfg, cov, d.get("dataset_hash", ""), cfg.psd)
