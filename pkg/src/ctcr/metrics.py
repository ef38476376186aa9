"""Accuracy and consistency metrics against ground truth."""

import csv
import io as _io
from dataclasses import asdict, dataclass

import numpy as np

from . import lie
from .errors import LengthMismatch, NotPositiveDefinite
from .pipeline import arclength_indices, query_time_batch

CSV_FIELDS = (
    "nees_avg",
    "mae_pos_tip",
    "mae_rot_tip",
    "mae_pos_body",
    "mae_rot_body",
    "rmse_pos_tip",
    "rmse_rot_tip",
    "rmse_pos_body",
    "rmse_rot_body",
    "n_samples",
)


@dataclass
class MetricReport:
    """Scores of one estimate.

    Position errors are percentages of the rod length, rotation errors are
    in radians. ``body`` values average over every truth frame at non-zero
    arclength.
    """

    nees_avg: float
    mae_pos_tip: float
    mae_rot_tip: float
    mae_pos_body: float
    mae_rot_body: float
    rmse_pos_tip: float
    rmse_rot_tip: float
    rmse_pos_body: float
    rmse_rot_body: float
    n_samples: int

    def to_dict(self):
        return {k: (int(v) if k == "n_samples" else float(v)) for k, v in asdict(self).items()}

    def csv_header(self):
        return ",".join(CSV_FIELDS)

    def csv_row(self):
        d = self.to_dict()
        buf = _io.StringIO()
        csv.writer(buf, lineterminator="").writerow([repr(d[k]) if k != "n_samples" else d[k] for k in CSV_FIELDS])
        return buf.getvalue()


def nees(errors, covariances):
    """Average ``e^T P^-1 e`` over samples.

    Parameters
    ----------
    errors : array_like (M, d)
    covariances : array_like (M, d, d)
    """
    e = np.asarray(errors, dtype=float)
    P = np.asarray(covariances, dtype=float)
    if len(e) != len(P):
        raise LengthMismatch(f"{len(e)} errors but {len(P)} covariances")
    if not len(e):
        return 0.0
    try:
        L = np.linalg.cholesky(0.5 * (P + np.swapaxes(P, -1, -2)))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("a covariance block is not positive definite") from None
    z = np.linalg.solve(L, e[..., None])[..., 0]
    return float(np.mean(np.sum(z * z, axis=-1)))


def position(T):
    """Frame origin in the inertial frame for poses ``T_bi``."""
    T = np.asarray(T, dtype=float)
    return -np.einsum("...ji,...j->...i", T[..., :3, :3], T[..., :3, 3])


def pose_errors(T_est, T_true):
    """Position distance [m] and rotation angle [rad] per sample."""
    T_est = np.asarray(T_est, dtype=float)
    T_true = np.asarray(T_true, dtype=float)
    if T_est.shape != T_true.shape:
        raise LengthMismatch(f"estimate shape {T_est.shape} vs truth shape {T_true.shape}")
    dp = np.linalg.norm(position(T_est) - position(T_true), axis=-1)
    dR = T_est[..., :3, :3] @ np.swapaxes(T_true[..., :3, :3], -1, -2)
    dr = np.linalg.norm(lie.log_so3(dR), axis=-1)
    return dp, dr


def mae(T_est, T_true, length):
    """Mean absolute errors ``(position % of length, rotation rad)``."""
    dp, dr = pose_errors(T_est, T_true)
    return 100.0 * float(np.mean(dp)) / length, float(np.mean(dr))


def rmse(T_est, T_true, length):
    """Root-mean-square errors ``(position % of length, rotation rad)``."""
    dp, dr = pose_errors(T_est, T_true)
    return 100.0 * float(np.sqrt(np.mean(dp**2))) / length, float(np.sqrt(np.mean(dr**2)))


def evaluate(result, truth, tip_arclength=None, query_times=None):
    """Score ``result`` against a truth field.

    The estimate is interpolated in time at the truth timestamps; truth
    arclengths must be grid arclengths.

    Parameters
    ----------
    result : EstimateResult
    truth : TruthField
    tip_arclength : float, optional
        Arclength of the tip frame; defaults to the largest truth arclength.
    query_times : array_like, optional
        Subset of truth timestamps to score; all by default.
    """
    g = result.grid
    length = float(g.s[-1])
    t = truth.t
    sel = np.ones(len(t), dtype=bool)
    if query_times is not None:
        sel = np.isin(t, np.asarray(query_times))
    t = t[sel]
    inside = (t >= g.t[0] - 1e-9) & (t <= g.t[-1] + 1e-9)
    t = t[inside]
    Ttrue = truth.T[sel][inside]
    idx = arclength_indices(truth.s, g.s)
    if tip_arclength is None:
        tip_arclength = float(np.max(truth.s))
    have_cov = result.covariance is not None
    stats = {"tip": [], "body": []}
    nees_e, nees_P = [], []
    for j, (sj, n) in enumerate(zip(truth.s, idx)):
        if sj <= 0.0:
            continue
        x, P = query_time_batch(result, int(n), t, with_cov=have_cov)
        Tt = Ttrue[:, j]
        dp, dr = pose_errors(x.T, Tt)
        stats["body"].append((dp, dr))
        if abs(sj - tip_arclength) <= 1e-9 * max(1.0, length):
            stats["tip"].append((dp, dr))
        if have_cov:
            nees_e.append(lie.log_rel(x.T, Tt))
            nees_P.append(P)
    if not stats["body"]:
        raise LengthMismatch("truth has no frames at non-zero arclength")

    def agg(key):
        dp = np.concatenate([a for a, _ in stats[key]])
        dr = np.concatenate([b for _, b in stats[key]])
        return (
            100.0 * dp.mean() / length,
            dr.mean(),
            100.0 * np.sqrt(np.mean(dp**2)) / length,
            np.sqrt(np.mean(dr**2)),
        )

    tip = agg("tip") if stats["tip"] else (np.nan,) * 4
    body = agg("body")
    d = nees(np.concatenate(nees_e), np.concatenate(nees_P)) if have_cov else float("nan")
    return MetricReport(
        d, tip[0], tip[1], body[0], body[1], tip[2], tip[3], body[2], body[3],
        int(len(t) * len(stats["body"])),
    )
