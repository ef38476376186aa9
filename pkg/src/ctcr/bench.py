"""Timing harness for the grid solver.

Each (N, K) cell builds a synthetic pose-only problem, linearizes it once
and times the stages of a single Gauss-Newton iteration. The fitted
log-log slopes summarize how cost grows with the grid size.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import scenarios, synth
from .pipeline import build_problem
from .solver import BandedCholesky, linearize
from .state import straight_grid

STAGES = ("linearize", "factor", "solve", "iteration")


@dataclass
class Timing:
    N: int
    K: int
    rep: int
    linearize: float
    factor: float
    solve: float

    @property
    def iteration(self):
        return self.linearize + self.factor + self.solve


def _problem(N, K, cfg, seed=0):
    rate = cfg.grid.node_rate_hz
    duration = (K - 1) / rate
    spec = scenarios.bending(duration=duration, length=cfg.length, seed=seed)
    suite = scenarios.tip_base_suite(length=cfg.length, R_pose=cfg.noise.R_pose)
    ds = synth.sample_measurements(spec, suite, seed)
    s = np.linspace(0.0, cfg.length, N)
    t = np.arange(K) / rate
    problem = build_problem(ds, cfg, s, t)
    return problem, straight_grid(s, t, cfg.backbone_axis)


def time_cell(N, K, cfg, reps=3, seed=0):
    """Time ``reps`` iterations on an N x K grid."""
    problem, grid = _problem(N, K, cfg, seed)
    linearize(problem, grid)  # warm caches and jit
    out = []
    for r in range(reps):
        t0 = time.perf_counter()
        sys, _ = linearize(problem, grid)
        t1 = time.perf_counter()
        chol = BandedCholesky(sys)
        t2 = time.perf_counter()
        chol.solve(sys.rhs)
        t3 = time.perf_counter()
        out.append(Timing(N, K, r, t1 - t0, t2 - t1, t3 - t2))
    return out


def fit_exponent(x, y):
    """Slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def medians(timings, stage):
    cells = {}
    for t in timings:
        cells.setdefault((t.N, t.K), []).append(getattr(t, stage))
    return {k: float(np.median(v)) for k, v in cells.items()}


def run(Ns, Ks, cfg, reps=3, seed=0, progress=None):
    """Time every (N, K) combination; returns the list of Timing rows."""
    rows = []
    for N in Ns:
        for K in Ks:
            rows.extend(time_cell(N, K, cfg, reps, seed))
            if progress:
                progress(N, K)
    return rows


def exponents(timings, stage="iteration"):
    """Fitted exponents in K (per N) and in N (per K) for one stage."""
    med = medians(timings, stage)
    out = {"K": {}, "N": {}}
    for N in sorted({n for n, _ in med}):
        Ks = sorted(k for n, k in med if n == N)
        if len(Ks) > 1:
            out["K"][N] = fit_exponent(Ks, [med[N, K] for K in Ks])
    for K in sorted({k for _, k in med}):
        Ns = sorted(n for n, k in med if k == K)
        if len(Ns) > 1:
            out["N"][K] = fit_exponent(Ns, [med[N, K] for N in Ns])
    return out


def to_csv(timings):
    lines = ["N,K,rep," + ",".join(STAGES)]
    for t in timings:
        vals = ",".join(f"{getattr(t, s):.6f}" for s in STAGES)
        lines.append(f"{t.N},{t.K},{t.rep},{vals}")
    return "\n".join(lines) + "\n"
