"""Estimator configuration.

Two parameter sets ship with the package, ``sim_params.json`` and
``experiment_params.json``; ``load_config`` accepts either name or a path.
"""

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .errors import ParseError
from .factors import MASK_BLOCKS, MeasurementNoise, PsdMatrices
from .solver import SolverOptions
from .state import NodeState

BUILTIN = ("sim_params", "experiment_params")


@dataclass
class GridConfig:
    N: int = 17
    node_rate_hz: float = 30.0
    eps_tol: float = 0.1
    max_iters: int = 50


@dataclass
class Flags:
    qs_strain_psd: str = "q2"
    covariance_variant: str = "conditional"
    compute_covariance: bool = True
    mask_velocity: bool = False
    levenberg_marquardt: bool = False


@dataclass
class Config:
    """Everything needed to turn a dataset into an estimate.

    Attributes
    ----------
    psd : PsdMatrices
    noise : MeasurementNoise
        Default noise, used for measurements that do not carry their own.
    grid : GridConfig
    flags : Flags
    length : float
        Rod length [m].
    backbone_axis : int
        Index of the linear strain component along the backbone.
    boundary_mask : list of str
        State blocks constrained at the base.
    boundary_eps : ndarray (6,)
        Base strain mean; the base pose is the identity and velocity zero.
    raw : dict
        The parsed file, echoed into results.
    """

    psd: PsdMatrices
    noise: MeasurementNoise
    grid: GridConfig = field(default_factory=GridConfig)
    flags: Flags = field(default_factory=Flags)
    length: float = 1.0
    backbone_axis: int = 2
    boundary_mask: list = field(default_factory=lambda: list(MASK_BLOCKS))
    boundary_eps: np.ndarray = None
    raw: dict = field(default_factory=dict)

    def solver_options(self):
        return SolverOptions(
            eps_tol=self.grid.eps_tol,
            max_iters=self.grid.max_iters,
            mask_velocity=self.flags.mask_velocity,
            covariance_variant=self.flags.covariance_variant,
            levenberg_marquardt=self.flags.levenberg_marquardt,
        )

    def boundary_state(self):
        eps = self.boundary_eps
        if eps is None:
            eps = np.zeros(6)
            eps[self.backbone_axis] = 1.0
        return NodeState(np.eye(4), eps, np.zeros(6))


def _diag(v, n, name, path):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ParseError(f"{name} needs {n} diagonal entries, got shape {v.shape}", path)
    if np.any(v <= 0):
        raise ParseError(f"{name} diagonal entries must be positive", path)
    return v


def config_from_dict(d, path=None):
    try:
        p, nz = d["psd"], d["noise"]
        g = GridConfig(**d.get("grid", {}))
        f = Flags(**d.get("flags", {}))
        psd = PsdMatrices.from_diagonals(
            _diag(p["Q0"], 18, "Q0", path),
            _diag(p["Q1"], 6, "Q1", path),
            _diag(p["Q2"], 6, "Q2", path),
            _diag(p["Q3"], 6, "Q3", path),
            f.qs_strain_psd,
        )
        noise = MeasurementNoise(
            np.diag(_diag(nz["R_pose"], 6, "R_pose", path)),
            np.diag(_diag(nz.get("R_gyro", [1e-6] * 3), 3, "R_gyro", path)),
        )
        b = d.get("boundary", {})
        beps = b.get("eps")
        cfg = Config(
            psd,
            noise,
            g,
            f,
            float(d.get("length", 1.0)),
            int(d.get("backbone_axis", 2)),
            list(b.get("mask", MASK_BLOCKS)),
            None if beps is None else np.asarray(beps, float),
            d,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed config: {exc}", path) from None
    if cfg.grid.N < 2 or not cfg.grid.node_rate_hz > 0 or not cfg.grid.eps_tol > 0:
        raise ParseError("grid needs N >= 2, node_rate_hz > 0 and eps_tol > 0", path)
    return cfg


def builtin_path(name):
    return resources.files("ctcr") / "data" / f"{name}.json"


def load_config(name_or_path):
    """Load a config by builtin name (``sim_params``) or file path."""
    if str(name_or_path) in BUILTIN:
        path = builtin_path(str(name_or_path))
        return config_from_dict(io.loads(path.read_text(), path.name), path.name)
    path = Path(name_or_path)
    return config_from_dict(io.load_json(path), path)
