"""Synthetic rod trajectories and noisy sensor streams.

The rod is split into segments of piecewise-constant strain along the
arclength; each segment's bending curvature and elongation vary smoothly in
time. Poses follow by composing the exact constant-strain transforms
segment by segment, so ``dT/ds = eps^ T`` holds exactly. Body velocities
are obtained by central differences of the pose in time.
"""

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errors import BadSpec

VELOCITY_STEP = 1e-5


@dataclass
class CosineProfile:
    """``offset + sum_i amp[i] cos(2 pi freq[i] t + phase[i])``."""

    offset: float = 0.0
    amp: list = field(default_factory=list)
    freq: list = field(default_factory=list)
    phase: list = field(default_factory=list)

    def __post_init__(self):
        if not len(self.amp) == len(self.freq) == len(self.phase):
            raise BadSpec("cosine profile needs equally many amp, freq and phase terms")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, float(self.offset))
        for a, f, p in zip(self.amp, self.freq, self.phase):
            out = out + a * np.cos(2 * np.pi * f * t + p)
        return out

    def to_dict(self):
        return {
            "offset": self.offset,
            "amp": list(self.amp),
            "freq": list(self.freq),
            "phase": list(self.phase),
        }

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, (int, float)):
            return cls(float(d))
        return cls(d.get("offset", 0.0), d.get("amp", []), d.get("freq", []), d.get("phase", []))


@dataclass
class Segment:
    """One segment of constant strain along the arclength.

    Attributes
    ----------
    fraction : float
        Share of the rod's reference length.
    kappa_x, kappa_y : CosineProfile
        Bending curvature [rad/m] about the two axes normal to the backbone.
    elongation : CosineProfile
        Elongation strain along the backbone (1 = unstretched); only used for
        extensible rods.
    """

    fraction: float
    kappa_x: CosineProfile = field(default_factory=CosineProfile)
    kappa_y: CosineProfile = field(default_factory=CosineProfile)
    elongation: CosineProfile = field(default_factory=lambda: CosineProfile(1.0))

    def to_dict(self):
        return {
            "fraction": self.fraction,
            "kappa_x": self.kappa_x.to_dict(),
            "kappa_y": self.kappa_y.to_dict(),
            "elongation": self.elongation.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["fraction"]),
            CosineProfile.from_dict(d.get("kappa_x", 0.0)),
            CosineProfile.from_dict(d.get("kappa_y", 0.0)),
            CosineProfile.from_dict(d.get("elongation", 1.0)),
        )


@dataclass
class TrajectorySpec:
    """Analytic space-time rod trajectory.

    Attributes
    ----------
    segments : list of Segment
    duration : float
        Trajectory length [s].
    length : float
        Reference rod length [m].
    extensible : bool
        Whether the segment elongation profiles are applied.
    backbone_axis : int
        Index of the linear strain component along the backbone.
    seed : int
        Default RNG seed for measurement sampling.
    name : str
    """

    segments: list
    duration: float
    length: float = 1.0
    extensible: bool = False
    backbone_axis: int = 2
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not self.segments:
            raise BadSpec("trajectory needs at least one segment")
        fr = np.array([s.fraction for s in self.segments])
        if np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
            raise BadSpec(f"segment fractions must be positive and sum to 1, got {fr.tolist()}")
        if not self.duration > 0 or not self.length > 0:
            raise BadSpec("duration and length must be positive")
        if self.backbone_axis not in (0, 1, 2):
            raise BadSpec("backbone_axis must be 0, 1 or 2")

    @property
    def breakpoints(self):
        fr = np.array([s.fraction for s in self.segments])
        return self.length * np.concatenate([[0.0], np.cumsum(fr)])

    def segment_strain(self, t):
        """Strain of every segment at times ``t``; shape (len(t), n_seg, 6)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ax = self.backbone_axis
        bx, by = [a for a in range(3) if a != ax]
        out = np.zeros((len(t), len(self.segments), 6))
        for j, seg in enumerate(self.segments):
            out[:, j, ax] = seg.elongation(t) if self.extensible else 1.0
            out[:, j, 3 + bx] = seg.kappa_x(t)
            out[:, j, 3 + by] = seg.kappa_y(t)
        return out

    def to_dict(self):
        return {
            "schema": 1,
            "name": self.name,
            "duration": self.duration,
            "length": self.length,
            "extensible": self.extensible,
            "backbone_axis": self.backbone_axis,
            "seed": self.seed,
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                [Segment.from_dict(s) for s in d["segments"]],
                float(d["duration"]),
                float(d.get("length", 1.0)),
                bool(d.get("extensible", False)),
                int(d.get("backbone_axis", 2)),
                int(d.get("seed", 0)),
                d.get("name", ""),
            )
        except (KeyError, TypeError) as exc:
            raise BadSpec(f"malformed trajectory spec: {exc}") from None


@dataclass
class TruthField:
    """Ground-truth states sampled on an arclength-by-time lattice.

    Arrays are indexed ``[time, arclength]``.
    """

    s: np.ndarray
    t: np.ndarray
    T: np.ndarray
    eps: np.ndarray
    varpi: np.ndarray

    def positions(self):
        """Body origins in the inertial frame, ``-C^T r``."""
        C = self.T[..., :3, :3]
        return -np.einsum("...ji,...j->...i", C, self.T[..., :3, 3])


def _poses(spec, s, t):
    """Poses (len(t), len(s), 4, 4) and strains (len(t), len(s), 6)."""
    s = np.asarray(s, dtype=float)
    bp = spec.breakpoints
    strain = spec.segment_strain(t)
    nt, nseg = strain.shape[:2]
    # poses at segment starts
    starts = np.zeros((nt, nseg, 4, 4))
    T = np.broadcast_to(np.eye(4), (nt, 4, 4)).copy()
    for j in range(nseg):
        starts[:, j] = T
        T = lie.exp_se3((bp[j + 1] - bp[j]) * strain[:, j]) @ T
    seg = np.clip(np.searchsorted(bp, s, side="right") - 1, 0, nseg - 1)
    local = s - bp[seg]
    eps = strain[:, seg]
    poses = lie.exp_se3(local[None, :, None] * eps) @ starts[:, seg]
    return poses, eps


def generate_truth(spec, s_samples, t_samples):
    """Ground truth at every combination of ``s_samples`` and ``t_samples``.

    Parameters
    ----------
    spec : TrajectorySpec
    s_samples : array_like
        Arclengths [m] within ``[0, spec.length]``.
    t_samples : array_like
        Times [s].

    Returns
    -------
    TruthField
    """
    s = np.atleast_1d(np.asarray(s_samples, dtype=float))
    t = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if np.any(s < 0) or np.any(s > spec.length + 1e-12):
        raise BadSpec(f"arclengths must lie in [0, {spec.length}]")
    T, eps = _poses(spec, s, t)
    h = VELOCITY_STEP
    Tp, _ = _poses(spec, s, t + h)
    Tm, _ = _poses(spec, s, t - h)
    varpi = lie.log_se3(Tp @ lie.inv_se3(Tm)) / (2 * h)
    return TruthField(s, t, T, eps, varpi)


# -- sensors ------------------------------------------------------------------


@dataclass
class Sensor:
    """A pose or gyroscope sensor fixed at one arclength.

    Attributes
    ----------
    name : str
    kind : {'pose', 'gyro'}
    arclength : float
        [m]
    rate : float
        Nominal sample rate [Hz].
    R : ndarray
        Noise covariance, 6x6 for pose (``[rho; phi]``), 3x3 for gyro.
    """

    name: str
    kind: str
    arclength: float
    rate: float
    R: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.ndim == 1:
            self.R = np.diag(self.R)
        want = 6 if self.kind == "pose" else 3
        if self.kind not in ("pose", "gyro") or self.R.shape != (want, want):
            raise BadSpec(f"sensor {self.name!r}: bad kind or noise shape {self.R.shape}")
        if not self.rate > 0:
            raise BadSpec(f"sensor {self.name!r}: rate must be positive")


@dataclass
class SensorSuite:
    """Sensors, dropout windows and ground-truth sampling.

    Attributes
    ----------
    sensors : list of Sensor
    dropouts : list of (sensor name, t_start, t_end)
    truth_arclengths : list of float
        Arclengths [m] at which ground truth is recorded.
    truth_rate : float
        Ground-truth sample rate [Hz].
    jitter : float
        Timestamp jitter as a fraction of the sample period.
    """

    sensors: list
    dropouts: list = field(default_factory=list)
    truth_arclengths: list = field(default_factory=list)
    truth_rate: float = 30.0
    jitter: float = 0.1

    def sensor(self, name):
        for s in self.sensors:
            if s.name == name:
                return s
        raise BadSpec(f"unknown sensor {name!r}")

    def to_dict(self):
        def sd(s):
            R = s.R
            diag = np.allclose(R, np.diag(np.diag(R)))
            return {
                "name": s.name,
                "kind": s.kind,
                "arclength": s.arclength,
                "rate": s.rate,
                "R": np.diag(R).tolist() if diag else R.tolist(),
            }

        return {
            "schema": 1,
            "sensors": [sd(s) for s in self.sensors],
            "dropouts": [
                {"sensor": n, "t_start": a, "t_end": b} for n, a, b in self.dropouts
            ],
            "truth_arclengths": list(self.truth_arclengths),
            "truth_rate": self.truth_rate,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            sensors = [
                Sensor(x["name"], x["kind"], float(x["arclength"]), float(x["rate"]), x["R"])
                for x in d["sensors"]
            ]
            drops = [(x["sensor"], float(x["t_start"]), float(x["t_end"])) for x in d.get("dropouts", [])]
            return cls(
                sensors,
                drops,
                [float(v) for v in d.get("truth_arclengths", [])],
                float(d.get("truth_rate", 30.0)),
                float(d.get("jitter", 0.1)),
            )
        except (KeyError, TypeError) as exc:
            raise BadSpec(f"malformed sensor suite: {exc}") from None


@dataclass
class Measurement:
    kind: str
    sensor: str
    arclength: float
    t: float
    value: np.ndarray
    R: np.ndarray


@dataclass
class Dataset:
    """Time-sorted measurements plus optional ground truth and provenance."""

    measurements: list
    truth: TruthField = None
    metadata: dict = field(default_factory=dict)

    def arclengths(self):
        return sorted({m.arclength for m in self.measurements})

    def time_span(self):
        ts = [m.t for m in self.measurements]
        return (min(ts), max(ts)) if ts else (0.0, 0.0)


def sample_times(rate, duration, jitter, rng):
    period = 1.0 / rate
    nominal = np.arange(0.0, duration + 0.5 * period, period)
    nominal = nominal[nominal <= duration]
    t = nominal + rng.uniform(-jitter, jitter, len(nominal)) * period
    return np.clip(t, 0.0, duration)


def sample_measurements(spec, suite, seed=None):
    """Noisy, jittered measurements of ``spec`` from every sensor in ``suite``.

    Pose samples are ``exp(n^) T`` with ``n ~ N(0, R)``; gyro samples are the
    angular half of the body velocity plus ``N(0, R)`` noise. Samples inside
    a sensor's dropout windows are removed.
    """
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    out = []
    for sensor in suite.sensors:
        if not 0.0 <= sensor.arclength <= spec.length + 1e-12:
            raise BadSpec(f"sensor {sensor.name!r} arclength outside the rod")
        t = sample_times(sensor.rate, spec.duration, suite.jitter, rng)
        d = sensor.R.shape[0]
        noise = rng.standard_normal((len(t), d)) @ np.linalg.cholesky(sensor.R).T
        keep = np.ones(len(t), dtype=bool)
        for name, a, b in suite.dropouts:
            if name == sensor.name:
                keep &= ~((t >= a) & (t <= b))
        t, noise = t[keep], noise[keep]
        if not len(t):
            continue
        truth = generate_truth(spec, [sensor.arclength], t)
        if sensor.kind == "pose":
            vals = lie.exp_se3(noise) @ truth.T[:, 0]
        else:
            vals = truth.varpi[:, 0, 3:] + noise
        for ti, v in zip(t, vals):
            out.append(Measurement(sensor.kind, sensor.name, sensor.arclength, float(ti), v, sensor.R))
    out.sort(key=lambda m: (m.t, m.sensor))
    truth = None
    if suite.truth_arclengths:
        tt = np.arange(0.0, spec.duration + 1e-9, 1.0 / suite.truth_rate)
        truth = generate_truth(spec, suite.truth_arclengths, tt)
    meta = {"spec": spec.to_dict(), "suite": suite.to_dict(), "seed": int(seed)}
    return Dataset(out, truth, meta)


def consistency_residual(spec, s, t, h=1e-4):
    """``d varpi/ds - d eps/dt - eps^curly varpi`` by central differences."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    c = generate_truth(spec, s, t)
    sp = generate_truth(spec, s + h, t)
    sm = generate_truth(spec, s - h, t)
    tp = generate_truth(spec, s, t + h)
    tm = generate_truth(spec, s, t - h)
    dw_ds = (sp.varpi - sm.varpi) / (2 * h)
    de_dt = (tp.eps - tm.eps) / (2 * h)
    return dw_ds - de_dt - np.einsum("...ij,...j->...i", lie.curly_wedge(c.eps), c.varpi)
