"""Ready-made trajectories and sensor layouts used by the examples and tests."""

import numpy as np

from .synth import CosineProfile, Segment, Sensor, SensorSuite, TrajectorySpec

SIM_R_POSE = np.diag([5e-6] * 3 + [1.25e-4] * 3)
EXP_R_POSE = np.diag([2e-5] * 3 + [2.5e-3] * 3)
EXP_R_GYRO = np.diag([1e-6] * 3)


def extensible(duration=1.0, length=1.0, min_elongation=0.15, seed=0):
    """Three extensible segments: bent and fully extended, contracted, then
    extended again into a different bend."""
    w = 1.0 / duration
    segs = []
    for j, (kx, ky) in enumerate(((2.0, 0.5), (-1.5, 1.0), (1.0, -2.0))):
        mid = 0.5 * (1.0 + min_elongation)
        amp = 0.5 * (1.0 - min_elongation)
        segs.append(
            Segment(
                1.0 / 3,
                CosineProfile(kx, [0.6 * kx], [0.5 * w], [0.0]),
                CosineProfile(ky, [-0.5], [0.5 * w], [0.3 * j]),
                CosineProfile(mid, [amp], [w], [0.0]),
            )
        )
    return TrajectorySpec(segs, duration, length, True, 2, seed, "extensible")


def bending(duration=10.0, length=1.0, speed=1.0, seed=0):
    """Single-length rod sweeping through smooth multi-axis bends.

    ``speed`` scales every temporal frequency.
    """
    rng = np.random.default_rng(seed)
    segs = []
    for j in range(3):
        f = speed * rng.uniform(0.08, 0.2, 2)
        segs.append(
            Segment(
                1.0 / 3,
                CosineProfile(rng.uniform(-1, 1), [rng.uniform(1.0, 2.0)], [f[0]], [rng.uniform(0, 2 * np.pi)]),
                CosineProfile(rng.uniform(-1, 1), [rng.uniform(1.0, 2.0)], [f[1]], [rng.uniform(0, 2 * np.pi)]),
            )
        )
    return TrajectorySpec(segs, duration, length, False, 2, seed, "bending")


def segment_tip_suite(length=1.0, rate=30.0, R=SIM_R_POSE, truth_per_segment=2, truth_rate=30.0):
    """Pose sensors at the base and at each segment tip of a three-segment rod."""
    arcs = [0.0, length / 3, 2 * length / 3, length]
    sensors = [Sensor(f"pose{i}", "pose", a, rate, R) for i, a in enumerate(arcs)]
    m = 3 * truth_per_segment
    truth = [length * i / m for i in range(m + 1)]
    return SensorSuite(sensors, [], truth, truth_rate)


def tip_base_suite(length=1.0, pose_rate=50.0, gyro_rate=30.0, R_pose=EXP_R_POSE, R_gyro=EXP_R_GYRO,
                   gyros=False, dropouts=(), truth_rate=15.0):
    """Pose sensors at base and tip, optional gyroscopes at tip and midpoint,
    and five evenly spaced truth frames."""
    sensors = [
        Sensor("pose_base", "pose", 0.0, pose_rate, R_pose),
        Sensor("pose_tip", "pose", length, pose_rate, R_pose),
    ]
    if gyros:
        sensors += [
            Sensor("gyro_tip", "gyro", length, gyro_rate, R_gyro),
            Sensor("gyro_mid", "gyro", length / 2, gyro_rate, R_gyro),
        ]
    truth = [length * i / 4 for i in range(5)]
    return SensorSuite(sensors, list(dropouts), truth, truth_rate)
