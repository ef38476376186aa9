import json

import numpy as np
import pytest

from ctcr import io, scenarios, synth
from ctcr.config import builtin_path, config_from_dict, load_config
from ctcr.errors import ParseError


def builtin_dict(name="sim_params"):
    return json.loads(builtin_path(name).read_text())


def test_experiment_noise_values():
    # [PAPER] experiment parameter set
    cfg = load_config("experiment_params")
    assert np.allclose(np.diag(cfg.noise.R_pose), [2e-5] * 3 + [2.5e-3] * 3)
    assert np.allclose(np.diag(cfg.noise.R_gyro), [1e-6] * 3)
    assert cfg.grid.N == 17
    assert cfg.grid.node_rate_hz == 30.0
    assert cfg.grid.eps_tol == 0.1


def test_sim_values():
    # [PAPER] simulation parameter set
    d = builtin_dict("sim_params")
    assert d["noise"]["R_pose"] == [1e-5] * 3 + [2.5e-4] * 3
    assert d["psd"]["Q0"][:6] == [4e-7] * 3 + [5e-4] * 3
    assert d["psd"]["Q0"][8] == 5e6
    assert d["psd"]["Q1"] == [1.5] * 3 + [25.0] * 3
    assert d["psd"]["Q2"] == [4e-2] * 3 + [500.0] * 3
    assert d["psd"]["Q3"] == [15.0] * 6
    cfg = load_config("sim_params")
    assert cfg.grid.N == 19


def test_malformed_json_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema": 1,\n  "psd": [1, 2,,]\n}\n')
    with pytest.raises(ParseError) as ei:
        load_config(p)
    assert ei.value.line == 3
    assert ei.value.column is not None and ei.value.column > 1
    assert f"{p}:3:" in str(ei.value)


def test_bad_diagonal(tmp_path):
    d = builtin_dict()
    d["noise"]["R_pose"] = [1e-5] * 5
    with pytest.raises(ParseError, match="R_pose"):
        config_from_dict(d)
    d = builtin_dict()
    d["psd"]["Q2"][0] = -1.0
    with pytest.raises(ParseError, match="positive"):
        config_from_dict(d)


def test_schema_mismatch(tmp_path):
    d = builtin_dict()
    d["schema"] = 2
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    with pytest.raises(ParseError, match="schema"):
        load_config(p)


def test_missing_key():
    d = builtin_dict()
    del d["psd"]
    with pytest.raises(ParseError, match="malformed"):
        config_from_dict(d)


def test_config_path_equals_builtin(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(builtin_path("experiment_params").read_text())
    a, b = load_config(p), load_config("experiment_params")
    assert np.array_equal(a.psd.Q0, b.psd.Q0)
    assert a.raw == b.raw


def test_dataset_round_trip(tmp_path):
    spec = scenarios.bending(duration=0.5)
    suite = scenarios.tip_base_suite(gyros=True)
    ds = synth.sample_measurements(spec, suite, 3)
    p = tmp_path / "ds.json"
    p.write_text(io.dumps(io.dataset_to_dict(ds)))
    back = io.load_dataset(p)
    assert len(back.measurements) == len(ds.measurements)
    for a, b in zip(ds.measurements, back.measurements):
        assert a.kind == b.kind and a.sensor == b.sensor
        assert a.t == b.t and a.arclength == b.arclength
        assert np.array_equal(a.value, b.value)
        assert np.array_equal(a.R, b.R)
    assert np.array_equal(back.truth.T, ds.truth.T)
    # serialization is stable
    assert io.dumps(io.dataset_to_dict(back)) == p.read_text()
    assert io.dataset_hash(p) == io.dataset_hash(p.read_text())


def test_unknown_measurement_kind(tmp_path):
    spec = scenarios.bending(duration=0.2)
    ds = synth.sample_measurements(spec, scenarios.tip_base_suite(), 0)
    d = io.dataset_to_dict(ds)
    d["measurements"][0]["type"] = "magnetometer"
    with pytest.raises(ParseError, match="magnetometer"):
        io.dataset_from_dict(d)
