import numpy as np
import pytest

from ctcr import io, metrics, pipeline, scenarios, synth
from ctcr.config import load_config
from ctcr.errors import ArclengthMismatch, MixedQuery, OutOfInterval, ParseError


@pytest.fixture(scope="module")
def small_result():
    cfg = load_config("experiment_params")
    cfg.grid.N = 5
    ds = synth.sample_measurements(
        scenarios.bending(duration=0.5), scenarios.tip_base_suite(gyros=True), 1
    )
    return pipeline.estimate(ds, cfg), ds


def test_suggest_N():
    assert pipeline.suggest_N([0.0, 1.0], 1.0) == 2
    assert pipeline.suggest_N([0.0, 1 / 3, 2 / 3, 1.0], 1.0) == 4
    assert pipeline.suggest_N([0.0, 1 / 3, 1.0], 1.0, at_least=17) == 19
    assert pipeline.suggest_N([0.0, 0.25, 0.5], 1.0, at_least=17) == 17
    assert pipeline.suggest_N([0.0, 0.3], 0.9, at_least=5) == 7


def test_arclength_mismatch_hint():
    s = np.linspace(0, 1, 17)
    assert list(pipeline.arclength_indices([0.0, 0.5, 1.0], s)) == [0, 8, 16]
    with pytest.raises(ArclengthMismatch, match="N=19"):
        pipeline.arclength_indices([0.0, 1 / 3, 1.0], s)


def test_node_times_cover_span():
    ds = synth.sample_measurements(scenarios.bending(duration=0.5), scenarios.tip_base_suite(), 0)
    t = pipeline.node_times(ds, 30.0)
    assert t[0] == 0.0 and t[-1] >= 0.5 - 1e-12
    assert np.allclose(np.diff(t), 1 / 30)


def test_query_node_exact(small_result):
    res, _ = small_result
    g = res.grid
    for n, k in ((0, 0), (2, 5), (4, g.K - 1)):
        q = pipeline.query(res, g.s[n], g.t[k])
        assert q.mode == "node"
        assert np.array_equal(q.state.T, g.T[k, n])
        assert np.array_equal(q.state.eps, g.eps[k, n])
        assert np.array_equal(q.state.varpi, g.varpi[k, n])
        assert np.array_equal(q.cov, res.covariance.node[k * g.N + n])


def test_query_modes_and_errors(small_result):
    res, _ = small_result
    g = res.grid
    tm = 0.5 * (g.t[3] + g.t[4])
    sm = 0.5 * (g.s[1] + g.s[2])
    assert pipeline.query(res, g.s[1], tm).mode == "time"
    assert pipeline.query(res, sm, g.t[3]).mode == "space"
    with pytest.raises(MixedQuery):
        pipeline.query(res, sm, tm)
    with pytest.raises(OutOfInterval):
        pipeline.query(res, g.s[1], g.t[-1] + 1.0)
    with pytest.raises(OutOfInterval):
        pipeline.query(res, 1.5, g.t[0])


def test_query_time_batch_matches_scalar(small_result):
    res, _ = small_result
    g = res.grid
    times = np.linspace(g.t[0], g.t[-1], 23)
    x, P = pipeline.query_time_batch(res, 3, times)
    for i in (0, 7, 22):
        q = pipeline.query(res, g.s[3], times[i])
        assert np.allclose(x.T[i], q.state.T, atol=1e-12)
        assert np.allclose(P[i], q.cov[:6, :6], rtol=1e-9, atol=1e-15)


def test_interpolated_covariance_psd(small_result):
    res, _ = small_result
    g = res.grid
    for t in np.linspace(g.t[2], g.t[3], 5):
        P = pipeline.query(res, g.s[4], t).cov
        assert np.allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() > 0


def test_result_round_trip(small_result):
    res, _ = small_result
    d = io.loads(io.dumps(pipeline.result_to_dict(res), compact=True))
    back = pipeline.result_from_dict(d)
    assert np.array_equal(back.grid.T, res.grid.T)
    assert np.array_equal(back.grid.varpi, res.grid.varpi)
    assert np.array_equal(back.covariance.time, res.covariance.time)
    q0 = pipeline.query(res, 0.5, 0.11)
    q1 = pipeline.query(back, 0.5, 0.11)
    assert np.array_equal(q0.state.T, q1.state.T)
    assert np.array_equal(q0.cov, q1.cov)
    d2 = pipeline.result_to_dict(res, include_covariance=False)
    assert "covariance" not in d2
    assert pipeline.result_from_dict(io.loads(io.dumps(d2))).covariance is None


def test_result_malformed():
    with pytest.raises(ParseError):
        pipeline.result_from_dict({"schema": 1, "grid": {}})


def test_noisy_fixture_nees():
    # Monte-Carlo fixture with noise matched to the config
    cfg = load_config("sim_params")
    suite = scenarios.segment_tip_suite(R=cfg.noise.R_pose, truth_per_segment=1)
    spec = scenarios.extensible(duration=0.75)
    v = []
    for seed in range(3):
        ds = synth.sample_measurements(spec, suite, seed)
        v.append(metrics.evaluate(pipeline.estimate(ds, cfg), ds.truth).nees_avg)
    assert 3.0 <= np.mean(v) <= 12.0
