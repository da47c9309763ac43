import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colorshed.control import (
    ControlConfig,
    ControlLoop,
    ControlRecord,
    LatencyEstimates,
    queue_capacity,
    supported_throughput,
    target_drop_rate,
)
from colorshed.errors import ConfigError, NotMeasuredError
from colorshed.threshold import SHED_NONE, UtilityHistory, build_cdf, threshold_for_drop_rate


@pytest.mark.parametrize("proc_q,st_", [(100, 10.0), (500, 2.0)])
def test_supported_throughput(proc_q, st_):
    assert supported_throughput(LatencyEstimates(proc_q)) == st_


def test_supported_throughput_fractional():
    assert supported_throughput(LatencyEstimates(33.3)) == pytest.approx(30.03, abs=0.01)


def test_supported_throughput_unmeasured():
    with pytest.raises(NotMeasuredError):
        supported_throughput(LatencyEstimates(0.0))


@pytest.mark.parametrize("st_,fps,r", [(10, 40, 0.75), (10, 10, 0.0), (15, 10, 0.0), (2, 10, 0.8), (5, 0, 0.0)])
def test_target_drop_rate(st_, fps, r):
    assert target_drop_rate(st_, fps) == r


def test_queue_capacity_examples():
    cfg = ControlConfig(latency_bound_ms=1000)
    assert queue_capacity(LatencyEstimates(100, 40, 20, 40), cfg) == 9
    assert queue_capacity(LatencyEstimates(100, 900, 0, 50), cfg) == 1
    assert queue_capacity(LatencyEstimates(1000), cfg) == 1


def brute_capacity(proc_q, fixed, lb):
    n_max = -1
    for n in range(0, 10000):
        if (n + 1) * proc_q + fixed <= lb:
            n_max = n
    return max(1, n_max + 1)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.5, 2000), st.floats(0, 900))
def test_queue_capacity_oracle_and_slack(proc_q, fixed):
    cfg = ControlConfig(latency_bound_ms=1000)
    est = LatencyEstimates(proc_q, fixed, 0, 0)
    cap = queue_capacity(est, cfg)
    assert cap == brute_capacity(proc_q, fixed, 1000)
    assert cap >= 1
    assert cap * proc_q + fixed <= 1000 + proc_q


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 1000), st.floats(1e-3, 1000), st.floats(0.01, 1000))
def test_target_drop_rate_monotone(st1, st2, fps):
    # ST = 1000 / proc_q is always strictly positive
    lo, hi = sorted((st1, st2))
    r_lo, r_hi = target_drop_rate(lo, fps), target_drop_rate(hi, fps)
    assert 0.0 <= r_hi <= r_lo < 1.0


def test_config_validation():
    with pytest.raises(ConfigError):
        ControlConfig(latency_bound_ms=0)
    with pytest.raises(ConfigError):
        ControlConfig(ewma_alpha=1.5)
    with pytest.raises(ConfigError):
        ControlConfig.from_dict({"latency_bound": 5})
    cfg = ControlConfig(latency_bound_ms=700)
    assert ControlConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ControlLoop(ControlConfig(latency_bound_ms=50), 20, 10, 35)


def drive(loop, t, fps, proc_q):
    """One second of ingress at ``fps`` plus one completion of ``proc_q``."""
    for k in range(fps):
        loop.observe_ingress(t + k * 1000 / fps, 0.5)
    loop.observe_completion(t + 999, proc_q)
    return loop.tick(t + 1000)


def test_tick_noop_before_completion():
    loop = ControlLoop(ControlConfig(), 20, 10, 35)
    loop.observe_ingress(10, 0.4)
    assert loop.tick(1000) is None
    assert loop.threshold is SHED_NONE and loop.capacity == 64


def test_load_step_and_recovery():
    hist_vals = [k / 100 for k in range(100)]
    cfg = ControlConfig(ewma_alpha=1.0, history_window=100)
    loop = ControlLoop(cfg, 0, 0, 0, UtilityHistory.from_training(hist_vals, 100))
    t = 0
    rec = drive(loop, t, 10, 10.0)
    assert rec.r == 0.0 and rec.u_th is SHED_NONE
    # the pushed 0.5 ingress utilities change the history, so derive the oracle from it
    rec = drive(loop, 1000, 10, 500.0)
    assert rec.st == 2.0 and rec.fps_in == 10.0
    assert rec.r == pytest.approx(0.8)
    assert rec.u_th == threshold_for_drop_rate(build_cdf(loop.history), rec.r)
    assert rec.capacity == 2
    rec = drive(loop, 2000, 10, 10.0)
    assert rec.r == 0.0 and rec.u_th is SHED_NONE


def test_ewma_and_mean_estimators():
    loop = ControlLoop(ControlConfig(ewma_alpha=0.2), 0, 0, 0)
    loop.observe_completion(1, 100)
    loop.observe_completion(2, 200)
    assert loop.proc_q_live == pytest.approx(120.0)
    loop = ControlLoop(ControlConfig(proc_q_estimator="mean"), 0, 0, 0)
    loop.observe_ingress(0, 0.5)
    loop.observe_completion(1, 100)
    loop.observe_completion(2, 200)
    assert loop.tick(1000).proc_q_ms == 150.0


def test_queueing_switch():
    on = ControlLoop(ControlConfig(include_queueing=True), 0, 0, 0)
    off = ControlLoop(ControlConfig(), 0, 0, 0)
    for loop in (on, off):
        loop.observe_completion(1, 100, queue_ms=50)
    assert on.proc_q_live == 150 and off.proc_q_live == 100


def test_log_replay(tmp_path):
    loop = ControlLoop(ControlConfig(), 20, 10, 35, UtilityHistory.from_training([0.1, 0.5, 0.9]))
    for k, pq in enumerate([50, 300, 300, 20]):
        drive(loop, k * 1000, 10, pq)
    cfg = loop.cfg
    for rec in loop.log:
        est = LatencyEstimates(rec.proc_q_ms, 20, 10, 35, rec.fps_in)
        assert rec.st == supported_throughput(est)
        assert rec.r == target_drop_rate(rec.st, rec.fps_in)
        assert rec.capacity == queue_capacity(est, cfg)
    p = tmp_path / "log.csv"
    loop.write_log(p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(ControlRecord.COLUMNS) and len(lines) == 5
    assert all(math.isfinite(float(x)) for x in lines[1].split(",")[:5])


def test_recent_peak_window():
    loop = ControlLoop(ControlConfig(update_period_ms=1000), 0, 0, 0)
    assert loop.proc_q_recent_max == 0.0
    loop.observe_completion(0, 300)
    for t in range(100, 900, 100):
        loop.observe_completion(t, 2)
    assert loop.proc_q_recent_max == 300 and loop.proc_q_live < 60
    loop.observe_completion(1500, 2)
    assert loop.proc_q_recent_max == 2
