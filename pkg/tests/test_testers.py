import json
import math

import numpy as np
import pytest
from sklearn.base import clone

from closeness.distributions import CountVector, make_perturbed_uniform, make_uniform
from closeness.exceptions import InvalidParameterError
from closeness.rng import substream
from closeness.testers import (
    ACCEPT,
    REJECT,
    ClosenessTester,
    NotFittedError,
    TestConfig,
    calibrate_constants,
    extreme_floor,
    plan_sample_sizes,
    run_test_basic,
    run_test_extreme,
    run_test_nonextreme,
    run_trials,
    theorem_floor,
)


def test_planner_formula():
    n, eps, m1 = 2000, 0.5, 2000
    expected = math.ceil(max(n / (math.sqrt(m1) * eps**2), math.sqrt(n) / eps**2))
    assert plan_sample_sizes(n, eps, m1) == expected
    assert plan_sample_sizes(n, eps, m1, c=4) == math.ceil(4 * max(n / (math.sqrt(m1) * eps**2),
                                                                   math.sqrt(n) / eps**2))


def test_planner_floor():
    with pytest.raises(InvalidParameterError):
        plan_sample_sizes(2000, 0.5, 10)
    assert plan_sample_sizes(2000, 0.5, 10, enforce_floor=False) > 0
    assert theorem_floor(1000, 1.0) == pytest.approx(100)


def test_planner_balanced_at_large_m1():
    # once m1 >= n the sqrt(n)/eps^2 term dominates
    assert plan_sample_sizes(100, 1.0, 10_000) == 10


def test_config_warnings_and_fidelity():
    cfg = TestConfig(n=2000, eps=0.5, m1=10, m2=100)
    assert any("m1 below" in w for w in cfg.warnings)
    with pytest.raises(InvalidParameterError):
        TestConfig(n=2000, eps=0.5, m1=10, m2=100, fidelity=True)
    with pytest.raises(InvalidParameterError):
        TestConfig(n=10, eps=0.0, m1=10, m2=10)
    with pytest.raises(InvalidParameterError):
        TestConfig(n=10, eps=0.5, m1=10, m2=10, regime="weird")


def test_auto_regime():
    n, eps = 2000, 0.5
    hi = math.ceil(extreme_floor(n, eps))
    assert TestConfig(n=n, eps=eps, m1=hi, m2=50).resolved_regime() == "extreme"
    assert TestConfig(n=n, eps=eps, m1=hi - 1, m2=50).resolved_regime() == "nonextreme"


def test_estimator_api():
    est = ClosenessTester(eps=0.5, m1=100, m2=50, regime="nonextreme")
    params = est.get_params()
    assert params["m1"] == 100 and params["regime"] == "nonextreme"
    assert clone(est).get_params() == params
    with pytest.raises(NotFittedError):
        est.predict(np.zeros(5, int), np.zeros(5, int))


def test_identical_zero_samples_accept():
    zeros = CountVector(np.zeros(20, int), 50)
    cfg = TestConfig(n=20, eps=0.5, m1=50, m2=50)
    for runner in (run_test_basic, run_test_nonextreme, run_test_extreme):
        assert runner(zeros, zeros, zeros, zeros, cfg).verdict == ACCEPT


def test_heavy_v_check_rejects():
    n = 10
    cfg = TestConfig(n=n, eps=0.5, m1=100, m2=100, kappa=1e-3)
    S1 = CountVector([100] + [0] * (n - 1), 100)
    T1 = CountVector([0, 100] + [0] * (n - 2), 100)
    d = run_test_nonextreme(S1, S1, T1, T1, cfg)
    assert d.partition["B"] == 2
    assert d.verdict == REJECT and not d.checks["V_B"].passed


def test_unbalanced_step_rejects():
    n = 8
    cfg = TestConfig(n=n, eps=0.5, m1=10_000, m2=10)
    assert cfg.lam > 1
    X = CountVector([0] + [1] * (n - 1), 10_000)
    Y = CountVector([3] + [0] * (n - 1), 10)
    d = run_test_extreme(X, X, Y, Y, cfg)
    assert d.verdict == REJECT and not d.checks["unbalanced"].passed


def test_tie_with_threshold_passes():
    cfg = TestConfig(n=4, eps=0.5, m1=4, m2=2, c_gamma=0.0)
    # Z over an all-zero sample is exactly 0, equal to the threshold 0
    zeros4, zeros2 = CountVector([0] * 4, 4), CountVector([0] * 4, 2)
    d = run_test_nonextreme(zeros4, zeros4, zeros2, zeros2, cfg)
    assert d.checks["Z_H"].value == d.checks["Z_H"].threshold == 0
    assert d.verdict == ACCEPT


def test_decision_serialises():
    rng = substream(3)
    est = ClosenessTester(eps=0.5, m1=400, m2=200, regime="extreme")
    d = est.sample_and_test(make_uniform(50), make_uniform(50), rng)
    rec = json.loads(d.to_json())
    assert rec["verdict"] in (ACCEPT, REJECT)
    assert rec["regime"] == "extreme"
    assert {"unbalanced.pass", "V_B.pass", "W_M.pass", "Z_H.pass", "R_H.pass"} <= set(rec)


def test_basic_regime_has_no_medium():
    est = ClosenessTester(eps=0.5, m1=400, m2=200, regime="basic", kappa=1e-4)
    S1 = CountVector(substream(1).poisson(8.0, 50), 400)
    est.fit(S1, S1)
    assert est.partition_.sizes()["M"] == 0


def test_calibration_quantile_and_validation():
    cal = calibrate_constants(200, 0.5, 400, 200, trials=100, rng=2, threads=1)
    z = np.sort(cal.z_null)
    # inverted-cdf quantile at 5/6 of 100 samples is the 84th smallest
    assert cal.c_gamma == pytest.approx(max(0.0, z[83]))
    with pytest.raises(InvalidParameterError):
        calibrate_constants(200, 0.5, 400, 200, trials=50)
    with pytest.raises(InvalidParameterError):
        calibrate_constants(200, 0.5, 400, 200, alpha=0.7)


def test_run_trials_deterministic_and_thread_independent():
    cfg = TestConfig(n=100, eps=0.5, m1=200, m2=100, seed=5)
    p, q = make_uniform(100), make_perturbed_uniform(100, 0.5)
    a = run_trials(p, q, cfg, 20, threads=1)
    b = run_trials(p, q, cfg, 20, threads=3)
    assert a.log == b.log and a.expected == REJECT


def test_run_trials_stub_tester():
    cfg = TestConfig(n=10, eps=0.5, m1=20, m2=20)
    res = run_trials(make_uniform(10), make_uniform(10), cfg, 7,
                     tester=lambda *args: ACCEPT)
    assert res.success_rate == 1.0 and res.trials == 7


def test_null_accepts_most_of_the_time():
    n, eps, m1 = 500, 0.5, 500
    m2 = plan_sample_sizes(n, eps, m1, c=4)
    cal = calibrate_constants(n, eps, m1, m2, trials=200, rng=4, threads=1)
    cfg = TestConfig(n=n, eps=eps, m1=m1, m2=m2, c_gamma=cal.c_gamma, regime="nonextreme", seed=9)
    assert run_trials(make_uniform(n), make_uniform(n), cfg, 100, threads=1).success_rate >= 0.6
