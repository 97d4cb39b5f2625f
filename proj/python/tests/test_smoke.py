import math

import numpy as np
import pytest

import kondo_eof as ke


def test_bell_state_is_one_ebit():
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / math.sqrt(2)
    rho = np.outer(bell, bell.conj())
    assert ke.concurrence(rho) == pytest.approx(1.0)
    assert ke.eof(rho) == pytest.approx(1.0)
    assert ke.eof(np.eye(4, dtype=complex) / 4) == pytest.approx(0.0, abs=1e-12)


def test_yosida_tail_and_mixture():
    s = ke.yosida_state()
    p, asym = ke.outside_probability(50 * s.xi, s)
    assert p == pytest.approx(asym, rel=0.1)
    assert ke.yosida_eof(0.3) == pytest.approx(0.7, abs=1e-12)


def test_power_law_fit():
    x = np.logspace(-2, -0.5, 9)
    fit = ke.fit_power_law(list(x), list(1 - 0.2 * x**2), 1e-2, 10**-0.5)
    assert fit.exponent == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(ke.InsufficientDataError):
        ke.fit_power_law([0.1, 0.2], [0.9, 0.8], 0.0, 1.0)


def test_config_round_trip():
    cfg = ke.make_config("fig2c", keep_max=50, z=[0])
    entries = dict(cfg.entries())
    assert entries["keep_max"] == "50"
    assert entries["L_grid"] == "log:-1:2:13"
    with pytest.raises(ke.ConfigError):
        ke.make_config(model="3CK")
    with pytest.raises(ke.ConfigError):
        ke.make_config(z=[1.0])


def test_small_run(tmp_path):
    cfg = ke.make_config(
        "paper", keep_max=40, z=[0], T_grid="0,0.1", output=str(tmp_path / "run")
    )
    lines = []
    result = ke.run_experiment(cfg, log=lines.append)
    assert (tmp_path / "run.csv").exists()
    assert len(result["points"]) == 2
    for p in result["points"]:
        assert 0.0 <= p["lower"] <= p["upper"] + 1e-9 <= 1.0 + 1e-9
    ground = [p for p in result["points"] if p["T_over_TK"] == 0.0][0]
    assert ground["lower"] == pytest.approx(1.0, abs=1e-4)
    assert lines


def test_verify_subset():
    checks = ke.verify(states=20)
    assert len(checks) == 6
    assert all(c["passed"] for c in checks)
