import json
import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csun.channel import (ScenarioConfig, ScenarioFormatError, amplitude_gain, fspl_db,
                          generate_scenario, load_scenario, save_scenario, scenario_to_dict)


def hand_fspl(d_m, f_hz):
    return 32.45 + 20 * math.log10(f_hz / 1e6) + 20 * math.log10(d_m / 1e3)


def test_fspl_examples():
    assert fspl_db(1e3, 5.8e9) == pytest.approx(107.72, abs=5e-3)
    assert fspl_db(1e4, 5.8e9) == pytest.approx(127.72, abs=5e-3)
    assert fspl_db(2e3, 5.8e9) - fspl_db(1e3, 5.8e9) == pytest.approx(20 * math.log10(2), abs=1e-12)
    assert fspl_db(200.0, 5.8e9) == pytest.approx(93.74, abs=5e-3)
    assert fspl_db(1e3, 5.8e9, 0.01) == pytest.approx(fspl_db(1e3, 5.8e9) + 0.01, abs=1e-12)
    for bad in ((0.0, 5.8e9), (-1.0, 5.8e9), (1.0, 0.0)):
        with pytest.raises(ValueError):
            fspl_db(*bad)


@given(st.floats(1.0, 1e6), st.floats(1e8, 1e11), st.floats(1.001, 10.0))
def test_fspl_monotone_and_hand_formula(d, f, k):
    assert fspl_db(d, f) == pytest.approx(hand_fspl(d, f), abs=1e-9)
    assert fspl_db(d * k, f) > fspl_db(d, f)
    assert fspl_db(d, f * k) > fspl_db(d, f)


def test_gain_above_user():
    l = amplitude_gain(200.0, 5.8e9)
    assert l ** 2 == pytest.approx(10 ** (-hand_fspl(200.0, 5.8e9) / 10), rel=1e-12)


def test_generation_deterministic_and_sane():
    cfg = ScenarioConfig.preset("desk", seed=3)
    a, b = generate_scenario(cfg), generate_scenario(cfg)
    for name in ("gain", "gain_sat", "sat_occupancy", "uav_pos", "user_pos", "sat_pos"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)
    c = generate_scenario(cfg.with_(seed=4))
    assert not np.array_equal(a.gain, c.gain)
    real = a.gain[a.user_mask]
    assert np.all(real ** 2 > 0) and np.all(real ** 2 < 1)
    assert np.all(a.gain_sat ** 2 > 0) and np.all(a.gain_sat ** 2 < 1)
    assert a.gain.shape == (5, 4, 8, 4)
    # frequency-flat by default
    assert np.all(a.gain == a.gain[:, :, :1, :])


def test_occupancy_extremes():
    cfg = ScenarioConfig.preset("desk", seed=1)
    assert np.all(generate_scenario(cfg.with_(occupancy=0.0)).sat_occupancy == 0)
    assert np.all(generate_scenario(cfg.with_(occupancy=1.0)).sat_occupancy == 1)
    with pytest.raises(ValueError):
        cfg.with_(occupancy=1.5)


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(num_uavs=0)
    with pytest.raises(ValueError):
        ScenarioConfig(users_per_slot=0)


def test_round_trip(tmp_path):
    sc = generate_scenario(ScenarioConfig.preset("desk", seed=7, jitter_db=2.0))
    path = tmp_path / "sc.json"
    save_scenario(sc, path)
    back = load_scenario(path)
    for name in ("gain", "gain_sat", "sat_occupancy", "uav_pos", "user_pos", "sat_pos"):
        assert np.array_equal(getattr(sc, name), getattr(back, name), equal_nan=True)
    assert back.noise_power == sc.noise_power
    assert back.users_per_slot == sc.users_per_slot
    # 17 significant digits on disk
    text = path.read_text()
    mantissas = re.findall(r"(-?\d\.\d+)e[+-]\d+", text)
    assert mantissas and all(len(m.lstrip("-").replace(".", "")) >= 17 for m in mantissas)


def test_bad_files(tmp_path):
    sc = generate_scenario(ScenarioConfig.preset("desk", seed=0))
    d = scenario_to_dict(sc)
    d["y"][0][0][0] = 2
    path = tmp_path / "bad_y.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ScenarioFormatError, match=r"y\["):
        load_scenario(path)

    d = scenario_to_dict(sc)
    del d["meta"]["noise_power"]
    path = tmp_path / "no_noise.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ScenarioFormatError, match="noise_power"):
        load_scenario(path)

    path = tmp_path / "broken.json"
    path.write_text('{"meta": {\n  "num_slots": 1,,\n}}')
    with pytest.raises(ScenarioFormatError, match="line 2"):
        load_scenario(path)
