"""JSON config parsing: defaults, overrides, and rejection of bad input."""

from __future__ import annotations

import json

import numpy as np
import pytest

from ttfilter.config import (
    DEFAULT_SWEEPS,
    SWEEP_AXES,
    bpf_config_from_config,
    filter_config_from_config,
    load_config,
    scenario_from_config,
)
from ttfilter.errors import ConfigurationError
from ttfilter.model import DEFAULT_TARGETS


def test_empty_config_gives_benchmark_defaults():
    scn = scenario_from_config({})
    assert scn.grid.rows == 5 and scn.grid.cols == 5
    assert scn.grid.spacing == 10.0
    assert float(np.asarray(scn.meas.sigma_s2)) == 0.01
    assert scn.meas.amplitude == 10.0
    assert scn.meas.offset == 0.1
    assert scn.meas.exponent == 1.0
    assert scn.motion.gamma == 0.05
    assert scn.bounds == "inside"
    np.testing.assert_array_equal(scn.initial_states, DEFAULT_TARGETS)

    fcfg = filter_config_from_config({})
    assert fcfg.alpha == 3.0
    assert fcfg.sigma_s2 is None
    assert fcfg.consistency.p_value == 0.0013
    assert fcfg.optimizer.grad_tol == 1e-6

    bcfg = bpf_config_from_config({}, fcfg)
    assert bcfg.n_particles == 100_000
    assert bcfg.noise.alpha == 3.0


def test_scenario_overrides_apply():
    cfg = {
        "scenario": {
            "grid": {"rows": 3, "cols": 4, "spacing": 5.0},
            "amplitude": 12.0,
            "offset": 0.2,
            "exponent": 2.0,
            "sigma_s2": 0.5,
            "gamma": 0.1,
            "bounds": "reflect",
            "targets": [[1.0, 2.0, 0.0, 0.0], [3.0, 4.0, 0.1, -0.1]],
        }
    }
    scn = scenario_from_config(cfg)
    assert scn.grid.rows == 3 and scn.grid.cols == 4 and scn.grid.spacing == 5.0
    assert scn.meas.amplitude == 12.0
    assert scn.meas.offset == 0.2
    assert scn.meas.exponent == 2.0
    assert float(np.asarray(scn.meas.sigma_s2)) == 0.5
    assert scn.motion.gamma == 0.1
    assert scn.bounds == "reflect"
    assert scn.n_targets == 2


def test_scenario_sigma_vector():
    sig = [0.01] * 24 + [0.5]
    scn = scenario_from_config({"scenario": {"sigma_s2": sig}})
    np.testing.assert_array_equal(scn.meas.noise_variances(25), sig)


def test_filter_overrides_apply():
    cfg = {
        "filter": {
            "alpha": 1.0,
            "sigma_s2": 0.2,
            "p_value": 0.01,
            "n_bad_tgt": 3,
            "n_bad_sq": 8,
            "max_subsets": 20,
            "grad_tol": 1e-8,
            "max_iter": 50,
            "near_sensor_fraction": 0.3,
            "box_margin": 2.0,
            "init_spatial_var": 25.0,
            "init_velocity_var": 1e-3,
            "init_radius": 3.0,
        }
    }
    fcfg = filter_config_from_config(cfg)
    assert fcfg.alpha == 1.0
    assert fcfg.sigma_s2 == 0.2
    assert fcfg.consistency.p_value == 0.01
    assert fcfg.consistency.n_bad_tgt == 3
    assert fcfg.consistency.n_bad_sq == 8
    assert fcfg.consistency.max_subsets == 20
    assert fcfg.optimizer.grad_tol == 1e-8
    assert fcfg.optimizer.max_iter == 50
    assert fcfg.near_sensor_fraction == 0.3
    assert fcfg.box_margin == 2.0
    assert fcfg.init_spatial_var == 25.0
    assert fcfg.init_velocity_var == 1e-3
    assert fcfg.init_radius == 3.0


def test_bpf_inherits_filter_noise():
    fcfg = filter_config_from_config({"filter": {"alpha": 1.0, "sigma_s2": 0.3}})
    bcfg = bpf_config_from_config({"bpf": {"particles": 500}}, fcfg)
    assert bcfg.n_particles == 500
    assert bcfg.noise.alpha == 1.0
    assert bcfg.sigma_s2 == 0.3


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": {"gamma": 0.2}}))
    cfg = load_config(path)
    assert scenario_from_config(cfg).motion.gamma == 0.2


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_load_config_rejects_non_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2, 3]")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_bad_section_type_rejected():
    with pytest.raises(ConfigurationError):
        scenario_from_config({"scenario": 5})


def test_bad_scenario_values_rejected():
    with pytest.raises(ConfigurationError):
        scenario_from_config({"scenario": {"grid": {"rows": 1}}})
    with pytest.raises(ConfigurationError):
        scenario_from_config({"scenario": {"grid": {"spacing": -1.0}}})
    with pytest.raises(ConfigurationError):
        scenario_from_config({"scenario": {"bounds": "wrap"}})
    with pytest.raises(ConfigurationError):
        scenario_from_config({"scenario": {"gamma": "fast"}})


def test_sweep_tables():
    assert SWEEP_AXES == ("sigma_s2", "alpha", "gamma")
    assert DEFAULT_SWEEPS["sigma_s2"] == [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
    assert DEFAULT_SWEEPS["alpha"] == [1.0 / 3.0, 1.0, 3.0]
    assert DEFAULT_SWEEPS["gamma"] == [0.025, 0.05, 0.075, 0.1]
