import numpy as np
import pytest

from safemerge.config import (
    DEFAULTS,
    apply_overrides,
    builtin_config,
    builtin_config_names,
    dump_config,
    load_config,
    resolve,
    scenario_from_dict,
)
from safemerge.sim import ConfigError, run_episode


def test_builtin_configs_load():
    names = builtin_config_names()
    assert {"validity", "stress", "nonstress", "single_merge", "case1", "case2"} <= set(names)
    for n in names:
        scenario_from_dict(builtin_config(n))


def test_unknown_key(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("controller:\n  r_safe: 8\n")
    with pytest.raises(ConfigError, match="controller.r_safe"):
        load_config(p)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("dt_s: 0.1\nego: {to_merge_m: [1,\n")
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.yaml"):
        load_config(tmp_path / "nope.yaml")


@pytest.mark.parametrize(
    "item, path, value",
    [
        ("alpha_nominal=15", ("controller", "alpha_nominal"), 15),
        ("controller.eta=0.9", ("controller", "eta"), 0.9),
        ("dt_s=0.05", ("dt_s",), 0.05),
        ("validity.alpha_nominal=[0.1, 0.2]", ("validity", "alpha_nominal"), [0.1, 0.2]),
        ("adaptive=false", ("controller", "adaptive"), False),
    ],
)
def test_overrides(item, path, value):
    d = apply_overrides(resolve({}), [item])
    node = d
    for p in path:
        node = node[p]
    assert node == value


@pytest.mark.parametrize("item", ["bogus=1", "noequals"])
def test_bad_override_lists_keys(item):
    with pytest.raises(ConfigError) as e:
        apply_overrides(resolve({}), [item])
    if "=" in item:
        assert "controller.r_safe_m" in str(e.value)


def test_noise_spec_variants():
    d = resolve({"ego": {"noise": {"cov_m2ps2": [[0.04, 0.0], [0.0, 0.01]], "mean_mps": [0.1, 0.0]}}})
    cfg = scenario_from_dict(d)
    np.testing.assert_allclose(cfg.ego.noise.cov, [[0.04, 0], [0, 0.01]])
    with pytest.raises(ConfigError, match="ego"):
        scenario_from_dict(resolve({"ego": {"noise": {"cov_m2ps2": [[1, 2], [2, 1]]}}}))


def test_round_trip_reproduces_run(tmp_path):
    d = builtin_config("stress")
    p = tmp_path / "snap.yaml"
    p.write_text(dump_config(d))
    again = load_config(p)
    assert again == d
    a = run_episode(scenario_from_dict(d))
    b = run_episode(scenario_from_dict(again))
    np.testing.assert_array_equal(a.ego_x, b.ego_x)


def test_defaults_have_units_in_names():
    for k in DEFAULTS["road"]:
        assert k.endswith(("_m", "_deg"))
