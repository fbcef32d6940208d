from dataclasses import replace

import numpy as np
import pytest

from safemerge.config import builtin_config, resolve, scenario_from_dict, validity_ranges_from_dict
from safemerge.sim import (
    ConfigError,
    SamplingError,
    ValidityRanges,
    classify_merge_outcome,
    constant_control_witness,
    distance_curve_shape,
    run_episode,
    run_fixed_alpha_comparison,
    run_validity_batch,
    sample_trial,
)


def scenario(**kw):
    return scenario_from_dict(resolve(kw))


def far_ahead(noise=None):
    return scenario(
        horizon_steps=150,
        controller={"u_nominal_mps2": 0.5},
        ego={"to_merge_m": 20.0, "speed_mps": 24.0, "noise": noise},
        merging=[{"to_merge_m": 120.0, "speed_mps": 20.0, "noise": noise}],
    )


def test_far_ahead_is_never_filtered():
    tr = run_episode(far_ahead())
    assert set(tr.status) == {"nominal"}
    assert np.all(tr.u == 0.5)
    assert len(tr) == 151


def test_closing_gap_is_filtered_but_safe():
    tr = run_episode(scenario_from_dict(builtin_config("single_merge")))
    assert "filtered" in tr.status
    assert tr.min_distance >= tr.cfg.controller.r_safe
    assert tr.n_infeasible == 0


def test_same_seed_bit_identical():
    cfg = scenario_from_dict(builtin_config("stress"))
    a, b = run_episode(cfg), run_episode(cfg)
    for name in ("ego_x", "ego_v", "merge_x", "u", "alpha", "distance"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = run_episode(replace(cfg, seed=cfg.seed + 1))
    assert not np.array_equal(a.ego_x, c.ego_x)


def test_unsafe_start_rejected_before_stepping():
    with pytest.raises(ConfigError, match="inside r_safe"):
        scenario(ego={"to_merge_m": 10.0}, merging=[{"to_merge_m": 10.0, "speed_mps": 20.0}])


def test_unsafe_start_can_be_allowed():
    cfg = scenario(
        allow_unsafe_start=True, horizon_steps=3,
        ego={"to_merge_m": 10.0}, merging=[{"to_merge_m": 10.0, "speed_mps": 20.0}],
    )
    assert run_episode(cfg).status[0] == "safety-violated"


def test_sampling_error_names_ranges():
    base = scenario(merging=[{"to_merge_m": 10.0, "speed_mps": 20.0}], ego={"to_merge_m": 100.0})
    with pytest.raises(SamplingError, match="gap_m=\\(-1.0, 1.0\\)"):
        sample_trial(base, ValidityRanges((-1.0, 1.0), (-0.1, 0.1), (1.0, 2.0)), 0, max_attempts=5)


def test_degenerate_range():
    with pytest.raises(ConfigError, match="degenerate"):
        ValidityRanges((1.0, 1.0))


def test_trivially_safe_batch():
    base = far_ahead()
    rep = run_validity_batch(base, 1, ValidityRanges((100.0, 150.0), (1.0, 3.0), (0.5, 1.0)))
    assert rep.min_distances.min() > 8 and rep.total_infeasible == 0


def test_batch_independent_of_execution_order():
    d = builtin_config("validity")
    base = replace(scenario_from_dict(d), horizon=60)
    r = validity_ranges_from_dict(d)
    serial = run_validity_batch(base, 4, r)
    pooled = run_validity_batch(base, 4, r, workers=2)
    assert serial.trials == pooled.trials


def test_fixed_alpha_has_more_fallbacks_on_stressing_range():
    d = builtin_config("validity")
    base = scenario_from_dict(d)
    stressing = replace(validity_ranges_from_dict(d), alpha_nominal=(0.05, 0.2))
    adaptive = run_validity_batch(base, 100, stressing)
    fixed = run_validity_batch(base, 100, stressing, fixed_alpha=True)
    assert fixed.total_infeasible > adaptive.total_infeasible


def test_stress_comparison():
    r = run_fixed_alpha_comparison(scenario_from_dict(builtin_config("stress")))
    nominal = r.adaptive.cfg.controller.alpha_nominal
    assert r.fixed_infeasible_steps.size >= 1 and r.fixed.min_distance < 8
    assert r.adaptive.n_infeasible == 0 and r.adaptive.min_distance >= 8
    assert np.all(r.adaptive.alpha >= nominal)
    np.testing.assert_array_equal(np.flatnonzero(r.adaptive.alpha > nominal), r.adaptation_steps)


def test_non_stress_traces_identical():
    r = run_fixed_alpha_comparison(scenario_from_dict(builtin_config("nonstress")))
    assert r.adaptation_steps.size == 0 and r.fixed_infeasible_steps.size == 0
    np.testing.assert_array_equal(r.adaptive.ego_x, r.fixed.ego_x)
    np.testing.assert_array_equal(r.adaptive.u, r.fixed.u)


def test_outcome_front_when_ahead_of_both():
    cfg = scenario(
        horizon_steps=100,
        ego={"to_merge_m": 30.0, "speed_mps": 25.0},
        merging=[{"to_merge_m": 80.0, "speed_mps": 20.0}, {"to_merge_m": 120.0, "speed_mps": 20.0}],
    )
    oc = classify_merge_outcome(run_episode(cfg))
    assert oc.slot == "front" and oc.labels == ("ahead", "ahead")


def test_outcome_incomplete_when_merge_point_not_reached():
    cfg = scenario(horizon_steps=10, ego={"to_merge_m": 300.0}, merging=[{"to_merge_m": 100.0, "speed_mps": 20.0}])
    oc = run_episode(cfg).outcome()
    assert oc.slot == "incomplete" and oc.step is None


@pytest.mark.parametrize(
    "curve, expected",
    [([30, 20, 12, 9, 8.5, 8.2, 8.1, 8.05], "converging"), ([30, 20, 15, 18, 25, 30], "diverging"), ([20, 7.9, 12], "unsafe")],
)
def test_curve_shape(curve, expected):
    assert distance_curve_shape(np.array(curve, dtype=float), 8.0) == expected


def test_witness_finds_escape_and_respects_limit():
    cfg = scenario_from_dict(builtin_config("nonstress"))
    assert constant_control_witness(cfg) is not None
    u = constant_control_witness(cfg, u_limit=0.5)
    assert u is None or abs(u) <= 0.5
