"""Validation and domain-type behavior."""
import numpy as np
import pytest

from conftest import make_config
from perisum.model import (ObserverPointSet, Periodicity, PeriodicityConfig,
                           Regime, SolverParams, SourcePointSet, TargetBox,
                           auto_near_dims, validate_problem)


def _mini_problem(regime=Regime.NPSP, q=None, d=(1.0, 1.0, 1.0), L=(1.0, 1.0, 1.0)):
    cfg = PeriodicityConfig(Periodicity.P1D, L, regime=regime,
                            k0=(0j if regime is not Regime.DYNAMIC else 1 - 1j))
    box = TargetBox(d)
    pos = np.array([[0.2, 0.3, 0.4], [0.7, 0.6, 0.5]]) * np.asarray(d)
    amps = q if q is not None else np.array([1.0, -1.0])
    src = SourcePointSet(pos, amps)
    obs = ObserverPointSet(np.array([[0.5, 0.1, 0.9]]) * np.asarray(d))
    return cfg, box, src, obs


def test_neutrality_violation_reported():
    cfg, box, src, obs = _mini_problem(q=np.array([1.0, 0.0]))
    report = validate_problem(cfg, box, src, obs, SolverParams())
    assert report.contains("neutrality violated")


def test_clean_dynamic_problem_passes():
    cfg, box, src, obs = _mini_problem(regime=Regime.DYNAMIC)
    report = validate_problem(cfg, box, src, obs, SolverParams(near_grid=(7, 7, 7)))
    assert report.ok()
    assert not report


def test_box_exceeding_period_reported():
    cfg, box, src, obs = _mini_problem(d=(2.0, 1.0, 1.0), L=(1.0, 1.0, 1.0))
    report = validate_problem(cfg, box, src, obs, SolverParams())
    assert report.contains("target box exceeds period")


def test_regime_consistency_both_directions():
    cfg = PeriodicityConfig(Periodicity.P1D, (1, 1, 1), k0=1.0,
                            regime=Regime.NPSP)
    _, box, src, obs = _mini_problem()
    report = validate_problem(cfg, box, src, obs, SolverParams())
    assert report.contains("NPSP requires k0 = 0")

    cfg = PeriodicityConfig(Periodicity.P1D, (1, 1, 1), regime=Regime.DYNAMIC)
    report = validate_problem(cfg, box, src, obs, SolverParams())
    assert report.contains("must use regime NPSP")


def test_points_outside_box_reported():
    cfg, box, src, obs = _mini_problem()
    bad_obs = ObserverPointSet(np.array([[1.5, 0.2, 0.2]]))
    report = validate_problem(cfg, box, src, bad_obs, SolverParams())
    assert report.contains("leave the target box")


def test_solver_param_invariants():
    cfg, box, src, obs = _mini_problem()
    report = validate_problem(cfg, box, src, obs, SolverParams(i_d=0))
    assert report.contains("i_d must be >= 1")
    report = validate_problem(cfg, box, src, obs,
                              SolverParams(far_order=6, far_grid=(6, 6, 6)))
    assert report.contains("far_order + 1")


def test_validation_is_pure():
    cfg, box, src, obs = _mini_problem(q=np.array([1.0, 0.5]))
    params = SolverParams()
    r1 = validate_problem(cfg, box, src, obs, params)
    r2 = validate_problem(cfg, box, src, obs, params)
    assert r1.messages == r2.messages


@pytest.mark.parametrize("n,expected", [
    (3096, 17), (12175, 25), (53601, 41), (92233, 49), (177973, 59),
])
def test_auto_near_grid_sizing(n, expected):
    dims = auto_near_dims(n, TargetBox((1.0, 1.0, 1.0)))
    assert dims == (expected,) * 3


def test_auto_near_grid_degenerate_axis():
    dims = auto_near_dims(100, TargetBox((1.0, 1.0, 0.0)))
    assert dims[2] == 1 and dims[0] == dims[1] and dims[0] ** 2 >= 115


def test_validated_problem_builds_plans(rng):
    from perisum.farzone import build_far_plan
    from perisum.nearzone import build_near_plan
    from conftest import neutral_cloud, separated_observers
    L = 5.0
    src = neutral_cloud(rng, 60, (L, L, L))
    obs = separated_observers(rng, 10, src.positions, (L, L, L),
                              min_transverse=0.1)
    cfg = make_config(dim=1, L=(L, L, L))
    box = TargetBox((L, L, L))
    params = SolverParams(near_grid=(9, 9, 9), far_grid=(6, 6, 6))
    report = validate_problem(cfg, box, src, obs, params)
    assert report.ok()
    build_near_plan(cfg, box, src, obs, params)
    build_far_plan(cfg, box, src, obs, params)


def test_point_set_shapes():
    with pytest.raises(ValueError):
        SourcePointSet(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        SourcePointSet(np.zeros((3, 3)), np.zeros(2))
    s = SourcePointSet(np.zeros((0, 3)), np.zeros(0))
    assert len(s) == 0
