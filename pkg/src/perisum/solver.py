"""End-to-end facade: validate, build both plans, evaluate u = u_near + u_far."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .farzone import FarZonePlan, build_far_plan, eval_far
from .model import (ObserverPointSet, PeriodicityConfig, PotentialField,
                    SolverParams, SourcePointSet, TargetBox, validate_problem)
from .nearzone import NearZonePlan, build_near_plan, eval_near

__all__ = ["SolvePlan", "SolveResult", "build_plan", "solve"]


@dataclass(frozen=True)
class SolvePlan:
    near: NearZonePlan
    far: FarZonePlan
    build_seconds: float

    def evaluate(self, q) -> np.ndarray:
        return eval_near(self.near, q) + eval_far(self.far, q)


@dataclass(frozen=True)
class SolveResult:
    field: PotentialField
    plan: SolvePlan
    eval_seconds: float


def build_plan(cfg: PeriodicityConfig, box: TargetBox, src: SourcePointSet,
               obs: ObserverPointSet, params: SolverParams | None = None,
               provider=None, kernel_cache=None) -> SolvePlan:
    params = params or SolverParams()
    report = validate_problem(cfg, box, src, obs, params)
    if report:
        raise ValidationError(report)
    t0 = time.perf_counter()
    near = build_near_plan(cfg, box, src, obs, params, provider)
    far = build_far_plan(cfg, box, src, obs, params, cache_path=kernel_cache)
    return SolvePlan(near=near, far=far, build_seconds=time.perf_counter() - t0)


def solve(cfg: PeriodicityConfig, box: TargetBox, src: SourcePointSet,
          obs: ObserverPointSet, params: SolverParams | None = None,
          provider=None, kernel_cache=None) -> SolveResult:
    plan = build_plan(cfg, box, src, obs, params, provider, kernel_cache)
    t0 = time.perf_counter()
    u = plan.evaluate(src.amplitudes)
    dt = time.perf_counter() - t0
    return SolveResult(field=PotentialField(u), plan=plan, eval_seconds=dt)
