"""Minimally invasive safe controller with adaptive alpha.

Each call to :func:`step` solves the scalar QP ``min (u - u_nom)^2`` over the
intersection of the acceleration box with every pairwise half-line, then looks
one step ahead with the noise-mean dynamics and picks the alpha for the next
call as the value closest to the nominal one that keeps that next QP solvable.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .cbf import ConstraintCoeffs, SafetyParams, build_constraint, pair_geometry
from .dynamics import NoiseModel, StepParams, VehicleState, step_expected
from .feasibility import (
    ALPHA_MARGIN,
    Activation,
    ControlBounds,
    FeasibilityBounds,
    SingularityError,
    adapt_alpha,
    bounds_for_pair,
    classify,
    joint_alpha_floor,
)
from .geometry import project_control

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    pass


class Interval(NamedTuple):
    lo: float
    hi: float


class Status(enum.Enum):
    NOMINAL = "nominal"
    FILTERED = "filtered"
    INFEASIBLE_FALLBACK = "infeasible-fallback"
    SAFETY_VIOLATED = "safety-violated"


@dataclass(frozen=True)
class ControllerConfig:
    alpha_nominal: float
    u_nominal: float
    bounds: ControlBounds
    r_safe: float
    eta: float
    coefficient_mode: bool = False
    adaptive: bool = True
    # alpha at the first step; None means alpha_nominal
    alpha_init: Optional[float] = None
    # raise alpha on the observed state when the predicted one was not enough
    same_step_repair: bool = True

    def __post_init__(self):
        if self.alpha_nominal < 0:
            raise ValueError("alpha_nominal must be non-negative")
        SafetyParams(self.r_safe, self.eta, self.alpha_nominal)
        if not self.bounds.u_min <= self.u_nominal <= self.bounds.u_max:
            warnings.warn(
                f"u_nominal={self.u_nominal} outside [{self.bounds.u_min}, {self.bounds.u_max}]",
                stacklevel=2,
            )


@dataclass(frozen=True)
class PairDiagnostics:
    a: float
    b: float
    h: float
    distance: float
    alpha_feasible: float
    alpha_active: float
    activation: Optional[Activation]


@dataclass(frozen=True)
class ControlDecision:
    u: float
    alpha_used: float
    alpha_next: float
    feasible_interval: Optional[Interval]
    status: Status
    pairs: list = field(default_factory=list)

    @property
    def infeasible(self) -> bool:
        return self.feasible_interval is None


def feasible_interval(constraints: Sequence[ConstraintCoeffs], cb: ControlBounds) -> Optional[Interval]:
    lo, hi = cb.u_min, cb.u_max
    for c in constraints:
        if c.a > 0:
            hi = min(hi, c.b / c.a)
        elif c.a < 0:
            lo = max(lo, c.b / c.a)
        elif c.b < 0:
            return None
    return Interval(lo, hi) if lo <= hi else None


def solve_qp(interval: Optional[Interval], u_nominal: float) -> float:
    if interval is None:
        raise InfeasibleError("empty feasible interval")
    return min(max(u_nominal, interval.lo), interval.hi)


def least_infeasible(constraints: Sequence[ConstraintCoeffs], cb: ControlBounds, u_nominal: float) -> float:
    """Box endpoint with the smallest worst-case violation ``max (a*u - b)+``."""

    def violation(u):
        return max((max(c.a * u - c.b, 0.0) for c in constraints), default=0.0)

    ends = sorted((cb.u_min, cb.u_max), key=lambda u: (violation(u), abs(u - u_nominal)))
    return ends[0]


def _margin(floor: float) -> float:
    return ALPHA_MARGIN * max(1.0, abs(floor))


def _next_alpha(cfg: ControllerConfig, fbs: list) -> float:
    if not cfg.adaptive or not fbs:
        return float(cfg.alpha_nominal)
    alpha = adapt_alpha(cfg.alpha_nominal, fbs)
    floor = joint_alpha_floor(fbs, cfg.bounds)
    if math.isfinite(floor) and floor + _margin(floor) > alpha:
        alpha = floor + _margin(floor)
    return alpha


def _bounds(g, cfg: ControllerConfig, dt: float, theta: float) -> Optional[FeasibilityBounds]:
    try:
        return bounds_for_pair(g, cfg.r_safe, cfg.eta, dt, theta, cfg.bounds, cfg.coefficient_mode)
    except SingularityError:
        return None


def step(
    ego: VehicleState,
    merges: Sequence[tuple[VehicleState, NoiseModel]],
    cfg: ControllerConfig,
    dt: float,
    theta: float,
    alpha_prev: Optional[float] = None,
    ego_noise: Optional[NoiseModel] = None,
    theta_next: Optional[float] = None,
) -> ControlDecision:
    """One pass of the adaptive merging loop.

    ``alpha_prev`` is the ``alpha_next`` of the previous decision (``None`` at
    the first step). ``theta`` is the ego lane heading now, ``theta_next`` the
    heading used for the look-ahead (defaults to ``theta``).
    """
    ego_noise = ego_noise if ego_noise is not None else NoiseModel.zero()
    theta_next = theta if theta_next is None else theta_next
    if alpha_prev is None:
        alpha_prev = cfg.alpha_nominal if cfg.alpha_init is None else cfg.alpha_init
    alpha = float(alpha_prev)

    geoms = [pair_geometry(ego, ego_noise, m, n) for m, n in merges]
    fbs = [_bounds(g, cfg, dt, theta) for g in geoms]
    if cfg.adaptive and cfg.same_step_repair and geoms:
        floor = joint_alpha_floor([fb for fb in fbs if fb is not None], cfg.bounds)
        if math.isfinite(floor) and floor + _margin(floor) > alpha:
            alpha = floor + _margin(floor)

    params = SafetyParams(cfg.r_safe, cfg.eta, max(alpha, 0.0))
    constraints = [build_constraint(g, params, dt, theta, cfg.coefficient_mode) for g in geoms]
    interval = feasible_interval(constraints, cfg.bounds)
    if interval is None:
        u = least_infeasible(constraints, cfg.bounds, cfg.u_nominal)
        status = Status.INFEASIBLE_FALLBACK
        log.info("empty feasible interval at alpha=%.6g; fallback u=%.3f", alpha, u)
    else:
        u = solve_qp(interval, cfg.u_nominal)
        status = Status.NOMINAL if u == cfg.u_nominal else Status.FILTERED

    pairs = []
    for g, c, fb in zip(geoms, constraints, fbs):
        h = float(g.dx @ g.dx) - cfg.r_safe**2
        pairs.append(
            PairDiagnostics(
                c.a, c.b, h, math.hypot(g.dx[0], g.dx[1]),
                fb.alpha_feasible if fb else math.nan,
                fb.alpha_active if fb else math.nan,
                classify(alpha, fb) if fb else None,
            )
        )
    if any(p.h < 0 for p in pairs):
        status = Status.SAFETY_VIOLATED

    p = StepParams(dt)
    ego_next = step_expected(ego, project_control(theta, u), ego_noise, p)
    merges_next = [(step_expected(m, np.zeros(2), n, p), n) for m, n in merges]
    fbs_next = [
        fb
        for fb in (
            _bounds(pair_geometry(ego_next, ego_noise, m, n), cfg, dt, theta_next)
            for m, n in merges_next
        )
        if fb is not None
    ]
    return ControlDecision(u, alpha, _next_alpha(cfg, fbs_next), interval, status, pairs)
