"""Ramp-merging episodes, validity batches and the fixed-vs-adaptive comparison."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import controller
from .controller import ControllerConfig, Interval, Status, feasible_interval
from .cbf import SafetyParams, build_constraint, pair_geometry
from .dynamics import NoiseModel, VehicleState, euler_step, noise_rng
from .geometry import LanePath, heading_at, pose_at, project_control, project_to_path


class ConfigError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class VehicleSpec:
    lane: LanePath
    s0: float
    speed: float
    noise: NoiseModel = field(default_factory=NoiseModel.zero)


@dataclass(frozen=True)
class ScenarioConfig:
    ego: VehicleSpec
    merges: tuple
    controller: ControllerConfig
    dt: float = 0.1
    horizon: int = 300
    seed: int = 0
    trial_id: int = 0
    allow_unsafe_start: bool = False

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.allow_unsafe_start:
            x0 = initial_state(self.ego).x
            for k, m in enumerate(self.merges):
                d = float(np.linalg.norm(x0 - initial_state(m).x))
                if d <= self.controller.r_safe:
                    raise ConfigError(
                        f"merging vehicle {k} starts {d:.3f} m from the ego, "
                        f"inside r_safe={self.controller.r_safe}"
                    )

    def with_controller(self, **changes) -> "ScenarioConfig":
        return replace(self, controller=replace(self.controller, **changes))


def initial_state(spec: VehicleSpec) -> VehicleState:
    pos, th = pose_at(spec.lane, spec.s0, extrapolate=True)
    return VehicleState(pos, spec.speed * np.array([math.cos(th), math.sin(th)]))


def _follow_lane(lane: LanePath, prev_theta: float, s: VehicleState) -> tuple[VehicleState, float, float]:
    """Re-align velocity to the lane heading at the new position, keeping signed speed."""
    arc = project_to_path(lane, s.x)
    th = heading_at(lane, arc)
    if th == prev_theta:
        return s, arc, th
    speed = float(s.v @ np.array([math.cos(prev_theta), math.sin(prev_theta)]))
    return VehicleState(s.x, speed * np.array([math.cos(th), math.sin(th)])), arc, th


@dataclass
class SimulationTrace:
    cfg: ScenarioConfig
    t: np.ndarray
    ego_x: np.ndarray
    ego_v: np.ndarray
    ego_s: np.ndarray
    merge_x: np.ndarray
    merge_v: np.ndarray
    merge_s: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    alpha_next: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    status: list
    distance: np.ndarray
    h: np.ndarray
    alpha_feasible: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def min_distance(self) -> float:
        return float(self.distance.min()) if self.distance.size else math.inf

    @property
    def collision(self) -> bool:
        return self.min_distance < self.cfg.controller.r_safe

    @property
    def infeasible_steps(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self.lo))

    @property
    def n_infeasible(self) -> int:
        return int(self.infeasible_steps.size)

    @property
    def n_violated(self) -> int:
        return sum(s == Status.SAFETY_VIOLATED.value for s in self.status)

    def first_deviation_index(self) -> Optional[int]:
        idx = np.flatnonzero(self.u != self.cfg.controller.u_nominal)
        return int(idx[0]) if idx.size else None

    def outcome(self) -> "MergeOutcome":
        return classify_merge_outcome(self)


def run_episode(cfg: ScenarioConfig) -> SimulationTrace:
    cfg.validate()
    cc, dt, H = cfg.controller, cfg.dt, cfg.horizon
    specs = [cfg.ego, *cfg.merges]
    M = len(cfg.merges)
    z = noise_rng(cfg.seed, cfg.trial_id).standard_normal((H, 1 + M, 2))

    states = [initial_state(s) for s in specs]
    arcs = [project_to_path(s.lane, st.x) for s, st in zip(specs, states)]
    thetas = [heading_at(s.lane, a) for s, a in zip(specs, arcs)]

    n = H + 1
    ego_x, ego_v, ego_s = np.empty((n, 2)), np.empty((n, 2)), np.empty(n)
    merge_x, merge_v, merge_s = np.empty((n, M, 2)), np.empty((n, M, 2)), np.empty((n, M))
    u_arr, a_arr, an_arr, lo, hi = (np.empty(n) for _ in range(5))
    dist, h_arr, afea = np.empty((n, M)), np.empty((n, M)), np.empty((n, M))
    status = []

    alpha_prev = None
    for t in range(n):
        ego_x[t], ego_v[t], ego_s[t] = states[0].x, states[0].v, arcs[0]
        for k in range(M):
            merge_x[t, k], merge_v[t, k], merge_s[t, k] = states[k + 1].x, states[k + 1].v, arcs[k + 1]

        speed = float(states[0].v @ np.array([math.cos(thetas[0]), math.sin(thetas[0])]))
        theta_next = heading_at(cfg.ego.lane, arcs[0] + speed * dt)
        dec = controller.step(
            states[0],
            [(states[k + 1], cfg.merges[k].noise) for k in range(M)],
            cc, dt, thetas[0], alpha_prev, cfg.ego.noise, theta_next,
        )
        alpha_prev = dec.alpha_next
        u_arr[t], a_arr[t], an_arr[t] = dec.u, dec.alpha_used, dec.alpha_next
        iv = dec.feasible_interval
        lo[t], hi[t] = (iv.lo, iv.hi) if iv is not None else (math.nan, math.nan)
        status.append(dec.status.value)
        for k, p in enumerate(dec.pairs):
            dist[t, k], h_arr[t, k], afea[t, k] = p.distance, p.h, p.alpha_feasible
        if t == H:
            break

        controls = [project_control(thetas[0], dec.u)] + [np.zeros(2)] * M
        for k, spec in enumerate(specs):
            nxt = euler_step(states[k], controls[k], spec.noise.color(z[t, k]), dt)
            states[k], arcs[k], thetas[k] = _follow_lane(spec.lane, thetas[k], nxt)

    return SimulationTrace(
        cfg, np.arange(n), ego_x, ego_v, ego_s, merge_x, merge_v, merge_s,
        u_arr, a_arr, an_arr, lo, hi, status, dist, h_arr, afea,
    )


# --- merge outcome -----------------------------------------------------------


@dataclass(frozen=True)
class MergeOutcome:
    labels: tuple
    slot: str
    step: Optional[int]


def classify_merge_outcome(trace: SimulationTrace) -> MergeOutcome:
    """Ego slot relative to the merging vehicles when it crosses its merge point.

    Progress is arc length past each lane's own merge point. ``labels[k]`` is
    ``"ahead"`` when the ego is ahead of merging vehicle ``k``.
    """
    cfg = trace.cfg
    p_e = trace.ego_s - cfg.ego.lane.merge_s
    crossed = np.flatnonzero(p_e >= 0.0)
    M = len(cfg.merges)
    if crossed.size == 0:
        return MergeOutcome(("incomplete",) * M, "incomplete", None)
    t = int(crossed[0])
    labels = tuple(
        "ahead" if p_e[t] > trace.merge_s[t, k] - m.lane.merge_s else "behind"
        for k, m in enumerate(cfg.merges)
    )
    n_ahead_of_ego = labels.count("behind")
    slot = "front" if n_ahead_of_ego == 0 else "behind" if n_ahead_of_ego == M else "between"
    return MergeOutcome(labels, slot, t)


# --- oracles -----------------------------------------------------------------


def constant_control_witness(
    cfg: ScenarioConfig, n_grid: int = 21, u_limit: Optional[float] = None
) -> Optional[float]:
    """A constant acceleration that keeps every pair outside r_safe, or None.

    Rolls the noise-mean dynamics forward over the horizon for each control on
    a grid over the box (clipped to ``[-u_limit, u_limit]`` if given), merging
    vehicles coasting. Finding one is a proof
    that a safe control sequence exists; finding none is not a proof of the
    converse.
    """
    b = cfg.controller.bounds
    r = cfg.controller.r_safe
    specs = [cfg.ego, *cfg.merges]
    lo, hi = b.u_min, b.u_max
    if u_limit is not None:
        lo, hi = max(lo, -u_limit), min(hi, u_limit)
    grid = np.linspace(lo, hi, n_grid)
    # try the most likely escapes first
    order = sorted(grid, key=lambda u: -abs(u))
    for u in order:
        states = [initial_state(s) for s in specs]
        thetas = [heading_at(s.lane, project_to_path(s.lane, st.x)) for s, st in zip(specs, states)]
        ok = True
        for t in range(cfg.horizon + 1):
            if any(math.hypot(*(states[0].x - st.x)) < r for st in states[1:]):
                ok = False
                break
            ctrl = [project_control(thetas[0], u)] + [np.zeros(2)] * len(cfg.merges)
            for k, spec in enumerate(specs):
                nxt = euler_step(states[k], ctrl[k], spec.noise.mean, cfg.dt)
                states[k], _, thetas[k] = _follow_lane(spec.lane, thetas[k], nxt)
        if ok:
            return float(u)
    return None


def one_step_solution_exists(
    ego: VehicleState,
    merges: Sequence[tuple[VehicleState, NoiseModel]],
    cfg: ControllerConfig,
    dt: float,
    theta: float,
    ego_noise: Optional[NoiseModel] = None,
    n_u: int = 201,
    alphas: Optional[np.ndarray] = None,
) -> bool:
    """Brute force: is there a grid control now whose next state admits a non-empty interval?

    The next-step interval is tested on a log grid of alpha values at or above
    the nominal one (adaptive mode may pick any of them).
    """
    ego_noise = ego_noise or NoiseModel.zero()
    if alphas is None:
        alphas = cfg.alpha_nominal + np.concatenate([[0.0], np.logspace(-6, 9, 61)])
    for u in np.linspace(cfg.bounds.u_min, cfg.bounds.u_max, n_u):
        ego_n = euler_step(ego, project_control(theta, u), ego_noise.mean, dt)
        mer_n = [(euler_step(m, np.zeros(2), n.mean, dt), n) for m, n in merges]
        geoms = [pair_geometry(ego_n, ego_noise, m, n) for m, n in mer_n]
        for a in alphas:
            params = SafetyParams(cfg.r_safe, cfg.eta, float(a))
            cs = [build_constraint(g, params, dt, theta, cfg.coefficient_mode) for g in geoms]
            if feasible_interval(cs, cfg.bounds) is not None:
                return True
    return False


# --- batches -----------------------------------------------------------------


@dataclass(frozen=True)
class ValidityRanges:
    """Uniform sampling ranges for the validity batch.

    ``gap_m`` is the ego's progress toward the merge point minus the merging
    vehicle's (negative: ego behind); ``rel_speed_mps`` is ego speed minus
    merging-vehicle speed. With ``start_control_mps2`` set, a start is kept
    only if some constant acceleration of at most that magnitude avoids
    collision, which drops starts that need hard evasive action from step 0.
    """

    gap_m: tuple = (-40.0, 40.0)
    rel_speed_mps: tuple = (-3.0, 3.0)
    alpha_nominal: tuple = (0.5, 3.0)
    start_control_mps2: Optional[float] = None

    def __post_init__(self):
        for name in ("gap_m", "rel_speed_mps", "alpha_nominal"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"range {name}={getattr(self, name)} is degenerate")
        if self.start_control_mps2 is not None and not self.start_control_mps2 >= 0:
            raise ConfigError("start_control_mps2 must be non-negative")


@dataclass(frozen=True)
class TrialSummary:
    trial: int
    gap_m: float
    rel_speed_mps: float
    alpha_nominal: float
    attempts: int
    min_distance: float
    collision: bool
    n_infeasible: int
    n_violated: int
    slot: str
    curve: str


@dataclass
class BatchReport:
    trials: list
    n_rejected: int
    r_safe: float

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def collision_rate(self) -> float:
        return sum(t.collision for t in self.trials) / max(len(self.trials), 1)

    @property
    def min_distances(self) -> np.ndarray:
        return np.array([t.min_distance for t in self.trials])

    @property
    def total_infeasible(self) -> int:
        return sum(t.n_infeasible for t in self.trials)


def distance_curve_shape(d: np.ndarray, r_safe: float) -> str:
    """``diverging`` (ego ends up ahead), ``converging`` (settles at or above r_safe) or ``unsafe``."""
    if d.min() < r_safe:
        return "unsafe"
    tail = d[-max(len(d) // 10, 2):]
    return "diverging" if tail[-1] > tail[0] else "converging"


def sample_trial(base: ScenarioConfig, ranges: ValidityRanges, trial: int, max_attempts: int = 200):
    """Draw initial conditions for ``trial`` until one passes the start checks.

    Draw ``j`` of trial ``i`` uses the stream keyed by ``(seed, i, j)`` so the
    result does not depend on which other trials run.
    """
    if not base.merges:
        raise ConfigError("validity batch needs a merging vehicle")
    m = base.merges[0]
    p_m = m.s0 - m.lane.merge_s
    for j in range(max_attempts):
        rng = noise_rng(base.seed, 1_000_003, trial, j)
        gap = rng.uniform(*ranges.gap_m)
        rel = rng.uniform(*ranges.rel_speed_mps)
        alpha = rng.uniform(*ranges.alpha_nominal)
        ego = replace(base.ego, s0=base.ego.lane.merge_s + p_m + gap, speed=m.speed + rel)
        cfg = replace(base, ego=ego, trial_id=trial).with_controller(alpha_nominal=alpha, adaptive=True)
        x_e = initial_state(ego).x
        if any(np.linalg.norm(x_e - initial_state(mm).x) <= cfg.controller.r_safe for mm in cfg.merges):
            continue
        if constant_control_witness(cfg, u_limit=ranges.start_control_mps2) is None:
            continue
        return cfg, (gap, rel, alpha), j + 1
    raise SamplingError(
        f"trial {trial}: no admissible start in {max_attempts} draws from "
        f"gap_m={ranges.gap_m}, rel_speed_mps={ranges.rel_speed_mps}, "
        f"start_control_mps2={ranges.start_control_mps2}"
    )


def _run_trial(args) -> tuple[TrialSummary, int]:
    base, ranges, trial, fixed = args
    cfg, (gap, rel, alpha), attempts = sample_trial(base, ranges, trial)
    if fixed:
        cfg = cfg.with_controller(adaptive=False)
    tr = run_episode(cfg)
    summary = TrialSummary(
        trial, gap, rel, alpha, attempts, tr.min_distance, tr.collision,
        tr.n_infeasible, tr.n_violated, tr.outcome().slot,
        distance_curve_shape(tr.distance[:, 0], cfg.controller.r_safe),
    )
    return summary, attempts - 1


def run_validity_batch(
    base: ScenarioConfig,
    n_trials: int,
    ranges: ValidityRanges = ValidityRanges(),
    fixed_alpha: bool = False,
    workers: int = 1,
) -> BatchReport:
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    jobs = [(base, ranges, i, fixed_alpha) for i in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_trial, jobs, chunksize=max(1, n_trials // (4 * workers))))
    else:
        results = [_run_trial(j) for j in jobs]
    results.sort(key=lambda r: r[0].trial)
    return BatchReport([r[0] for r in results], sum(r[1] for r in results), base.controller.r_safe)


# --- comparisons -------------------------------------------------------------


@dataclass
class ComparisonResult:
    adaptive: SimulationTrace
    fixed: SimulationTrace
    fixed_infeasible_steps: np.ndarray
    adaptation_steps: np.ndarray


def run_fixed_alpha_comparison(cfg: ScenarioConfig) -> ComparisonResult:
    """Same scenario and seed under adaptive alpha and under alpha fixed at the nominal value."""
    adaptive = run_episode(cfg.with_controller(adaptive=True))
    fixed = run_episode(cfg.with_controller(adaptive=False))
    nominal = cfg.controller.alpha_nominal
    return ComparisonResult(
        adaptive,
        fixed,
        fixed.infeasible_steps,
        np.flatnonzero(adaptive.alpha > nominal),
    )


def run_alpha_sweep(cfg: ScenarioConfig, alphas: Sequence[float]) -> dict:
    return {float(a): run_episode(cfg.with_controller(alpha_nominal=float(a))) for a in alphas}
