"""Pairwise distance barrier and its chance-constrained linear reduction.

For ego ``e`` and merging vehicle ``m`` with ``h = |dx|^2 - r_safe^2`` the
condition ``Pr(hdot + alpha*h >= 0) >= eta`` under Gaussian relative noise
reduces to the deterministic half-line ``a * u_e <= b`` on the ego's scalar
lane acceleration, with::

    A2 = -2 dx^T dt                       (row vector)
    a  = A2 @ R(theta) @ (1, 0)
    b  = 2 dx^T (dv + deps_mean) + alpha*h - kappa * z_eta * sqrt(dx^T dcov dx)

``kappa = 2`` is the exact standard deviation of ``2 dx^T deps``;
``kappa = 1`` reproduces the coefficient as commonly printed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import NoiseModel, VehicleState, min_eig_sym2
from .geometry import project_control, reduce_constraint

KAPPA_EXACT = 2.0
KAPPA_PAPER = 1.0


@dataclass(frozen=True)
class SafetyParams:
    r_safe: float
    eta: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.r_safe > 0:
            raise ValueError(f"r_safe must be positive, got {self.r_safe}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")


@dataclass(frozen=True)
class PairGeometry:
    dx: np.ndarray
    dv: np.ndarray
    d_eps_mean: np.ndarray
    d_eps_cov: np.ndarray

    def __post_init__(self):
        for name in ("dx", "dv", "d_eps_mean"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(2))
        cov = np.asarray(self.d_eps_cov, dtype=float).reshape(2, 2)
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise ValueError("d_eps_cov must be symmetric")
        if min_eig_sym2(cov) < -1e-12:
            raise ValueError("d_eps_cov must be positive semi-definite")
        object.__setattr__(self, "d_eps_cov", cov)

    @classmethod
    def deterministic(cls, dx, dv) -> "PairGeometry":
        return cls(dx, dv, np.zeros(2), np.zeros((2, 2)))

    def quad_form(self) -> float:
        """``dx^T dcov dx``, clipped at zero."""
        return max(float(self.dx @ self.d_eps_cov @ self.dx), 0.0)


@dataclass(frozen=True)
class ConstraintCoeffs:
    """Half-line ``a * u <= b`` on the scalar ego acceleration."""

    a: float
    b: float

    def satisfied(self, u: float, tol: float = 0.0) -> bool:
        return self.a * u <= self.b + tol


def pair_geometry(
    ego: VehicleState, ego_noise: NoiseModel, other: VehicleState, other_noise: NoiseModel
) -> PairGeometry:
    """Relative quantities; the two noise processes are independent."""
    return PairGeometry(
        ego.x - other.x,
        ego.v - other.v,
        ego_noise.mean - other_noise.mean,
        ego_noise.cov + other_noise.cov,
    )


def safety_value(x_e, x_m, r_safe: float) -> float:
    d = np.asarray(x_e, dtype=float) - np.asarray(x_m, dtype=float)
    return float(d @ d) - r_safe * r_safe


# Acklam's rational approximation, relative error ~1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _acklam_lower(p: float) -> float:
    # valid for 0 < p <= 0.5
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def inv_norm_cdf(p: float) -> float:
    """Standard normal quantile, absolute error below 1e-9 on [1e-12, 1 - 1e-12]."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    # work in the lower tail where erfc is accurate; 1 - p is exact for p > 0.5
    lower = p if p < 0.5 else 1.0 - p
    x = _acklam_lower(lower)
    x -= (norm_cdf(x) - lower) * _SQRT2PI * math.exp(0.5 * x * x)
    return x if p < 0.5 else -x


def chance_penalty(g: PairGeometry, eta: float, kappa: float = KAPPA_EXACT) -> float:
    """Tightening ``kappa * z_eta * sqrt(dx^T dcov dx)`` subtracted from ``b``."""
    q = g.quad_form()
    if q == 0.0:
        return 0.0
    return kappa * inv_norm_cdf(eta) * math.sqrt(q)


def _kappa(paper_coefficient_mode: bool) -> float:
    return KAPPA_PAPER if paper_coefficient_mode else KAPPA_EXACT


def build_constraint(
    g: PairGeometry,
    params: SafetyParams,
    dt: float,
    theta: float,
    paper_coefficient_mode: bool = False,
) -> ConstraintCoeffs:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    h = float(g.dx @ g.dx) - params.r_safe**2
    a = reduce_constraint(-2.0 * g.dx * dt, theta)
    b = (
        2.0 * float(g.dx @ (g.dv + g.d_eps_mean))
        + params.alpha * h
        - chance_penalty(g, params.eta, _kappa(paper_coefficient_mode))
    )
    return ConstraintCoeffs(a, b)


def check_chance_satisfaction(
    g: PairGeometry,
    params: SafetyParams,
    dt: float,
    u_e: float,
    theta: float,
    n_samples: int,
    seed=0,
) -> float:
    """Monte Carlo estimate of ``Pr(hdot + alpha*h >= 0)`` at control ``u_e``.

    Samples the relative noise and evaluates
    ``2 dx^T deps >= -2 dx^T (dv + u dt) - alpha*h`` directly.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    h = float(g.dx @ g.dx) - params.r_safe**2
    u_vec = project_control(theta, u_e)
    rhs = -2.0 * float(g.dx @ (g.dv + u_vec * dt)) - params.alpha * h
    noise = NoiseModel(g.d_eps_mean, g.d_eps_cov)
    eps = noise.sample(rng, n_samples)
    lhs = 2.0 * eps @ g.dx
    return float(np.mean(lhs >= rhs))
