"""Boundary values of alpha at which a pairwise constraint activates or empties the box.

Writing the constraint as ``a*u <= alpha*h - T`` and dividing by ``h > 0``::

    alpha >= M*u + N,   M = a/h,   N = T/h

so the box ``[u_min, u_max]`` meets the half-line iff ``alpha >= alpha_feasible``
and lies entirely inside it iff ``alpha >= alpha_active``. For ``h < 0`` both
inequalities flip; such pairs are already inside the unsafe set and are flagged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .cbf import ConstraintCoeffs, PairGeometry, _kappa, chance_penalty
from .geometry import reduce_constraint

H_SINGULAR = 1e-9
ALPHA_MARGIN = 1e-9


class SingularityError(ArithmeticError):
    """``h`` is numerically zero, so the alpha bounds are undefined."""


class Activation(enum.Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class ControlBounds:
    u_min: float
    u_max: float

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError(f"need u_min < u_max, got [{self.u_min}, {self.u_max}]")


@dataclass(frozen=True)
class FeasibilityBounds:
    m_coef: float
    n_coef: float
    t_term: float
    alpha_feasible: float
    alpha_active: float
    case_sign: int
    a: float
    h: float

    @property
    def violated(self) -> bool:
        return self.h < 0

    def constraint(self, alpha: float) -> ConstraintCoeffs:
        return ConstraintCoeffs(self.a, alpha * self.h - self.t_term)


def t_term(g: PairGeometry, eta: float, coefficient_mode: bool = False) -> float:
    return -2.0 * float(g.dx @ (g.dv + g.d_eps_mean)) + chance_penalty(
        g, eta, _kappa(coefficient_mode)
    )


def bounds_for_pair(
    g: PairGeometry,
    r_safe: float,
    eta: float,
    dt: float,
    theta: float,
    cb: ControlBounds,
    coefficient_mode: bool = False,
) -> FeasibilityBounds:
    h = float(g.dx @ g.dx) - r_safe**2
    if abs(h) < H_SINGULAR:
        raise SingularityError(f"h = {h:.3g} is on the safe-set boundary")
    a = reduce_constraint(-2.0 * g.dx * dt, theta)
    T = t_term(g, eta, coefficient_mode)
    M, N = a / h, T / h
    if a >= 0:
        fea, act, sign = M * cb.u_min + N, M * cb.u_max + N, 1
    else:
        fea, act, sign = M * cb.u_max + N, M * cb.u_min + N, -1
    return FeasibilityBounds(M, N, T, fea, act, sign, a, h)


def classify(alpha: float, fb: FeasibilityBounds) -> Activation:
    if fb.h > 0:
        if alpha < fb.alpha_feasible:
            return Activation.INFEASIBLE
        return Activation.INACTIVE if alpha >= fb.alpha_active else Activation.ACTIVE
    # dividing by h < 0 reverses both inequalities
    if alpha > fb.alpha_feasible:
        return Activation.INFEASIBLE
    return Activation.INACTIVE if alpha <= fb.alpha_active else Activation.ACTIVE


def adapt_alpha(alpha_nominal: float, fbs, margin: float = ALPHA_MARGIN) -> float:
    """Closest alpha to ``alpha_nominal`` that keeps every pair feasible against the box.

    Pairs with ``h < 0`` give an upper bound on alpha, not a lower one, and are skipped.
    """
    fbs = list(fbs)
    if not fbs:
        raise ValueError("need at least one pair")
    floor = max((fb.alpha_feasible for fb in fbs if fb.h > 0), default=-math.inf)
    return floor + margin if floor >= alpha_nominal else float(alpha_nominal)


def joint_alpha_floor(fbs, cb: ControlBounds) -> float:
    """Smallest alpha for which the box and all half-lines (``h > 0``) intersect.

    Every lower bound on ``u`` is a line in alpha with slope ``<= 0`` and every
    upper bound a line with slope ``>= 0``, so feasibility is an up-set in
    alpha and its threshold is the largest pairwise crossing. Returns ``-inf``
    when every alpha works and ``inf`` when none does.
    """
    lowers = [(cb.u_min, 0.0)]
    uppers = [(cb.u_max, 0.0)]
    floor = -math.inf
    for fb in fbs:
        if fb.h <= 0:
            continue
        if fb.a > 0:
            uppers.append((-fb.t_term / fb.a, fb.h / fb.a))
        elif fb.a < 0:
            lowers.append((-fb.t_term / fb.a, fb.h / fb.a))
        else:
            floor = max(floor, fb.n_coef)
    for c1, d1 in lowers:
        for c2, d2 in uppers:
            slope = d2 - d1
            if slope > 0:
                floor = max(floor, (c1 - c2) / slope)
            elif c1 > c2:
                return math.inf
    return floor


def k_value(fb: FeasibilityBounds, alpha: float) -> float:
    """Position ``b/a`` of the constraint's boundary on the u axis."""
    c = fb.constraint(alpha)
    return c.b / c.a if c.a != 0 else (math.inf if c.b >= 0 else -math.inf)
