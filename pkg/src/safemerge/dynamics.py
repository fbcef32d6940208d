"""Stochastic double integrator with Gaussian velocity noise.

Per step (explicit Euler)::

    x' = x + (v + eps) * dt,   eps ~ N(mean, cov)
    v' = v + u * dt

The noise enters the position channel only; the control enters the velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    pass


def _vec2(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (2,):
        raise ModelError(f"{name} must be a 2-vector, got shape {np.shape(x)}")
    if not (math.isfinite(a[0]) and math.isfinite(a[1])):
        raise ModelError(f"{name} must be finite")
    return a


def min_eig_sym2(c: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric 2x2 matrix."""
    half_tr = 0.5 * (c[0, 0] + c[1, 1])
    diff = 0.5 * (c[0, 0] - c[1, 1])
    return half_tr - math.hypot(diff, c[0, 1])


@dataclass(frozen=True)
class VehicleState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _vec2(self.x, "x"))
        object.__setattr__(self, "v", _vec2(self.v, "v"))


@dataclass(frozen=True)
class NoiseModel:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _vec2(self.mean, "mean")
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2, 2) or not np.all(np.isfinite(cov)):
            raise ModelError(f"cov must be a finite 2x2 matrix, got {cov.tolist()}")
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise ModelError("cov must be symmetric")
        w, V = np.linalg.eigh(cov)
        if w.min() < -1e-12:
            raise ModelError(f"cov must be positive semi-definite (eigenvalues {w.tolist()})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        # square-root factor used to color standard normal draws
        object.__setattr__(self, "_sqrt", V * np.sqrt(np.clip(w, 0.0, None)))

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(np.zeros(2), np.zeros((2, 2)))

    @classmethod
    def isotropic(cls, sigma: float, mean=(0.0, 0.0)) -> "NoiseModel":
        return cls(np.asarray(mean, dtype=float), sigma**2 * np.eye(2))

    def color(self, z: np.ndarray) -> np.ndarray:
        """Map standard normal draws ``z`` (..., 2) to samples of N(mean, cov)."""
        return self.mean + np.asarray(z) @ self._sqrt.T

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (2,) if size is None else (*np.atleast_1d(size), 2)
        return self.color(rng.standard_normal(shape))


@dataclass(frozen=True)
class StepParams:
    dt: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ModelError(f"dt must be positive, got {self.dt}")


def euler_step(s: VehicleState, u, eps, dt: float) -> VehicleState:
    """One Euler step with a given noise realization ``eps``."""
    u = np.asarray(u, dtype=float)
    return VehicleState(s.x + (s.v + eps) * dt, s.v + u * dt)


def noise_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by ``(seed, *key)``, e.g. ``(seed, trial, step, vehicle)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def step_stochastic(
    s: VehicleState, u, noise: NoiseModel, p: StepParams, rng_seed
) -> VehicleState:
    """Sample ``eps`` and advance one step.

    ``rng_seed`` is an int, a sequence of ints (hashed through ``SeedSequence``)
    or an ``np.random.Generator``.
    """
    if isinstance(rng_seed, np.random.Generator):
        rng = rng_seed
    else:
        rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    return euler_step(s, _vec2(u, "u"), noise.sample(rng), p.dt)


def step_expected(s: VehicleState, u, noise: NoiseModel, p: StepParams) -> VehicleState:
    """Noise-mean propagation used for the controller's one-step look-ahead."""
    return euler_step(s, _vec2(u, "u"), noise.mean, p.dt)
