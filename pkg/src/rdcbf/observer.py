"""Disturbance observer for the matched kinematic model ``xdot = u + d``.

With identity observer gain and ``W(x) = x`` the observer is::

    d_hat = z + alpha * x
    z_dot = -alpha * (u + d_hat)

so the estimation error obeys ``e_dot = -alpha * e - d_dot``. The update is
explicit Euler at the caller's period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DisturbanceBounds:
    """Known bounds ``|d| <= omega0``, ``|d_dot| <= omega1`` and the
    Lyapunov split constant ``mu`` with ``0 < mu < 2 * alpha``."""

    omega0: float
    omega1: float
    alpha: float
    mu: float

    def __post_init__(self):
        if self.omega0 < 0 or self.omega1 < 0:
            raise ValueError("omega0 and omega1 must be non-negative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.mu < 2 * self.alpha:
            raise ValueError(f"mu must satisfy 0 < mu < 2*alpha (mu={self.mu}, alpha={self.alpha})")

    @property
    def kappa(self) -> float:
        return self.alpha - self.mu / 2


@dataclass(frozen=True)
class DobState:
    z: np.ndarray
    d_hat: np.ndarray
    alpha: float


def dob_init(x0, alpha: float) -> DobState:
    """Observer state with ``d_hat(0) = 0``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    x0 = np.asarray(x0, dtype=float)
    return DobState(z=-alpha * x0, d_hat=np.zeros_like(x0), alpha=float(alpha))


def dob_update(s: DobState, x, u, dt: float) -> DobState:
    """One Euler step of the observer given the measured state ``x`` after
    the step and the command ``u`` applied during it."""
    if not 0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite observer input")
    z = s.z - dt * s.alpha * (u + s.d_hat)
    return DobState(z=z, d_hat=z + s.alpha * x, alpha=s.alpha)


def error_bound(t: float, e0: float, b: DisturbanceBounds) -> float:
    """Upper bound on ``|d_hat(t) - d(t)|`` given ``|e(0)| = e0``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    k = b.kappa
    decay = math.exp(-2 * k * t)
    return math.sqrt(e0 * e0 * decay + b.omega1 ** 2 * (1 - decay) / (2 * b.mu * k))


def gamma_bound(b: DisturbanceBounds) -> float:
    """Uniform bound on ``|d_hat|``: ``omega0 + sqrt(omega0^2 + omega1^2 / (2 mu kappa))``."""
    return b.omega0 + math.sqrt(b.omega0 ** 2 + b.omega1 ** 2 / (2 * b.mu * b.kappa))


def dob_update_many(s: DobState, xs, u, dt: float) -> DobState:
    """``len(xs) - 1`` consecutive :func:`dob_update` steps under a held ``u``.

    ``xs[0]`` is the state the observer last saw and ``xs[1:]`` the measured
    states after each step. Uses the closed form of the linear recurrence
    ``d_hat' = (1 - alpha dt) d_hat + alpha (x' - x - dt u)``.
    """
    if not 0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    xs = np.asarray(xs, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite observer input")
    n = xs.shape[0] - 1
    if n < 1:
        return s
    c = 1.0 - s.alpha * dt
    inc = s.alpha * (np.diff(xs, axis=0) - dt * u)
    w = c ** np.arange(n - 1, -1, -1)
    d_hat = c ** n * s.d_hat + w @ inc
    return DobState(z=d_hat - s.alpha * xs[-1], d_hat=d_hat, alpha=s.alpha)
