"""Noise schedules, the interpolant map and the flow/diffusion loss weight.

Time here is *flow time*: data sits at ``t = 0`` and pure noise at ``t = 1``.
Samplers integrate in the opposite direction; see :mod:`flowturbo.sampling`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError, SingularityError

ScalarFn = Callable[[float], float]

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    """``alpha(t)``, ``sigma(t)`` and their closed-form derivatives on ``[0, 1]``."""

    kind: str
    alpha: ScalarFn
    sigma: ScalarFn
    d_alpha: ScalarFn
    d_sigma: ScalarFn
    name: str = ""

    @classmethod
    def linear(cls) -> "NoiseSchedule":
        return cls(
            kind="linear",
            alpha=lambda t: 1.0 - t,
            sigma=lambda t: t,
            d_alpha=lambda t: -1.0,
            d_sigma=lambda t: 1.0,
            name="linear",
        )

    @classmethod
    def general_vp(
        cls,
        alpha: ScalarFn,
        sigma: ScalarFn,
        d_alpha: ScalarFn,
        d_sigma: ScalarFn,
        name: str = "general_vp",
    ) -> "NoiseSchedule":
        """Build a schedule from closed-form functions, checking the boundary values."""
        sched = cls("general_vp", alpha, sigma, d_alpha, d_sigma, name)
        ends = (sched.alpha(0.0), sched.sigma(0.0), sched.alpha(1.0), sched.sigma(1.0))
        if not np.allclose(ends, (1.0, 0.0, 0.0, 1.0), rtol=0, atol=_BOUNDARY_TOL):
            raise DomainError(f"schedule {name!r} violates alpha(0)=1, sigma(0)=0, alpha(1)=0, sigma(1)=1: {ends}")
        return sched

    @classmethod
    def cosine(cls) -> "NoiseSchedule":
        half_pi = math.pi / 2
        return cls.general_vp(
            alpha=lambda t: math.cos(half_pi * t),
            sigma=lambda t: math.sin(half_pi * t),
            d_alpha=lambda t: -half_pi * math.sin(half_pi * t),
            d_sigma=lambda t: half_pi * math.cos(half_pi * t),
            name="cosine",
        )

    def coefficients(self, t: float) -> tuple[float, float]:
        t = _check_time(t)
        if self.kind == "linear":
            # exact endpoints, no cos(pi/2) residue
            return 1.0 - t, t
        return self.alpha(t), self.sigma(t)

    def derivatives(self, t: float) -> tuple[float, float]:
        t = _check_time(t)
        return self.d_alpha(t), self.d_sigma(t)


LINEAR = NoiseSchedule.linear()


def _check_time(t: float) -> float:
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t={t} outside [0, 1]")
    return t


def _check_pair(x0: np.ndarray, eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise DimensionError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    return x0, eps


def psi(x0, eps, t: float, schedule: NoiseSchedule = LINEAR) -> np.ndarray:
    """The interpolant ``alpha(t) * x0 + sigma(t) * eps``."""
    x0, eps = _check_pair(x0, eps)
    a, s = schedule.coefficients(t)
    return a * x0 + s * eps


def target_velocity(x0, eps, t: float, schedule: NoiseSchedule = LINEAR) -> np.ndarray:
    """Time derivative of :func:`psi`; ``eps - x0`` for the linear interpolant."""
    x0, eps = _check_pair(x0, eps)
    da, ds = schedule.derivatives(t)
    return da * x0 + ds * eps


def zeta_weight(t: float, schedule: NoiseSchedule = LINEAR) -> float:
    """``d_sigma - d_alpha * sigma / alpha``; diverges where alpha vanishes."""
    a, s = schedule.coefficients(t)
    if a <= 0.0 or abs(a) < _BOUNDARY_TOL:
        raise SingularityError(f"zeta weight is singular at t={t} (alpha={a})")
    da, ds = schedule.derivatives(t)
    return ds - da * s / a


def eps_from_velocity(x, v, t: float, schedule: NoiseSchedule = LINEAR) -> np.ndarray:
    """Convert a velocity prediction at ``(x, t)`` into the equivalent noise prediction.

    Inverts ``v = (d_alpha / alpha) x + zeta * eps``.  The linear interpolant uses the
    closed form ``x + (1 - t) v``, which stays finite at ``t = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape:
        raise DimensionError(f"x shape {x.shape} != v shape {v.shape}")
    if schedule.kind == "linear":
        t = _check_time(t)
        return x + (1.0 - t) * v
    a, _ = schedule.coefficients(t)
    zeta = zeta_weight(t, schedule)
    da, _ = schedule.derivatives(t)
    return (v - (da / a) * x) / zeta
