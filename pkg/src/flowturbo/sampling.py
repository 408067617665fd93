"""Solver blocks (Euler, Heun, pseudo corrector, refiner), CFG and the editing recipes.

Sampling runs in *solver time* ``s = 1 - t``: ``s = 0`` is pure noise and
``s = 1`` is data, so every block integrates forward.  Nets are trained in
flow time and predict the flow-time velocity ``v``; the solver-time velocity
is ``d(x, s) = -v(x, 1 - s)``.

Blocks talk to a *field*: anything with ``velocity(x, s)`` (and, for refiner
blocks, ``refined(x, d_prev, s)``) plus a ``counts`` attribute.  Analytic test
fields and net-backed :class:`GuidedField` share the same block code.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import DegenerateInputError, DimensionError, DomainError, SequencingError
from .schedule import LINEAR, psi


class BlockKind(str, enum.Enum):
    H = "H"
    P = "P"
    R = "R"
    E = "E"

    @property
    def needs_cache(self) -> bool:
        return self in (BlockKind.P, BlockKind.R)


@dataclass
class NFECounts:
    """Per-branch forward passes (``*_evals``) and batched dispatches (``*_calls``)."""

    base_evals: int = 0
    refiner_evals: int = 0
    base_calls: int = 0
    refiner_calls: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VelocityCache:
    d: np.ndarray | None = None
    t_of_d: float | None = None

    @property
    def empty(self) -> bool:
        return self.d is None


@dataclass
class GuidanceSpec:
    """CFG scale and target condition.  ``y=None`` means unconditional sampling."""

    scale: float = 1.0
    y: object = None

    def __post_init__(self):
        if not self.scale >= 0:
            raise DomainError(f"guidance scale must be >= 0, got {self.scale}")

    def branches(self, num_classes: int) -> tuple[bool, bool]:
        """(needs unconditional pass, needs conditional pass) for a net with ``num_classes``."""
        if self.y is None or num_classes == 0:
            return True, False
        if self.scale == 1.0:
            return False, True
        if self.scale == 0.0:
            return True, False
        return True, True

    def labels(self, num_classes: int, batch: int) -> tuple[np.ndarray, np.ndarray]:
        null = np.full(batch, num_classes, dtype=np.int64)
        if self.y is None or num_classes == 0:
            return null, null
        y = np.asarray(self.y, dtype=np.int64)
        if y.ndim == 0:
            y = np.full(batch, int(y), dtype=np.int64)
        return null, np.ascontiguousarray(y)


def cfg_velocity(net, x, t: float, spec: GuidanceSpec, counts: NFECounts | None = None) -> np.ndarray:
    """Guided flow-time velocity (1 - zeta) v(x, t | null) + zeta v(x, t | y), one pass per branch."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    need_u, need_c = spec.branches(net.num_classes)
    null, y = spec.labels(net.num_classes, x.shape[0])
    vu = net.forward(x, t, null) if need_u else None
    vc = net.forward(x, t, y) if need_c else None
    if counts is not None:
        n = int(need_u) + int(need_c)
        counts.base_evals += n
        counts.base_calls += n
    if vu is None:
        return vc
    if vc is None:
        return vu
    out = np.empty_like(vu)
    kernels.cfg_combine(vu, vc, float(spec.scale), out)
    return out


class GuidedField:
    """Solver-time view of a velocity net (and optional refiner) under CFG."""

    def __init__(self, net, refiner=None, spec: GuidanceSpec | None = None):
        self.net = net
        self.refiner = refiner
        self.spec = spec or GuidanceSpec()
        self.counts = NFECounts()
        self.dim = net.dim

    def velocity(self, x: np.ndarray, s: float) -> np.ndarray:
        v = cfg_velocity(self.net, x, 1.0 - s, self.spec, self.counts)
        return np.negative(v, out=v)

    def refined(self, x: np.ndarray, d_prev: np.ndarray, s: float) -> np.ndarray:
        """Refined solver velocity from the cached one; the refiner sees flow-sign inputs."""
        if self.refiner is None:
            raise SequencingError("plan contains refiner blocks but no refiner was given")
        r = self.refiner
        t = 1.0 - s
        v_prev = -d_prev
        need_u, need_c = self.spec.branches(r.num_classes)
        null, y = self.spec.labels(r.num_classes, x.shape[0])
        ru = r.forward(x, v_prev, t, null) if need_u else None
        rc = r.forward(x, v_prev, t, y) if need_c else None
        n = int(need_u) + int(need_c)
        self.counts.refiner_evals += n
        self.counts.refiner_calls += n
        if ru is None or rc is None:
            off = ru if rc is None else rc
        else:
            off = np.empty_like(ru)
            kernels.cfg_combine(ru, rc, float(self.spec.scale), off)
        # d = -(v_prev + offset)
        off += v_prev
        return np.negative(off, out=off)


def as_field(model, refiner=None, spec: GuidanceSpec | None = None):
    """Pass fields through; wrap nets in a :class:`GuidedField`."""
    if hasattr(model, "velocity"):
        return model
    return GuidedField(model, refiner, spec)


# -- blocks ----------------------------------------------------------------


def euler_block(field, x, s0: float, s1: float, cache: VelocityCache | None = None):
    h = s1 - s0
    d = field.velocity(x, s0)
    out = np.empty_like(x)
    kernels.euler_step(x, d, h, out)
    return out, VelocityCache(d, s0)


def _corrector(field, x, d0, s1: float, h: float):
    xt = np.empty_like(x)
    kernels.euler_step(x, d0, h, xt)
    d1 = field.velocity(xt, s1)
    out = np.empty_like(x)
    kernels.heun_step(x, d0, d1, 0.5 * h, out)
    return out, VelocityCache(d1, s1)


def heun_block(field, x, s0: float, s1: float, cache: VelocityCache | None = None):
    """Predictor at (x, s0), corrector at the predicted point; two evaluations.

    The returned cache holds the corrector-stage velocity, which is what a
    following pseudo-corrector block reuses in place of its predictor.
    """
    return _corrector(field, x, field.velocity(x, s0), s1, s1 - s0)


def pseudo_corrector_block(field, x, s0: float, s1: float, cache: VelocityCache | None = None):
    """Heun step whose predictor velocity is taken from the cache; one evaluation."""
    if cache is None or cache.empty:
        raise SequencingError("pseudo-corrector block needs a populated velocity cache")
    return _corrector(field, x, cache.d, s1, s1 - s0)


def refiner_block(field, x, s0: float, s1: float, cache: VelocityCache | None = None):
    """Euler step with the refined velocity; no base-net evaluation."""
    if cache is None or cache.empty:
        raise SequencingError("refiner block needs a populated velocity cache")
    d = field.refined(x, cache.d, s0)
    out = np.empty_like(x)
    kernels.euler_step(x, d, s1 - s0, out)
    return out, VelocityCache(d, s0)


BLOCKS: dict[BlockKind, Callable] = {
    BlockKind.H: heun_block,
    BlockKind.P: pseudo_corrector_block,
    BlockKind.R: refiner_block,
    BlockKind.E: euler_block,
}


# -- plans ------------------------------------------------------------------


def uniform_grid(n_blocks: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_blocks + 1)


def _resolve_plan(plan, spec):
    if isinstance(plan, str):
        from .plan import parse_config

        plan = parse_config(plan)
    plan.validate()
    return plan, (spec if spec is not None else plan.guidance)


def integrate(field, blocks, grid, x, cache: VelocityCache | None = None,
              after_block: Callable | None = None, before_block: Callable | None = None):
    """Run ``blocks`` over consecutive knots of ``grid`` starting from state ``x``."""
    cache = cache or VelocityCache()
    for i, kind in enumerate(blocks):
        s0, s1 = float(grid[i]), float(grid[i + 1])
        if before_block is not None:
            before_block(i, x, s0, cache)
        x, cache = BLOCKS[BlockKind(kind)](field, x, s0, s1, cache)
        if after_block is not None:
            x = after_block(i, x, s1, cache)
    return x, cache


def _check_noise(noise, dim: int | None) -> np.ndarray:
    x = np.array(noise, dtype=np.float64, order="C", copy=True)
    if x.ndim != 2 or (dim is not None and x.shape[1] != dim):
        raise DimensionError(f"noise must have shape (B, {dim}), got {x.shape}")
    return x


def run_plan(plan, net, refiner=None, noise=None, spec: GuidanceSpec | None = None,
             before_block: Callable | None = None) -> tuple[np.ndarray, NFECounts]:
    """Integrate noise (solver time 0) to data (solver time 1) with the plan's blocks."""
    plan, spec = _resolve_plan(plan, spec)
    fld = as_field(net, refiner, spec)
    x = _check_noise(noise, getattr(fld, "dim", None))
    x, _ = integrate(fld, plan.blocks, plan.grid, x, before_block=before_block)
    return x, fld.counts


def reanchor(blocks, grid, s_start: float):
    """Blocks and knots left after starting at solver time ``s_start``.

    Blocks that end at or before ``s_start`` are dropped and the first kept
    block starts exactly at ``s_start``.  With no cache to reuse yet, a
    leading P or R block is run as Heun.
    """
    grid = np.asarray(grid, dtype=np.float64)
    keep = [i for i in range(len(blocks)) if grid[i + 1] > s_start]
    if not keep:
        return [], np.array([s_start])
    first = keep[0]
    kinds = [BlockKind(blocks[i]) for i in keep]
    if kinds[0].needs_cache:
        kinds[0] = BlockKind.H
    new_grid = np.concatenate([[s_start], grid[first + 1 :]])
    return kinds, new_grid


def sdedit(plan, net, refiner, x_ref, t_edit: float, spec: GuidanceSpec | None = None,
           noise=None, seed: int = 0) -> np.ndarray:
    """Noise ``x_ref`` to flow time ``t_edit`` and finish the plan from there."""
    if not 0.0 <= t_edit <= 1.0:
        raise DomainError(f"t_edit must lie in [0, 1], got {t_edit}")
    plan, spec = _resolve_plan(plan, spec)
    fld = as_field(net, refiner, spec)
    x_ref = _check_noise(x_ref, getattr(fld, "dim", None))
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal(x_ref.shape)
    if t_edit == 0.0:
        return x_ref
    blocks, grid = reanchor(plan.blocks, plan.grid, 1.0 - t_edit)
    x = psi(x_ref, noise, t_edit, LINEAR)
    x, _ = integrate(fld, blocks, grid, x)
    return x


def inpaint(plan, net, refiner, x_known, mask, spec: GuidanceSpec | None = None,
            noise=None, seed: int = 0) -> np.ndarray:
    """Sample the unknown coordinates while pinning known ones to their noised reference.

    After every block the coordinates with ``mask == 1`` are overwritten by
    the interpolant of ``x_known`` at the current time, built from the same
    noise the trajectory started from.
    """
    plan, spec = _resolve_plan(plan, spec)
    fld = as_field(net, refiner, spec)
    x_known = _check_noise(x_known, getattr(fld, "dim", None))
    mask = np.asarray(mask)
    if mask.shape != (x_known.shape[1],):
        raise DimensionError(f"mask must have shape ({x_known.shape[1]},), got {mask.shape}")
    known = mask.astype(bool)
    if not known.any():
        raise DegenerateInputError("mask has no known coordinate")
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal(x_known.shape)
    noise = _check_noise(noise, x_known.shape[1])

    def pin(i, x, s, cache):
        x[:, known] = psi(x_known, noise, 1.0 - s, LINEAR)[:, known]
        return x

    x = pin(-1, noise.copy(), 0.0, None)
    x, _ = integrate(fld, plan.blocks, plan.grid, x, after_block=pin)
    return x
