"""Verification harnesses: convergence order, prediction curvature, the flow/diffusion
loss-weight identity and sliced Wasserstein distances.

Also hosts closed-form velocity models used as oracles in place of trained nets.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import expm

from .errors import DimensionError, DomainError, SingularityError
from .sampling import BlockKind, GuidanceSpec, NFECounts, as_field, integrate, run_plan, uniform_grid
from .schedule import LINEAR, NoiseSchedule, eps_from_velocity, psi, target_velocity, zeta_weight


# -- analytic solver-time fields ---------------------------------------------


class AnalyticField:
    """dx/ds = f(x, s) with a closed-form flow map; counts evaluations like a net."""

    kind = "analytic"

    def __init__(self, dim: int):
        self.dim = dim
        self.counts = NFECounts()

    def velocity(self, x, s: float) -> np.ndarray:
        self.counts.base_evals += 1
        self.counts.base_calls += 1
        return self._f(np.asarray(x, dtype=np.float64), s)

    def _f(self, x, s):
        raise NotImplementedError

    def exact(self, x0, s0: float, s1: float) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, c: float) -> "AnalyticField":
        raise NotImplementedError


class Constant(AnalyticField):
    kind = "constant"

    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        super().__init__(self.c.size)

    def _f(self, x, s):
        return np.broadcast_to(self.c, x.shape).copy()

    def exact(self, x0, s0, s1):
        return np.asarray(x0, dtype=np.float64) + (s1 - s0) * self.c

    def scaled(self, c):
        return Constant(c * self.c)


class LinearDecay(AnalyticField):
    """dx/ds = -lam x, so x(s) = x0 exp(-lam (s - s0))."""

    kind = "linear-decay"

    def __init__(self, lam: float = 1.0, dim: int = 1):
        self.lam = float(lam)
        super().__init__(dim)

    def _f(self, x, s):
        return -self.lam * x

    def exact(self, x0, s0, s1):
        return np.asarray(x0, dtype=np.float64) * math.exp(-self.lam * (s1 - s0))

    def scaled(self, c):
        return LinearDecay(c * self.lam, self.dim)


class AffineTimeVarying(AnalyticField):
    """dx/ds = A x + b0 + b1 s, solved exactly through an augmented matrix exponential."""

    kind = "affine"

    def __init__(self, A, b0, b1):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        D = self.A.shape[0]
        self.b0 = np.broadcast_to(np.asarray(b0, dtype=np.float64), (D,)).copy()
        self.b1 = np.broadcast_to(np.asarray(b1, dtype=np.float64), (D,)).copy()
        if self.A.shape != (D, D):
            raise DimensionError("A must be square")
        super().__init__(D)

    def _f(self, x, s):
        return x @ self.A.T + self.b0 + s * self.b1

    def exact(self, x0, s0, s1):
        D = self.dim
        # z = (x, s, 1): dz/ds = M z
        M = np.zeros((D + 2, D + 2))
        M[:D, :D] = self.A
        M[:D, D] = self.b1
        M[:D, D + 1] = self.b0
        M[D, D + 1] = 1.0
        E = expm(M * (s1 - s0))
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        z = np.hstack([x0, np.full((len(x0), 1), s0), np.ones((len(x0), 1))])
        return (z @ E.T)[:, :D]

    def scaled(self, c):
        return AffineTimeVarying(c * self.A, c * self.b0, c * self.b1)


def make_field(name: str, dim: int = 2) -> AnalyticField:
    """Named fields used by the CLI and the acceptance suite."""
    if name == "constant":
        return Constant(np.linspace(0.5, -0.5, dim) if dim > 1 else [0.5])
    if name == "linear-decay":
        return LinearDecay(1.0, dim)
    if name == "affine":
        rng = np.random.default_rng(3)
        A = -np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
        return AffineTimeVarying(A, rng.standard_normal(dim), rng.standard_normal(dim))
    raise DomainError(f"unknown field {name!r}; choose constant, linear-decay or affine")


# -- analytic flow-time velocity models (stand-ins for a trained net) ---------


class PointMassVelocity:
    """Exact flow-matching velocity when all data sits at ``centre``: (x - c) / t."""

    num_classes = 0

    def __init__(self, centre):
        self.centre = np.atleast_1d(np.asarray(centre, dtype=np.float64))
        self.dim = self.centre.size

    def forward(self, x, t: float, y=None) -> np.ndarray:
        if t <= 0.0:
            raise SingularityError("point-mass velocity is undefined at t = 0")
        return (np.asarray(x, dtype=np.float64) - self.centre) / t


class GaussianVelocity:
    """Exact linear-interpolant velocity for data ~ N(mean, std^2 I).

    The probability-flow ODE maps noise z to ``mean + std * z`` exactly, which
    gives a sampling oracle for whole plans.
    """

    num_classes = 0

    def __init__(self, mean, std: float = 0.5):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self.std = float(std)
        self.dim = self.mean.size

    def _var(self, t):
        return (1 - t) ** 2 * self.std**2 + t**2

    def forward(self, x, t: float, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        gain = (t - (1 - t) * self.std**2) / self._var(t)
        return -self.mean + gain * (x - (1 - t) * self.mean)

    def transport(self, noise, t: float = 0.0) -> np.ndarray:
        """Exact ODE solution at flow time ``t`` starting from ``noise`` at t = 1."""
        return (1 - t) * self.mean + math.sqrt(self._var(t)) * np.asarray(noise, dtype=np.float64)


# -- convergence order --------------------------------------------------------

TEMPLATES = {
    "euler": lambda n: [BlockKind.E] * n,
    "heun": lambda n: [BlockKind.H] * n,
    "pseudo": lambda n: [BlockKind.H] + [BlockKind.P] * (n - 1),
}


@dataclass
class OrderReport:
    solver: str
    field: str
    step_counts: list
    step_sizes: list
    errors: list
    slope: float | None
    half_width: float | None
    exact: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> list:
        return [(h, e) for h, e in zip(self.step_sizes, self.errors)]


def empirical_order(solver, fld: AnalyticField, step_counts, x0=None, span=(0.0, 1.0),
                    exact_tol: float = 1e-13) -> OrderReport:
    """Fit the slope of log(terminal error) against log(step size).

    ``solver`` is a template name (euler, heun, pseudo) or a callable mapping
    a step count to a block list.
    """
    counts = [int(n) for n in step_counts]
    if len(counts) < 4 or max(counts) < 2 * min(counts):
        raise DomainError("need at least four step counts spanning an octave")
    name = solver if isinstance(solver, str) else getattr(solver, "__name__", "custom")
    template = TEMPLATES[solver] if isinstance(solver, str) else solver
    if x0 is None:
        x0 = np.linspace(1.0, -0.5, fld.dim)[None, :]
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    s0, s1 = span
    truth = fld.exact(x0, s0, s1)
    scale = max(1.0, float(np.max(np.abs(truth))))
    errors, sizes = [], []
    for n in counts:
        grid = s0 + (s1 - s0) * uniform_grid(n)
        x, _ = integrate(fld, template(n), grid, x0.copy())
        errors.append(float(np.max(np.abs(x - truth))))
        sizes.append((s1 - s0) / n)
    if all(e <= exact_tol * scale for e in errors):
        return OrderReport(name, fld.kind, counts, sizes, errors, None, None, exact=True)
    if min(errors) <= 0.0:
        raise DomainError("some but not all errors vanished; cannot fit an order")
    fit = stats.linregress(np.log(sizes), np.log(errors))
    half = float(stats.t.ppf(0.975, len(counts) - 2) * fit.stderr)
    return OrderReport(name, fld.kind, counts, sizes, errors, float(fit.slope), half)


# -- curvature ----------------------------------------------------------------


@dataclass
class CurvatureSeries:
    parameterization: str
    values: list
    knots: list = field(default_factory=list)

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.values)) if self.values else None

    @property
    def max(self) -> float | None:
        return float(np.max(self.values)) if self.values else None

    def to_dict(self) -> dict:
        return {"parameterization": self.parameterization, "values": self.values,
                "knots": self.knots, "mean": self.mean, "max": self.max}


def prediction_path(net, plan, noise, spec: GuidanceSpec | None = None, refiner=None):
    """States and flow-time velocity predictions at the start knot of every block."""
    states = []

    def grab(i, x, s, cache):
        states.append((float(s), x.copy()))

    run_plan(plan, net, refiner, noise, spec, before_block=grab)
    probe = as_field(net, refiner, spec if spec is not None else GuidanceSpec())
    return [(s, x, -probe.velocity(x, s)) for s, x in states]


def curvature_series(net, plan, noise, spec: GuidanceSpec | None = None,
                     parameterization: str = "velocity", refiner=None,
                     schedule: NoiseSchedule = LINEAR) -> CurvatureSeries:
    """Per-step ||p_{k+1} - p_k|| / delta_s along the sampled trajectory, averaged over the batch.

    ``p`` is the velocity prediction or its epsilon conversion at each block's
    start knot.  Knots where the conversion is singular (t = 1) are skipped.
    """
    if parameterization not in ("velocity", "epsilon"):
        raise DomainError("parameterization must be 'velocity' or 'epsilon'")
    preds = []
    for s, x, v in prediction_path(net, plan, noise, spec, refiner):
        if parameterization == "velocity":
            preds.append((s, v))
            continue
        try:
            # the linear closed form is finite at t = 1, but the conversion is not defined there
            zeta_weight(1.0 - s, schedule)
        except SingularityError:
            continue
        preds.append((s, eps_from_velocity(x, v, 1.0 - s, schedule)))
    values = []
    for (sa, pa), (sb, pb) in zip(preds, preds[1:]):
        values.append(float(np.mean(np.linalg.norm(pb - pa, axis=1)) / (sb - sa)))
    return CurvatureSeries(parameterization, values, [s for s, _ in preds])


# -- loss-weight identity -----------------------------------------------------


def loss_weight_residuals(net, schedule: NoiseSchedule, x0, eps, t: float, y=None) -> np.ndarray:
    """| ||v - u||^2 - zeta_t^2 ||eps_hat - eps||^2 | per sample."""
    if t > 1.0 - 1e-6:
        raise SingularityError(f"t={t} is too close to 1; the loss weight diverges")
    x = psi(x0, eps, t, schedule)
    u = target_velocity(x0, eps, t, schedule)
    if y is None:
        y = np.full(len(x), getattr(net, "num_classes", 0))
    v = net.forward(x, t, y)
    e = eps_from_velocity(x, v, t, schedule)
    z = zeta_weight(t, schedule)
    lhs = np.sum((v - u) ** 2, axis=1)
    rhs = z * z * np.sum((e - eps) ** 2, axis=1)
    return np.abs(lhs - rhs)


def loss_weight_identity(net, schedule: NoiseSchedule, batch) -> float:
    """Max residual over a batch ``(x0, eps, t)`` or ``(x0, eps, t, y)``."""
    return float(np.max(loss_weight_residuals(net, schedule, *batch)))


# -- sliced Wasserstein ---------------------------------------------------------


def _w2_sorted(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact W2 between the empirical columns of sorted ``a`` (N, K) and ``b`` (M, K)."""
    N, M = len(a), len(b)
    if N == M:
        return np.sqrt(np.mean((a - b) ** 2, axis=0))
    # piecewise-constant quantile functions; merge their breakpoints
    u = np.union1d(np.arange(N + 1) / N, np.arange(M + 1) / M)
    w = np.diff(u)
    mid = 0.5 * (u[1:] + u[:-1])
    ia = np.minimum((mid * N).astype(np.int64), N - 1)
    ib = np.minimum((mid * M).astype(np.int64), M - 1)
    return np.sqrt(w @ (a[ia] - b[ib]) ** 2)


@dataclass
class DistanceReport:
    distance: float
    n: int
    m: int
    projections: int
    seed: int
    dim: int

    def to_dict(self) -> dict:
        return asdict(self)


def projections(dim: int, k: int, seed: int) -> np.ndarray:
    theta = np.random.default_rng(seed).standard_normal((k, dim))
    return theta / np.linalg.norm(theta, axis=1, keepdims=True)


def sliced_wasserstein(X, Y, K: int = 128, seed: int = 0) -> float:
    """Mean over K random unit directions of the exact 1-D W2 between projections."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    if len(X) < 2 or len(Y) < 2 or K < 1:
        raise DomainError("need at least two points per set and K >= 1")
    theta = projections(X.shape[1], K, seed)
    a = np.sort(X @ theta.T, axis=0)
    b = np.sort(Y @ theta.T, axis=0)
    return float(np.mean(_w2_sorted(a, b)))


def distance_report(X, Y, K: int = 128, seed: int = 0) -> DistanceReport:
    return DistanceReport(sliced_wasserstein(X, Y, K, seed), len(X), len(Y), K, seed, np.shape(X)[1])
