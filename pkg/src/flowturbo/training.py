"""Flow-matching training of the velocity net and offset regression for the refiner.

Both loops draw everything from one generator seeded by ``TrainConfig.seed``
in a fixed order, so a seeded run reproduces its loss curve bit for bit.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .data import ToyDataset
from .errors import DomainError, TrainingError
from .net import RefinerNet, VelocityNet
from .schedule import LINEAR, NoiseSchedule, psi, target_velocity


@dataclass
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 64
    steps: int = 2000
    dt_lo: float = 0.0
    dt_hi: float = 0.12
    gamma1: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    clip: float = 1.0
    seed: int = 0
    lr_schedule: str = "constant"  # or "cosine"
    hidden: tuple = (192, 192)
    refiner_hidden: tuple = (48, 48)
    conditional: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.refiner_hidden = tuple(int(h) for h in self.refiner_hidden)
        self.validate()

    def validate(self) -> None:
        if not self.lr > 0:
            raise DomainError("learning rate must be positive")
        if self.batch_size < 1 or self.steps < 0:
            raise DomainError("batch size must be >= 1 and steps >= 0")
        if not (0.0 <= self.dt_lo < self.dt_hi <= 0.2):
            raise DomainError(f"dt range ({self.dt_lo}, {self.dt_hi}] must satisfy 0 <= lo < hi <= 0.2")
        if not 0.0 <= self.gamma1 <= 1.0:
            raise DomainError("gamma1 must lie in [0, 1]")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise DomainError("betas must lie in [0, 1)")
        if self.weight_decay < 0 or self.clip <= 0:
            raise DomainError("weight decay must be >= 0 and clip > 0")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in u64")
        if self.lr_schedule not in ("constant", "cosine"):
            raise DomainError(f"unknown lr schedule {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["refiner_hidden"] = list(self.refiner_hidden)
        return d


@dataclass
class LossRecord:
    step: int
    loss: float
    seconds: float
    n_dropped: int = 0


class AdamW:
    """Adam with decoupled weight decay, updating a flat parameter vector in place."""

    def __init__(self, n: int, lr: float, beta1=0.9, beta2=0.999, weight_decay=0.0, eps=1e-8):
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.weight_decay, self.eps = weight_decay, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        if self.weight_decay:
            params *= 1 - lr * self.weight_decay
        params -= lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_global_norm(grad: np.ndarray, max_norm: float) -> float:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm > max_norm:
        grad *= max_norm / norm
    return norm


def condition_dropout(y: np.ndarray, gamma: float, null: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Replace each label by the null condition with probability ``gamma``."""
    drop = rng.random(len(y)) < gamma
    return np.where(drop, null, y), int(drop.sum())


def cfm_loss(net, x0, eps, t: float, y, schedule: NoiseSchedule = LINEAR) -> tuple[float, np.ndarray]:
    """Mean squared flow-matching error over all B*D entries and its parameter gradient."""
    x = psi(x0, eps, t, schedule)
    u = target_velocity(x0, eps, t, schedule)
    v, tape = net.forward_train(x, t, y)
    r = v - u
    n = r.size
    loss = float(np.sum(r * r) / n)
    grad = net.backward(tape, (2.0 / n) * r)
    return loss, grad


def _lr_at(config: TrainConfig, step: int) -> float:
    if config.lr_schedule == "cosine" and config.steps > 1:
        return config.lr * 0.5 * (1 + math.cos(math.pi * step / (config.steps - 1)))
    return config.lr


def _labels(config: TrainConfig, data: ToyDataset, y: np.ndarray) -> np.ndarray:
    return y if config.conditional else np.zeros_like(y)


def _finish_step(net, opt: AdamW, grad, loss, config, step, t0, records, dropped):
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise TrainingError("non-finite loss", step)
    clip_global_norm(grad, config.clip)
    opt.step(net.params, grad, _lr_at(config, step))
    net.mark_updated()
    records.append(LossRecord(step, loss, time.perf_counter() - t0, dropped))


def train_velocity(
    config: TrainConfig,
    data: ToyDataset,
    schedule: NoiseSchedule = LINEAR,
    net: VelocityNet | None = None,
) -> tuple[VelocityNet, list[LossRecord]]:
    """Conditional flow matching with one shared t ~ U[0, 1] per batch."""
    rng = np.random.default_rng(config.seed)
    C = data.num_classes if config.conditional else 0
    if net is None:
        net = VelocityNet(data.dim, C, hidden=config.hidden, seed=int(rng.integers(2**63)))
    opt = AdamW(net.n_params, config.lr, config.beta1, config.beta2, config.weight_decay)
    records: list[LossRecord] = []
    t0 = time.perf_counter()
    for step in range(config.steps):
        x0, y = data.sample(config.batch_size, rng)
        y, dropped = condition_dropout(_labels(config, data, y), config.gamma1, net.num_classes, rng)
        eps = rng.standard_normal(x0.shape)
        t = float(rng.random())
        loss, grad = cfm_loss(net, x0, eps, t, y, schedule)
        _finish_step(net, opt, grad, loss, config, step, t0, records, dropped)
    # the checkpoint stores float32; keep the in-memory net identical to a reload
    net.snap_to_float32()
    return net, records


@dataclass
class RefinerBatch:
    """One simulated Euler step along the sampling direction (flow time decreasing)."""

    x: np.ndarray  # state after the Euler step, at t_cur
    v_prev: np.ndarray  # base velocity at the previous knot
    target: np.ndarray  # base velocity at (x, t_cur)
    t_prev: float
    t_cur: float
    dt: float
    y: np.ndarray
    n_dropped: int = 0


def draw_refiner_batch(
    base, config: TrainConfig, data: ToyDataset, rng: np.random.Generator, schedule: NoiseSchedule = LINEAR
) -> RefinerBatch:
    """Sample (x0, eps, dt, t) and simulate one base-model Euler step.

    dt is uniform on (lo, hi].  The earlier knot is drawn in solver time,
    s ~ U[0, 1 - dt), which keeps both knots inside [0, 1].
    """
    x0, y = data.sample(config.batch_size, rng)
    y, dropped = condition_dropout(_labels(config, data, y), config.gamma1, base.num_classes, rng)
    eps = rng.standard_normal(x0.shape)
    dt = config.dt_hi - rng.random() * (config.dt_hi - config.dt_lo)
    s_prev = rng.random() * (1.0 - dt)
    t_prev = 1.0 - s_prev
    t_cur = max(t_prev - dt, 0.0)
    x_prev = psi(x0, eps, t_prev, schedule)
    v_prev = base.forward(x_prev, t_prev, y)
    x = x_prev - dt * v_prev
    target = base.forward(x, t_cur, y)
    return RefinerBatch(x, v_prev, target, t_prev, t_cur, dt, y, dropped)


def refiner_loss(refiner: RefinerNet, batch: RefinerBatch) -> tuple[float, np.ndarray]:
    state = refiner.stack(batch.x, batch.v_prev)
    out, tape = refiner.forward_train(state, batch.t_cur, batch.y)
    r = out + batch.v_prev - batch.target
    n = r.size
    loss = float(np.sum(r * r) / n)
    return loss, refiner.backward(tape, (2.0 / n) * r)


def train_refiner(
    base,
    config: TrainConfig,
    data: ToyDataset,
    schedule: NoiseSchedule = LINEAR,
    refiner: RefinerNet | None = None,
) -> tuple[RefinerNet, list[LossRecord]]:
    """Regress the refiner onto the velocity offset left by one Euler step of the frozen base.

    ``base`` only needs ``forward(x, t, y)``, ``dim`` and ``num_classes``, so
    analytic velocity models can stand in for a trained net.
    """
    rng = np.random.default_rng(config.seed)
    if refiner is None:
        paired = base if isinstance(base, VelocityNet) else None
        refiner = RefinerNet(base.dim, base.num_classes, hidden=config.refiner_hidden,
                             seed=int(rng.integers(2**63)), paired=paired)
    checksum = base.checksum() if hasattr(base, "checksum") else None
    opt = AdamW(refiner.n_params, config.lr, config.beta1, config.beta2, config.weight_decay)
    records: list[LossRecord] = []
    t0 = time.perf_counter()
    for step in range(config.steps):
        batch = draw_refiner_batch(base, config, data, rng, schedule)
        loss, grad = refiner_loss(refiner, batch)
        _finish_step(refiner, opt, grad, loss, config, step, t0, records, batch.n_dropped)
    refiner.snap_to_float32()
    if checksum is not None and base.checksum() != checksum:
        raise TrainingError("base parameters changed during refiner training", config.steps)
    return refiner, records


def refiner_fidelity(base, refiner: RefinerNet, config: TrainConfig, data: ToyDataset,
                     n_batches: int = 50, seed: int = 12345) -> dict:
    """Held-out MSE of the refined velocity and of the naive reuse of v_prev."""
    rng = np.random.default_rng(seed)
    refined = naive = 0.0
    for _ in range(n_batches):
        b = draw_refiner_batch(base, config, data, rng)
        v = refiner.forward(b.x, b.v_prev, b.t_cur, b.y) + b.v_prev
        refined += float(np.mean((v - b.target) ** 2))
        naive += float(np.mean((b.v_prev - b.target) ** 2))
    return {"refined_mse": refined / n_batches, "naive_mse": naive / n_batches,
            "ratio": refined / naive if naive > 0 else 0.0}
