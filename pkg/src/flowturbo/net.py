"""Small dense velocity networks with hand-written backprop.

Both nets take a state block, a sinusoidal embedding of flow time and a learned
condition embedding, and return a ``D``-vector.  The velocity net's state block is
``x``; the refiner's is ``[x, v_prev]`` and its output is an *offset* to ``v_prev``.

The first layer is evaluated in split form: the time and condition columns of the
input collapse into a ``(C + 1, H)`` bias table per time value, so only the narrow
state columns go through a per-row product.  The same table is what the plan
compiler precomputes ahead of sampling.

Parameters live in one flat float64 buffer; ``layers`` and ``cond_table`` are views
into it, in checkpoint declaration order.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from os import PathLike
from typing import BinaryIO

import numpy as np

from . import kernels
from .errors import (
    CheckpointError,
    ConditionIndexError,
    DimensionError,
    ParameterBudgetError,
    StateError,
)

TIME_DIM = 16
COND_DIM = 8
REFINER_BUDGET = 0.10

MAGIC = b"FTRB"
FORMAT_VERSION = 1


NARROW = 8


def _dense(h: np.ndarray, W: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """h @ W such that each row's result does not depend on the batch size."""
    B, H = h.shape[0], W.shape[1]
    if out is None:
        out = np.empty((B, H))
    if H <= NARROW:
        kernels.dense_narrow(h, W, out)
    elif B == 1:
        # a single row would go down the gemv path and round differently
        out[...] = np.matmul(np.vstack([h, h]), W)[:1]
    else:
        np.matmul(h, W, out=out)
    return out


def time_features(t: float, dim: int = TIME_DIM) -> np.ndarray:
    """``[sin(f_k t), cos(f_k t)]`` over geometrically spaced frequencies."""
    freqs = np.pi * np.geomspace(0.25, 16.0, dim // 2)
    ang = float(t) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


@dataclass
class Tape:
    """Activations cached by :meth:`DenseNet.forward_train` for one backward pass."""

    net_id: int
    version: int
    state: np.ndarray
    temb: np.ndarray
    onehot: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


class DenseNet:
    """Shared machinery for :class:`VelocityNet` and :class:`RefinerNet`."""

    kind = "dense"
    _state_blocks = 1

    def __init__(
        self,
        dim: int,
        num_classes: int = 0,
        hidden: tuple[int, ...] = (192, 192),
        time_dim: int = TIME_DIM,
        cond_dim: int = COND_DIM,
        seed: int = 0,
        zero_output: bool = False,
    ):
        if dim < 1 or not hidden or min(hidden) < 1:
            raise DimensionError(f"bad net shape dim={dim} hidden={hidden}")
        if time_dim % 2:
            raise DimensionError("time_dim must be even")
        self.dim = int(dim)
        self.num_classes = int(num_classes)
        self.hidden = tuple(int(h) for h in hidden)
        self.time_dim = int(time_dim)
        self.cond_dim = int(cond_dim)
        self.state_width = self._state_blocks * self.dim
        self.version = 0
        self.extra: dict = {}

        widths = [self.state_width + self.time_dim + self.cond_dim, *self.hidden, self.dim]
        self._shapes = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            self._shapes += [(fan_in, fan_out), (fan_out,)]
        self._shapes.append((self.num_classes + 1, self.cond_dim))
        self.params = np.zeros(sum(int(np.prod(s)) for s in self._shapes))
        self._bind_views()
        self._init(seed, zero_output)

    # -- parameter layout -------------------------------------------------

    def _bind_views(self) -> None:
        views, off = [], 0
        for shape in self._shapes:
            n = int(np.prod(shape))
            views.append(self.params[off : off + n].reshape(shape))
            off += n
        self.layers = [(views[i], views[i + 1]) for i in range(0, len(views) - 1, 2)]
        self.cond_table = views[-1]

    def split(self, flat: np.ndarray) -> tuple[list, np.ndarray]:
        """View a flat gradient-shaped vector with the same layout as ``params``."""
        views, off = [], 0
        for shape in self._shapes:
            n = int(np.prod(shape))
            views.append(flat[off : off + n].reshape(shape))
            off += n
        return [(views[i], views[i + 1]) for i in range(0, len(views) - 1, 2)], views[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def _init(self, seed: int, zero_output: bool) -> None:
        rng = np.random.default_rng(seed)
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            fan_in = W.shape[0]
            if i < last:
                W[...] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), W.shape)
            elif not zero_output:
                W[...] = rng.normal(0.0, 0.01 / np.sqrt(fan_in), W.shape)
            b[...] = 0.0
        self.cond_table[...] = rng.normal(0.0, 1.0, self.cond_table.shape)
        self.snap_to_float32()

    def snap_to_float32(self) -> None:
        """Round parameters onto the float32 grid so checkpoints round-trip exactly."""
        self.params[...] = self.params.astype(np.float32)
        self.mark_updated()

    def mark_updated(self) -> None:
        """Invalidate outstanding tapes after an in-place parameter change."""
        self.version += 1

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise DimensionError(f"expected {self.params.shape} parameters, got {flat.shape}")
        self.params[...] = flat
        self.mark_updated()

    def checksum(self) -> str:
        import hashlib

        return hashlib.sha256(self.params.tobytes()).hexdigest()

    def copy(self) -> "DenseNet":
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.params = self.params.copy()
        other._bind_views()
        other.version = 0
        return other

    # -- forward ----------------------------------------------------------

    def first_layer_table(self, t: float) -> np.ndarray:
        """Bias rows of layer one at time ``t``, one per condition (null last)."""
        W1, b1 = self.layers[0]
        s, e = self.state_width, self.state_width + self.time_dim
        row = time_features(t, self.time_dim) @ W1[s:e] + b1
        return self.cond_table @ W1[e:] + row

    def _labels(self, y, batch: int) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim == 0:
            y = np.full(batch, int(y), dtype=np.int64)
        y = np.ascontiguousarray(y, dtype=np.int64)
        if y.shape != (batch,):
            raise DimensionError(f"condition shape {y.shape} does not match batch {batch}")
        if y.size and (y.min() < 0 or y.max() > self.num_classes):
            raise ConditionIndexError(f"condition index outside [0, {self.num_classes}]")
        return y

    def _check_state(self, x: np.ndarray, name: str = "x") -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"{name} must have shape (B, {self.dim}), got {x.shape}")
        return x

    def _run(self, state: np.ndarray, table: np.ndarray, y: np.ndarray, buffers=None) -> np.ndarray:
        """Inference pass; ``buffers`` (one array per layer) makes it allocation-free."""
        B = state.shape[0]
        W1 = self.layers[0][0][: self.state_width]
        h = buffers[0] if buffers is not None else np.empty((B, self.hidden[0]))
        kernels.affine_table_silu(state, W1, table, y, h)
        for i, (W, b) in enumerate(self.layers[1:-1], start=1):
            z = _dense(h, W, buffers[i] if buffers is not None else None)
            kernels.bias_silu(z, b)
            h = z
        W, b = self.layers[-1]
        out = _dense(h, W, buffers[-1] if buffers is not None else None)
        out += b
        return out

    def forward_train(self, state: np.ndarray, t: float, y) -> tuple[np.ndarray, Tape]:
        """Forward pass that also records what :meth:`backward` needs."""
        B = state.shape[0]
        y = self._labels(y, B)
        temb = time_features(t, self.time_dim)
        onehot = np.zeros((B, self.num_classes + 1))
        onehot[np.arange(B), y] = 1.0
        tape = Tape(id(self), self.version, state, temb, onehot)
        W1 = self.layers[0][0][: self.state_width]
        z = np.empty((B, self.hidden[0]))
        kernels.affine_table(state, W1, self.first_layer_table(t), y, z)
        h = np.empty_like(z)
        kernels.silu_into(z, h)
        tape.pre.append(z)
        tape.post.append(h)
        for W, b in self.layers[1:-1]:
            z = _dense(h, W)
            h = np.empty_like(z)
            kernels.bias_silu_keep(z, b, h)
            tape.pre.append(z)
            tape.post.append(h)
        W, b = self.layers[-1]
        out = _dense(h, W)
        out += b
        return out, tape

    def backward(self, tape: Tape, grad_out: np.ndarray) -> np.ndarray:
        """Exact parameter gradient of a scalar loss given ``dloss/doutput``."""
        if tape.net_id != id(self) or tape.version != self.version:
            raise StateError("tape does not belong to the current parameters of this net")
        grad_out = np.asarray(grad_out, dtype=np.float64)
        B = tape.state.shape[0]
        if grad_out.shape != (B, self.dim):
            raise DimensionError(f"grad_out shape {grad_out.shape} != {(B, self.dim)}")
        flat = np.zeros_like(self.params)
        glayers, gcond = self.split(flat)

        g = grad_out
        for i in range(len(self.layers) - 1, 0, -1):
            W, _ = self.layers[i]
            gW, gb = glayers[i]
            np.matmul(tape.post[i - 1].T, g, out=gW)
            gb[...] = g.sum(axis=0)
            g = g @ W.T
            kernels.silu_backward(g, tape.pre[i - 1])

        W1, _ = self.layers[0]
        gW1, gb1 = glayers[0]
        s, e = self.state_width, self.state_width + self.time_dim
        gW1[:s] = tape.state.T @ g
        col = g.sum(axis=0)
        gb1[...] = col
        gW1[s:e] = np.outer(tape.temb, col)
        per_cond = tape.onehot.T @ g
        gW1[e:] = self.cond_table.T @ per_cond
        gcond[...] = per_cond @ W1[e:].T
        return flat

    # -- checkpoint -------------------------------------------------------

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "num_classes": self.num_classes,
            "hidden": list(self.hidden),
            "time_dim": self.time_dim,
            "cond_dim": self.cond_dim,
            "state_width": self.state_width,
            "activation": "silu",
            "shapes": [list(s) for s in self._shapes],
            "n_params": self.n_params,
        }

    def to_bytes(self, extra: dict | None = None) -> bytes:
        meta = self.metadata()
        if extra:
            meta["extra"] = extra
        blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        buf.write(blob)
        buf.write(self.params.astype("<f4").tobytes())
        return buf.getvalue()


class VelocityNet(DenseNet):
    """``v_theta(x, t | y)`` in flow time; condition index ``num_classes`` is the null condition."""

    kind = "velocity"

    def forward(self, x, t: float, y) -> np.ndarray:
        x = self._check_state(x)
        y = self._labels(y, x.shape[0])
        return self._run(x, self.first_layer_table(t), y)


class RefinerNet(DenseNet):
    """``r_phi(x, v_prev, t | y)``: predicts the velocity offset relative to ``v_prev``.

    The output layer starts at zero, so an untrained refiner returns ``v_prev``
    unchanged.  When ``paired`` is given the parameter count must stay within
    ``REFINER_BUDGET`` of that velocity net.
    """

    kind = "refiner"
    _state_blocks = 2

    def __init__(self, dim: int, num_classes: int = 0, hidden: tuple[int, ...] = (48, 48),
                 time_dim: int = TIME_DIM, cond_dim: int = COND_DIM, seed: int = 0,
                 paired: VelocityNet | None = None):
        super().__init__(dim, num_classes, hidden, time_dim, cond_dim, seed, zero_output=True)
        self.paired_params = paired.n_params if paired is not None else None
        if paired is not None:
            if (paired.dim, paired.num_classes) != (self.dim, self.num_classes):
                raise DimensionError("refiner and velocity net disagree on dim / classes")
            if self.n_params > REFINER_BUDGET * paired.n_params:
                raise ParameterBudgetError(
                    f"refiner has {self.n_params} parameters, more than "
                    f"{REFINER_BUDGET:.0%} of the velocity net's {paired.n_params}"
                )

    def stack(self, x, v_prev) -> np.ndarray:
        x = self._check_state(x)
        v_prev = self._check_state(v_prev, "v_prev")
        if x.shape != v_prev.shape:
            raise DimensionError(f"x {x.shape} and v_prev {v_prev.shape} differ")
        return np.concatenate([x, v_prev], axis=1)

    def forward(self, x, v_prev, t: float, y) -> np.ndarray:
        state = self.stack(x, v_prev)
        y = self._labels(y, state.shape[0])
        return self._run(state, self.first_layer_table(t), y)

    def metadata(self) -> dict:
        meta = super().metadata()
        meta["paired_params"] = self.paired_params
        return meta


def forward_v(net: VelocityNet, x, t: float, y) -> np.ndarray:
    return net.forward(x, t, y)


def forward_r(net: RefinerNet, x, v_prev, t: float, y) -> np.ndarray:
    return net.forward(x, v_prev, t, y)


def backward(net: DenseNet, tape: Tape, loss_grad) -> np.ndarray:
    return net.backward(tape, loss_grad)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def from_bytes(data: bytes) -> DenseNet:
    fh = io.BytesIO(data)
    if _read_exact(fh, 4) != MAGIC:
        raise CheckpointError("not a flowturbo checkpoint (bad magic)")
    version, meta_len = struct.unpack("<II", _read_exact(fh, 8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc
    cls = {"velocity": VelocityNet, "refiner": RefinerNet}.get(meta.get("kind"))
    if cls is None:
        raise CheckpointError(f"unknown net kind {meta.get('kind')!r}")
    net = cls.__new__(cls)
    DenseNet.__init__(net, meta["dim"], meta["num_classes"], tuple(meta["hidden"]),
                      meta["time_dim"], meta["cond_dim"], seed=0, zero_output=True)
    if cls is RefinerNet:
        net.paired_params = meta.get("paired_params")
    raw = fh.read()
    if len(raw) != 4 * net.n_params:
        raise CheckpointError(f"expected {net.n_params} parameters, found {len(raw) // 4}")
    net.params[...] = np.frombuffer(raw, dtype="<f4")
    net.extra = meta.get("extra", {})
    net.mark_updated()
    return net


def save(net: DenseNet, path: str | PathLike, extra: dict | None = None) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, net.to_bytes(extra))


def load(path: str | PathLike) -> DenseNet:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
