"""Sample-config parsing (``H2P4R2`` or ``H,H,P,P,P,P,R,R``) and plan lowering.

``compile_plan`` turns a :class:`SamplePlan` into a flat instruction list with
the step constants folded in.  ``execute_compiled`` then runs it with
preallocated buffers, per-knot first-layer tables and, under CFG, one
width-2B forward pass per evaluation instead of two width-B passes.  It uses
the same kernels as the interpreter, so results agree bit for bit whenever the
dense layers are batch independent (they are, see ``net._dense``).
"""
from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import PlanParseError, PlanValidationError
from .sampling import BlockKind, GuidanceSpec, NFECounts, uniform_grid

_COMPACT = re.compile(rb"([HPRE])([0-9]+)")
_SEQ_ITEM = re.compile(rb"([HPRE])([0-9]*)")


@dataclass
class SamplePlan:
    blocks: tuple
    grid: np.ndarray
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)

    def __post_init__(self):
        self.blocks = tuple(BlockKind(b) for b in self.blocks)
        self.grid = uniform_grid(len(self.blocks)) if self.grid is None else np.asarray(self.grid, dtype=np.float64)

    def validate(self) -> "SamplePlan":
        if not self.blocks:
            raise PlanValidationError("empty plan")
        if self.blocks[0].needs_cache:
            raise PlanValidationError(
                f"plan starts with {self.blocks[0].value}, which needs a velocity cache; start with H or E", 0)
        g = self.grid
        if g.shape != (len(self.blocks) + 1,):
            raise PlanValidationError(f"grid needs {len(self.blocks) + 1} knots, got {g.size}")
        if g[0] < 0 or g[-1] > 1 or np.any(np.diff(g) <= 0):
            bad = int(np.argmax(np.diff(g) <= 0)) if np.any(np.diff(g) <= 0) else None
            raise PlanValidationError("grid knots must increase strictly inside [0, 1]", bad)
        return self

    def counts(self) -> dict:
        return {k.value: sum(b is k for b in self.blocks) for k in BlockKind}

    def to_config(self) -> str:
        """Run-length form, e.g. ``H2P4R2``."""
        out, prev, n = [], None, 0
        for b in self.blocks:
            if b is prev:
                n += 1
                continue
            if prev is not None:
                out.append(f"{prev.value}{n}")
            prev, n = b, 1
        out.append(f"{prev.value}{n}")
        return "".join(out)

    def expected_nfe(self) -> NFECounts:
        """Counters forced by the block definitions (per branch when CFG needs both)."""
        c = self.counts()
        base = 2 * c["H"] + c["P"] + c["E"]
        return NFECounts(base_evals=base, refiner_evals=c["R"], base_calls=base, refiner_calls=c["R"])


def parse_config(text: str, grid=None, guidance: GuidanceSpec | None = None) -> SamplePlan:
    """Parse a sample config into a validated plan.

    Compact form ``H2P4R2`` needs a count after every letter; the comma form
    ``H,H,P`` takes an optional count per item.  Errors carry byte offsets.
    """
    raw = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    lead = len(raw) - len(raw.lstrip())
    body = raw.strip()
    blocks: list[BlockKind] = []
    if not body:
        raise PlanValidationError("empty plan")
    if b"," in body:
        pos = 0
        for item in body.split(b","):
            stripped = item.strip()
            off = lead + pos + (len(item) - len(item.lstrip()))
            m = _SEQ_ITEM.fullmatch(stripped)
            if not stripped or m is None:
                raise PlanParseError(f"malformed block {stripped.decode('utf-8', 'replace')!r}", off)
            n = int(m.group(2)) if m.group(2) else 1
            blocks += [BlockKind(m.group(1).decode())] * n
            pos += len(item) + 1
    else:
        pos = 0
        while pos < len(body):
            m = _COMPACT.match(body, pos)
            if m is None:
                ch = body[pos : pos + 1]
                what = "missing count" if ch in b"HPRE" else f"unexpected {ch.decode('utf-8', 'replace')!r}"
                raise PlanParseError(what, lead + pos + (1 if ch in b"HPRE" else 0))
            blocks += [BlockKind(m.group(1).decode())] * int(m.group(2))
            pos = m.end()
    plan = SamplePlan(tuple(blocks), grid, guidance or GuidanceSpec())
    return plan.validate()


# -- lowering ----------------------------------------------------------------

_OPCODES = {BlockKind.H: "heun", BlockKind.P: "pseudo", BlockKind.R: "refine", BlockKind.E: "euler"}


@dataclass(frozen=True)
class Instruction:
    op: str
    index: int = -1
    s0: float = 0.0
    s1: float = 0.0
    dt: float = 0.0
    half_dt: float = 0.0

    def to_dict(self) -> dict:
        d = {"op": self.op}
        if self.index >= 0:
            d.update(index=self.index, s0=self.s0, s1=self.s1, t0=1.0 - self.s0, dt=self.dt, half_dt=self.half_dt)
        return d


@dataclass(frozen=True)
class CompiledPlan:
    instructions: tuple
    guidance: GuidanceSpec
    fused: bool
    source: str
    base_knots: tuple  # solver times where the base net is evaluated
    refiner_knots: tuple

    @property
    def blocks(self) -> tuple:
        return tuple(i for i in self.instructions if i.index >= 0)

    def buffer_layout(self, batch: int, dim: int, base_hidden=(), refiner_hidden=()) -> dict:
        """Array shapes one execution allocates up front."""
        w = 2 * batch if self.fused else batch
        tile = min(w, ROW_TILE)
        layout = {
            "state": [batch, dim],
            "stage": [batch, dim],
            "velocity": [2, batch, dim],
            "base_input": [w, dim],
            "base_hidden": [[tile, h] for h in base_hidden],
            "base_output": [w, dim],
        }
        if self.refiner_knots:
            layout.update(refiner_input=[w, 2 * dim], refiner_hidden=[[tile, h] for h in refiner_hidden],
                          refiner_output=[w, dim])
        return layout

    def to_json(self) -> str:
        return json.dumps({
            "source": self.source,
            "fused": self.fused,
            "guidance": {"scale": self.guidance.scale, "y": _jsonable(self.guidance.y)},
            "instructions": [i.to_dict() for i in self.instructions],
        }, indent=2, sort_keys=True)


def _jsonable(y):
    if y is None:
        return None
    y = np.asarray(y)
    return int(y) if y.ndim == 0 else y.tolist()


def compile_plan(plan: SamplePlan | str, guidance: GuidanceSpec | None = None) -> CompiledPlan:
    if isinstance(plan, str):
        plan = parse_config(plan, guidance=guidance)
    plan.validate()
    spec = guidance if guidance is not None else plan.guidance
    fused = spec.y is not None and spec.scale not in (0.0, 1.0)
    instrs = [Instruction("load_noise")]
    base_knots, ref_knots = set(), set()
    for i, kind in enumerate(plan.blocks):
        s0, s1 = float(plan.grid[i]), float(plan.grid[i + 1])
        dt = s1 - s0
        instrs.append(Instruction(_OPCODES[kind], i, s0, s1, dt, 0.5 * dt))
        if kind in (BlockKind.H, BlockKind.E):
            base_knots.add(s0)
        if kind in (BlockKind.H, BlockKind.P):
            base_knots.add(s1)
        if kind is BlockKind.R:
            ref_knots.add(s0)
    instrs.append(Instruction("store"))
    return CompiledPlan(tuple(instrs), spec, fused, plan.to_config(),
                        tuple(sorted(base_knots)), tuple(sorted(ref_knots)))


# -- execution ---------------------------------------------------------------


ROW_TILE = 256


class _Evaluator:
    """One net bound to preallocated buffers and per-knot tables.

    A (possibly fused) evaluation is one dispatch, executed in row tiles of
    ``ROW_TILE`` so each tile's activations stay cache resident across layers.
    Rows are independent, so tiling does not change any value.
    """

    def __init__(self, net, knots, spec: GuidanceSpec, batch: int, width_in: int):
        self.net = net
        need_u, need_c = spec.branches(net.num_classes)
        self.fused = need_u and need_c
        self.scale = float(spec.scale)
        self.B = batch
        w = 2 * batch if self.fused else batch
        null, y = spec.labels(net.num_classes, batch)
        if self.fused:
            self.labels = np.concatenate([null, y])
        else:
            self.labels = y if need_c else null
        net._labels(self.labels, w)
        self.tables = {s: net.first_layer_table(1.0 - s) for s in knots}
        self.inp = np.empty((w, width_in))
        tile = min(w, ROW_TILE)
        self.bufs = [np.empty((tile, h)) for h in net.hidden]
        self.out = np.empty((w, net.dim))
        self.tiles = [(r, min(r + tile, w)) for r in range(0, w, tile)]
        self.branches = 2 if self.fused else 1

    def run(self, s: float, dst: np.ndarray) -> None:
        """dst <- guided flow-time output at solver time s (input already in ``self.inp``)."""
        table, o = self.tables[s], self.out
        for r0, r1 in self.tiles:
            n = r1 - r0
            bufs = [b[:n] for b in self.bufs]
            bufs.append(o[r0:r1])
            self.net._run(self.inp[r0:r1], table, self.labels[r0:r1], bufs)
        if self.fused:
            B = self.B
            kernels.cfg_combine(o[:B], o[B:], self.scale, dst)
        else:
            dst[...] = o


def execute_compiled(cplan: CompiledPlan, net, refiner=None, noise=None) -> tuple[np.ndarray, NFECounts, float]:
    """Run a compiled plan; returns (samples, counters, wall seconds)."""
    t_start = time.perf_counter()
    x = np.array(noise, dtype=np.float64, order="C", copy=True)
    if x.ndim != 2 or x.shape[1] != net.dim:
        raise PlanValidationError(f"noise shape {x.shape} does not match net dimension {net.dim}")
    B, D = x.shape
    spec = cplan.guidance
    base = _Evaluator(net, cplan.base_knots, spec, B, D)
    ref = None
    if cplan.refiner_knots:
        if refiner is None:
            raise PlanValidationError("plan contains refiner blocks but no refiner was given")
        if refiner.dim != D:
            raise PlanValidationError(f"refiner dimension {refiner.dim} does not match noise {D}")
        ref = _Evaluator(refiner, cplan.refiner_knots, spec, B, 2 * D)
    counts = NFECounts()
    xt = np.empty_like(x)
    xn = np.empty_like(x)
    vel = [np.empty_like(x), np.empty_like(x)]
    cache = -1  # index into vel of the cached solver velocity

    def eval_base(z, s, dst):
        base.inp[:B] = z
        if base.fused:
            base.inp[B:] = z
        base.run(s, dst)
        np.negative(dst, out=dst)
        counts.base_evals += base.branches
        counts.base_calls += 1

    def eval_refined(z, d_prev, s, dst):
        ref.inp[:B, :D] = z
        v_prev = ref.inp[:B, D:]
        np.negative(d_prev, out=v_prev)
        if ref.fused:
            ref.inp[B:] = ref.inp[:B]
        ref.run(s, dst)
        dst += v_prev
        np.negative(dst, out=dst)
        counts.refiner_evals += ref.branches
        counts.refiner_calls += 1

    for ins in cplan.instructions:
        op = ins.op
        if op == "heun" or op == "pseudo":
            if op == "heun":
                d0 = vel[0] if cache != 0 else vel[1]
                eval_base(x, ins.s0, d0)
                k1 = 1 if d0 is vel[0] else 0
            else:
                d0 = vel[cache]
                k1 = 1 - cache
            kernels.euler_step(x, d0, ins.dt, xt)
            eval_base(xt, ins.s1, vel[k1])
            kernels.heun_step(x, d0, vel[k1], ins.half_dt, xn)
            x, xn = xn, x
            cache = k1
        elif op == "euler" or op == "refine":
            k = 1 - cache if cache >= 0 else 0
            if op == "euler":
                eval_base(x, ins.s0, vel[k])
            else:
                eval_refined(x, vel[cache], ins.s0, vel[k])
            kernels.euler_step(x, vel[k], ins.dt, xn)
            x, xn = xn, x
            cache = k
    out = x.copy()
    return out, counts, time.perf_counter() - t_start
