"""Command-line entry point: ``flowturbo {data,train,sample,verify,bench,replay}``.

Settings resolve as defaults < ``--config`` JSON < explicit flags, and every
command writes a ``manifest.json`` holding the resolved settings so
``flowturbo replay`` can rerun it.  Exit codes: 0 success, 2 usage or
validation error, 3 numerical failure (including a failed ``--assert``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import net as netmod
from .analysis import (
    GaussianVelocity,
    curvature_series,
    distance_report,
    empirical_order,
    loss_weight_residuals,
    make_field,
)
from .data import KINDS, ToyDataset
from .errors import FlowTurboError, TrainingError
from .io import (
    ppm_scatter,
    ppm_tiles,
    read_samples_csv,
    sha256_file,
    write_csv,
    write_json,
    write_samples_csv,
    atomic_write_bytes,
)
from .net import RefinerNet, VelocityNet
from .plan import compile_plan, execute_compiled, parse_config
from .sampling import GuidanceSpec, run_plan
from .schedule import LINEAR, NoiseSchedule
from .training import TrainConfig, train_refiner, train_velocity

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


def default_seed() -> int:
    env = os.environ.get("FLOWTURBO_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FLOWTURBO_SEED must be an integer, got {env!r}") from None


_TRAIN = TrainConfig()

DEFAULTS = {
    "data": {"kind": "moons", "n": 4096, "ppm": False},
    "train": {
        "mode": "velocity", "data": "moons", "steps": 5000, "base": None,
        **{k: v for k, v in _TRAIN.to_dict().items() if k != "seed"},
    },
    "sample": {"plan": "H8", "cfg": 1.0, "n": 1024, "y": None, "base": None, "refiner": None,
               "ppm": False, "compiled": False},
    "verify order": {"solver": "pseudo", "field": "linear-decay", "steps": [10, 20, 40, 80], "dim": 1,
                     "assert": False, "min_slope": None, "max_slope": None},
    "verify curvature": {"base": None, "plan": "H20", "n": 8, "cfg": 1.0, "y": None, "assert": False},
    "verify loss-identity": {"base": None, "schedule": "both", "tuples": 1000, "batch": 16, "max_t": 0.95,
                             "tol": 1e-5, "assert": False},
    "verify sw-distance": {"samples": None, "reference": None, "data": "moons", "n": 4096, "k": 128,
                           "max_distance": None, "assert": False},
    "bench": {"plans": ["H8", "H2P4R2", "H1P5R3"], "batch": [64, 1024], "reps": 5, "cfg": 1.5, "y": 0,
              "base": None, "refiner": None, "assert": False},
}


# -- helpers ----------------------------------------------------------------


def _int_list(text: str) -> list:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _str_list(text: str) -> list:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _opt_int(text: str):
    return None if str(text).lower() in ("none", "null", "") else int(text)


def _load(path, kind=None):
    if path is None:
        raise UsageError(f"a {kind or 'net'} checkpoint is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint not found: {p}")
    net = netmod.load(p)
    if kind == "velocity" and not isinstance(net, VelocityNet):
        raise UsageError(f"{p} is not a velocity checkpoint")
    if kind == "refiner" and not isinstance(net, RefinerNet):
        raise UsageError(f"{p} is not a refiner checkpoint")
    return net


def _inputs(cfg: dict, keys) -> dict:
    out = {}
    for k in keys:
        if cfg.get(k):
            out[k] = {"path": str(cfg[k]), "sha256": sha256_file(cfg[k])}
    return out


def _write_manifest(out: Path, command: str, cfg: dict, inputs: dict, outputs: list, t0: float) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "inputs": inputs,
        "outputs": {name: sha256_file(out / name) for name in outputs},
        "wall_time_s": time.perf_counter() - t0,
    }
    write_json(out / "manifest.json", manifest)


def _report(out: Path, name: str, report: dict) -> None:
    write_json(out / name, report)
    print(json.dumps(report, sort_keys=True, default=str))


def _guidance(cfg: dict) -> GuidanceSpec:
    return GuidanceSpec(float(cfg["cfg"]), cfg.get("y"))


# -- commands -----------------------------------------------------------------


def cmd_data(cfg: dict, out: Path) -> list:
    ds = ToyDataset(cfg["kind"], seed=cfg["seed"])
    x, y = ds.sample(int(cfg["n"]))
    header = [f"x{i}" for i in range(x.shape[1])] + ["label"]
    write_csv(out / "data.csv", header, [list(r) + [int(l)] for r, l in zip(x.tolist(), y)])
    files = ["data.csv"]
    if cfg["ppm"]:
        atomic_write_bytes(out / "data.ppm", ppm_scatter(x) if x.shape[1] == 2 else ppm_tiles(x[:64]))
        files.append("data.ppm")
    return files


def cmd_train(cfg: dict, out: Path) -> list:
    if cfg["mode"] not in ("velocity", "refiner"):
        raise UsageError("--mode must be velocity or refiner")
    if cfg["mode"] == "refiner" and not cfg.get("base"):
        raise UsageError("refiner mode requires --base <velocity checkpoint>")
    fields = set(TrainConfig.__dataclass_fields__)
    tc = TrainConfig(**{k: v for k, v in cfg.items() if k in fields})
    data = ToyDataset(cfg["data"], seed=cfg["seed"])
    extra = {"data": data.kind, "train_config": tc.to_dict(), "mode": cfg["mode"]}
    try:
        if cfg["mode"] == "velocity":
            net, records = train_velocity(tc, data)
            name = "velocity.ftrb"
        else:
            base = _load(cfg["base"], "velocity")
            if base.dim != data.dim:
                raise UsageError(f"base net has D={base.dim} but dataset {data.kind} has D={data.dim}")
            net, records = train_refiner(base, tc, data)
            name = "refiner.ftrb"
    except TrainingError as exc:
        raise NumericFailure(f"training diverged at step {exc.step}: {exc}") from exc
    netmod.save(net, out / name, extra=extra)
    write_csv(out / "loss.csv", ["step", "loss", "seconds"], [(r.step, r.loss, r.seconds) for r in records])
    return [name, "loss.csv"]


def cmd_sample(cfg: dict, out: Path) -> list:
    base = _load(cfg["base"], "velocity")
    spec = _guidance(cfg)
    plan = parse_config(cfg["plan"], guidance=spec)
    refiner = _load(cfg["refiner"], "refiner") if plan.counts()["R"] else None
    noise = np.random.default_rng(cfg["seed"]).standard_normal((int(cfg["n"]), base.dim))
    if cfg["compiled"]:
        x, counts, _ = execute_compiled(compile_plan(plan), base, refiner, noise)
    else:
        x, counts = run_plan(plan, base, refiner, noise, spec)
    if not np.all(np.isfinite(x)):
        raise NumericFailure("samples contain non-finite values")
    write_samples_csv(out / "samples.csv", x)
    write_json(out / "nfe.json", {"plan": plan.to_config(), "cfg": spec.scale, **counts.to_dict()})
    files = ["samples.csv", "nfe.json"]
    if cfg["ppm"]:
        atomic_write_bytes(out / "samples.ppm", ppm_scatter(x) if x.shape[1] == 2 else ppm_tiles(x[:64]))
        files.append("samples.ppm")
    return files


def cmd_verify_order(cfg: dict, out: Path) -> list:
    fld = make_field(cfg["field"], int(cfg["dim"]))
    rep = empirical_order(cfg["solver"], fld, cfg["steps"])
    d = rep.to_dict()
    ok = True
    if not rep.exact:
        if cfg["min_slope"] is not None:
            ok &= rep.slope >= cfg["min_slope"]
        if cfg["max_slope"] is not None:
            ok &= rep.slope <= cfg["max_slope"]
    d["passed"] = bool(ok)
    _report(out, "order.json", d)
    write_csv(out / "order.csv", ["h", "error"], rep.csv_rows())
    if cfg["assert"] and not ok:
        raise NumericFailure(f"slope {rep.slope} outside [{cfg['min_slope']}, {cfg['max_slope']}]")
    return ["order.json", "order.csv"]


def cmd_verify_curvature(cfg: dict, out: Path) -> list:
    if cfg.get("base"):
        net = _load(cfg["base"], "velocity")
        dim = net.dim
    else:
        net = GaussianVelocity([0.5, -0.25], 0.5)
        dim = 2
    spec = _guidance(cfg)
    noise = np.random.default_rng(cfg["seed"]).standard_normal((int(cfg["n"]), dim))
    vel = curvature_series(net, cfg["plan"], noise, spec, "velocity")
    eps = curvature_series(net, cfg["plan"], noise, spec, "epsilon")
    ok = vel.mean is not None and eps.mean is not None and vel.mean < eps.mean
    _report(out, "curvature.json", {"velocity": vel.to_dict(), "epsilon": eps.to_dict(), "passed": bool(ok)})
    if cfg["assert"] and not ok:
        raise NumericFailure(f"velocity curvature {vel.mean} is not below epsilon curvature {eps.mean}")
    return ["curvature.json"]


def cmd_verify_loss_identity(cfg: dict, out: Path) -> list:
    rng = np.random.default_rng(cfg["seed"])
    if cfg.get("base"):
        nets = [_load(cfg["base"], "velocity")]
    else:
        nets = None
    names = ["linear", "cosine"] if cfg["schedule"] == "both" else [cfg["schedule"]]
    schedules = {"linear": LINEAR, "cosine": NoiseSchedule.cosine()}
    if any(n not in schedules for n in names):
        raise UsageError("--schedule must be linear, cosine or both")
    result = {}
    ok = True
    for name in names:
        worst = 0.0
        for _ in range(int(cfg["tuples"])):
            net = nets[0] if nets else VelocityNet(2, 2, hidden=(16, 16), seed=int(rng.integers(2**32)))
            net_scale = float(rng.uniform(0.1, 3.0))
            if not nets:
                net.layers[-1][0][...] = rng.normal(0, net_scale, net.layers[-1][0].shape)
            B = int(cfg["batch"])
            x0 = rng.standard_normal((B, net.dim))
            eps = rng.standard_normal((B, net.dim))
            t = float(rng.uniform(0.0, cfg["max_t"]))
            y = rng.integers(0, net.num_classes + 1, size=B)
            worst = max(worst, float(np.max(loss_weight_residuals(net, schedules[name], x0, eps, t, y))))
        result[name] = {"max_residual": worst, "tuples": int(cfg["tuples"])}
        ok &= worst < cfg["tol"]
    result["tol"] = cfg["tol"]
    result["passed"] = bool(ok)
    _report(out, "loss_identity.json", result)
    if cfg["assert"] and not ok:
        raise NumericFailure("loss-weight identity residual above tolerance")
    return ["loss_identity.json"]


def cmd_verify_sw(cfg: dict, out: Path) -> list:
    if not cfg.get("samples"):
        raise UsageError("--samples <csv> is required")
    X = read_samples_csv(cfg["samples"])
    if cfg.get("reference"):
        Y = read_samples_csv(cfg["reference"])
    else:
        Y, _ = ToyDataset(cfg["data"], seed=cfg["seed"] + 1).sample(int(cfg["n"]))
    rep = distance_report(X, Y, int(cfg["k"]), cfg["seed"]).to_dict()
    ok = cfg["max_distance"] is None or rep["distance"] <= cfg["max_distance"]
    rep["passed"] = bool(ok)
    _report(out, "sw_distance.json", rep)
    if cfg["assert"] and not ok:
        raise NumericFailure(f"distance {rep['distance']} above {cfg['max_distance']}")
    return ["sw_distance.json"]


def bench_rows(base, refiner, plans, batches, reps: int, spec: GuidanceSpec, seed: int = 0) -> list:
    """Median wall times of interpreted and compiled execution, interleaved per repetition."""
    rng = np.random.default_rng(seed)
    rows = []
    for text in plans:
        plan = parse_config(text, guidance=spec)
        cplan = compile_plan(plan)
        for B in batches:
            noise = rng.standard_normal((B, base.dim))
            _, counts = run_plan(plan, base, refiner, noise, spec)
            execute_compiled(cplan, base, refiner, noise)
            ti, tc = [], []
            for _ in range(reps):
                t = time.perf_counter()
                run_plan(plan, base, refiner, noise, spec)
                ti.append(time.perf_counter() - t)
                t = time.perf_counter()
                execute_compiled(cplan, base, refiner, noise)
                tc.append(time.perf_counter() - t)
            rows.append((plan.to_config(), B, 1e3 * float(np.median(ti)), 1e3 * float(np.median(tc)),
                         counts.base_evals, len(plan.blocks)))
    return rows


def bench_verdict(rows) -> tuple[bool, str]:
    ratios = [(r[3] / r[2], r) for r in rows]
    worst = max(ratios, key=lambda p: p[0])
    big = [q for q, r in ratios if r[5] >= 8 and r[1] >= 1024]
    ok = worst[0] <= 1.05 and any(q <= 0.9 for q in big)
    msg = f"worst compiled/interpreted ratio {worst[0]:.3f} ({worst[1][0]}, B={worst[1][1]})"
    if big:
        msg += f"; best large-plan ratio {min(big):.3f}"
    return ok, msg


def cmd_bench(cfg: dict, out: Path) -> list:
    reps = int(cfg["reps"])
    if reps < 1:
        raise UsageError("--reps must be >= 1")
    if reps == 1:
        print("warning: --reps 1 gives noisy timings", file=sys.stderr)
    if cfg.get("base"):
        base = _load(cfg["base"], "velocity")
    else:
        base = VelocityNet(2, 2, seed=cfg["seed"])
    if cfg.get("refiner"):
        refiner = _load(cfg["refiner"], "refiner")
    else:
        refiner = RefinerNet(base.dim, base.num_classes, seed=cfg["seed"] + 1, paired=base)
    y = cfg.get("y") if base.num_classes else None
    rows = bench_rows(base, refiner, cfg["plans"], cfg["batch"], reps, GuidanceSpec(float(cfg["cfg"]), y), cfg["seed"])
    write_csv(out / "bench.csv", ["plan", "B", "interpreted_ms", "compiled_ms", "nfe"], [r[:5] for r in rows])
    ok, msg = bench_verdict(rows)
    print(msg)
    if cfg["assert"] and not ok:
        raise NumericFailure(msg)
    return ["bench.csv"]


COMMANDS = {
    "data": (cmd_data, []),
    "train": (cmd_train, ["base"]),
    "sample": (cmd_sample, ["base", "refiner"]),
    "verify order": (cmd_verify_order, []),
    "verify curvature": (cmd_verify_curvature, ["base"]),
    "verify loss-identity": (cmd_verify_loss_identity, ["base"]),
    "verify sw-distance": (cmd_verify_sw, ["samples", "reference"]),
    "bench": (cmd_bench, ["base", "refiner"]),
}


# -- argument parsing ---------------------------------------------------------


def _add(p, *names, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*names, **kw)


def _common(p):
    _add(p, "--out", help="output directory (default: out)")
    _add(p, "--config", help="JSON file of settings; explicit flags override it")
    _add(p, "--seed", type=int, help="random seed (default: $FLOWTURBO_SEED or 0)")


def _flag(p, name, help):
    _add(p, name, action="store_true", help=help)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flowturbo", description="Flow-matching sampler toolkit on toy data.")
    ap.add_argument("--version", action="version", version=f"flowturbo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("data", help="write a toy dataset as CSV")
    _common(p)
    _add(p, "--kind", choices=KINDS, help="dataset (default: moons)")
    _add(p, "--n", type=int, help="number of samples (default: 4096)")
    _flag(p, "--ppm", "also write a PPM raster")

    p = sub.add_parser("train", help="train a velocity net or a refiner")
    _common(p)
    _add(p, "--mode", choices=["velocity", "refiner"], help="what to train (default: velocity)")
    _add(p, "--data", choices=KINDS, help="dataset (default: moons)")
    _add(p, "--base", help="velocity checkpoint (refiner mode)")
    _add(p, "--steps", type=int, help="optimizer steps (default: 5000)")
    _add(p, "--lr", type=float, help=f"learning rate (default: {_TRAIN.lr})")
    _add(p, "--batch-size", dest="batch_size", type=int, help=f"batch size (default: {_TRAIN.batch_size})")
    _add(p, "--dt-lo", dest="dt_lo", type=float, help="refiner step range lower bound (default: 0.0)")
    _add(p, "--dt-hi", dest="dt_hi", type=float, help="refiner step range upper bound (default: 0.12)")
    _add(p, "--gamma1", type=float, help="condition dropout probability (default: 0.1)")
    _add(p, "--beta1", type=float, help="AdamW beta1")
    _add(p, "--beta2", type=float, help="AdamW beta2")
    _add(p, "--weight-decay", dest="weight_decay", type=float, help="AdamW weight decay (default: 0)")
    _add(p, "--clip", type=float, help="global gradient-norm clip (default: 1.0)")
    _add(p, "--lr-schedule", dest="lr_schedule", choices=["constant", "cosine"], help="learning-rate schedule")
    _add(p, "--hidden", type=_int_list, help="velocity hidden widths, e.g. 192,192")
    _add(p, "--refiner-hidden", dest="refiner_hidden", type=_int_list, help="refiner hidden widths, e.g. 48,48")
    _add(p, "--unconditional", dest="conditional", action="store_false", help="ignore class labels")

    p = sub.add_parser("sample", help="draw samples with a block plan")
    _common(p)
    _add(p, "--plan", help="sample config such as H8 or H2P4R2 (default: H8)")
    _add(p, "--cfg", type=float, help="guidance scale zeta (default: 1.0)")
    _add(p, "--y", type=_opt_int, help="class to sample (default: none, i.e. unconditional)")
    _add(p, "--n", type=int, help="number of samples (default: 1024)")
    _add(p, "--base", help="velocity checkpoint")
    _add(p, "--refiner", help="refiner checkpoint (plans with R blocks)")
    _flag(p, "--compiled", "run the compiled plan instead of the interpreter")
    _flag(p, "--ppm", "also write a PPM raster")

    p = sub.add_parser("verify", help="run a verification harness")
    vs = p.add_subparsers(dest="harness", required=True, metavar="HARNESS")
    q = vs.add_parser("order", help="empirical convergence order on an analytic field")
    _common(q)
    _add(q, "--solver", choices=["euler", "heun", "pseudo"], help="block template (default: pseudo)")
    _add(q, "--field", choices=["constant", "linear-decay", "affine"], help="field (default: linear-decay)")
    _add(q, "--steps", type=_int_list, help="step counts (default: 10,20,40,80)")
    _add(q, "--dim", type=int, help="state dimension (default: 1)")
    _add(q, "--min-slope", dest="min_slope", type=float, help="lower slope bound for --assert")
    _add(q, "--max-slope", dest="max_slope", type=float, help="upper slope bound for --assert")
    _flag(q, "--assert", "exit 3 if the slope is out of bounds")
    q = vs.add_parser("curvature", help="velocity vs epsilon prediction curvature")
    _common(q)
    _add(q, "--base", help="velocity checkpoint (default: an analytic Gaussian model)")
    _add(q, "--plan", help="sample config (default: H20)")
    _add(q, "--n", type=int, help="number of noises (default: 8)")
    _add(q, "--cfg", type=float, help="guidance scale")
    _add(q, "--y", type=_opt_int, help="class (default: none)")
    _flag(q, "--assert", "exit 3 unless velocity curvature is below epsilon curvature")
    q = vs.add_parser("loss-identity", help="flow vs weighted epsilon loss identity")
    _common(q)
    _add(q, "--base", help="velocity checkpoint (default: random nets)")
    _add(q, "--schedule", choices=["linear", "cosine", "both"], help="schedule (default: both)")
    _add(q, "--tuples", type=int, help="random (net, t, batch) tuples (default: 1000)")
    _add(q, "--batch", type=int, help="batch size per tuple (default: 16)")
    _add(q, "--max-t", dest="max_t", type=float, help="largest t drawn (default: 0.95)")
    _add(q, "--tol", type=float, help="tolerance for --assert (default: 1e-5)")
    _flag(q, "--assert", "exit 3 if the residual exceeds --tol")
    q = vs.add_parser("sw-distance", help="sliced Wasserstein distance between sample sets")
    _common(q)
    _add(q, "--samples", help="samples CSV")
    _add(q, "--reference", help="reference CSV (default: fresh draws from --data)")
    _add(q, "--data", choices=KINDS, help="reference dataset (default: moons)")
    _add(q, "--n", type=int, help="reference draws (default: 4096)")
    _add(q, "--k", type=int, help="projections (default: 128)")
    _add(q, "--max-distance", dest="max_distance", type=float, help="bound for --assert")
    _flag(q, "--assert", "exit 3 if the distance exceeds --max-distance")

    p = sub.add_parser("bench", help="time interpreted vs compiled plans")
    _common(p)
    _add(p, "--plans", type=_str_list, help="comma-separated configs (default: H8,H2P4R2,H1P5R3)")
    _add(p, "--batch", type=_int_list, help="batch sizes (default: 64,1024)")
    _add(p, "--reps", type=int, help="repetitions per row (default: 5)")
    _add(p, "--cfg", type=float, help="guidance scale (default: 1.5)")
    _add(p, "--y", type=_opt_int, help="class for guided benchmarks (default: 0)")
    _add(p, "--base", help="velocity checkpoint (default: a fresh net)")
    _add(p, "--refiner", help="refiner checkpoint (default: a fresh refiner)")
    _flag(p, "--assert", "exit 3 if compiled is too slow")

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest", help="manifest.json of an earlier run")
    _add(p, "--out", help="output directory (default: out)")
    return ap


def resolve(command: str, flags: dict) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    cfg["seed"] = default_seed()
    if flags.get("config"):
        try:
            file_cfg = json.loads(Path(flags["config"]).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {flags['config']}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
        cfg.update(file_cfg)
    cfg.update({k: v for k, v in flags.items() if k not in ("config", "out", "command", "harness")})
    return cfg


def execute(command: str, cfg: dict, out: Path) -> None:
    fn, input_keys = COMMANDS[command]
    t0 = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    inputs = _inputs(cfg, input_keys)
    files = fn(cfg, out)
    _write_manifest(out, command, cfg, inputs, files, t0)


def replay(manifest_path: str, out: Path) -> None:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest {manifest_path}: {exc}") from exc
    command = manifest.get("command")
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {command!r}")
    for key, info in manifest.get("inputs", {}).items():
        if not Path(info["path"]).is_file() or sha256_file(info["path"]) != info["sha256"]:
            raise UsageError(f"input {key} ({info['path']}) is missing or changed since the recorded run")
    execute(command, manifest["config"], out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.get("out", "out"))
    try:
        if args["command"] == "replay":
            replay(args["manifest"], out)
            return EXIT_OK
        command = args["command"] if args["command"] != "verify" else f"verify {args['harness']}"
        execute(command, resolve(command, args), out)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, FlowTurboError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
