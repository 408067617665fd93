import json
import subprocess
import sys

import pytest

from flowturbo.cli import bench_verdict, main, resolve


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("nets")
    assert run("train", "--out", root / "v", "--steps", 30, "--hidden", "32,32", "--seed", 7) == 0
    assert run("train", "--mode", "refiner", "--base", root / "v" / "velocity.ftrb", "--out", root / "r",
               "--steps", 30, "--refiner-hidden", "4") == 0
    return root / "v" / "velocity.ftrb", root / "r" / "refiner.ftrb"


def test_data_command_and_ppm(tmp_path):
    assert run("data", "--kind", "gmm", "--n", 50, "--ppm", "--out", tmp_path) == 0
    lines = (tmp_path / "data.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,label" and len(lines) == 51
    ppm = (tmp_path / "data.ppm").read_bytes()
    assert ppm.startswith(b"P6\n")
    w, h = map(int, ppm.split(b"\n")[1].split())
    assert len(ppm) >= 3 * w * h


def test_train_is_byte_deterministic(tmp_path, trained):
    v, _ = trained
    assert run("train", "--out", tmp_path, "--steps", 30, "--hidden", "32,32", "--seed", 7) == 0
    assert (tmp_path / "velocity.ftrb").read_bytes() == v.read_bytes()


def test_sample_outputs_and_replay(tmp_path, trained):
    v, r = trained
    a = tmp_path / "a"
    assert run("sample", "--base", v, "--refiner", r, "--plan", "H2P2R2", "--n", 64, "--cfg", 2.0,
               "--y", 1, "--out", a) == 0
    nfe = json.loads((a / "nfe.json").read_text())
    assert (nfe["base_evals"], nfe["refiner_evals"]) == (12, 4)
    man = json.loads((a / "manifest.json").read_text())
    assert set(man["inputs"]) == {"base", "refiner"}
    assert man["outputs"]["samples.csv"]
    b = tmp_path / "b"
    assert run("replay", a / "manifest.json", "--out", b) == 0
    for name in ("samples.csv", "nfe.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_compiled_flag_matches_interpreter(tmp_path, trained):
    v, r = trained
    run("sample", "--base", v, "--refiner", r, "--plan", "H2P3R1", "--n", 40, "--cfg", 1.5, "--y", 0,
        "--out", tmp_path / "i")
    run("sample", "--base", v, "--refiner", r, "--plan", "H2P3R1", "--n", 40, "--cfg", 1.5, "--y", 0,
        "--compiled", "--out", tmp_path / "c")
    assert (tmp_path / "i" / "samples.csv").read_bytes() == (tmp_path / "c" / "samples.csv").read_bytes()


def test_replay_rejects_changed_input(tmp_path, trained):
    v, _ = trained
    copy = tmp_path / "v.ftrb"
    copy.write_bytes(v.read_bytes())
    assert run("sample", "--base", copy, "--n", 4, "--out", tmp_path / "s") == 0
    copy.write_bytes(copy.read_bytes() + b"x")
    assert run("replay", tmp_path / "s" / "manifest.json", "--out", tmp_path / "t") == 2


@pytest.mark.parametrize("argv", [
    ["sample", "--plan", "P3"],
    ["sample", "--plan", "H2X"],
    ["sample"],
    ["train", "--steps", "abc"],
    ["train", "--dt-hi", "0.5"],
    ["train", "--mode", "refiner"],
    ["verify", "order", "--steps", "10,20"],
    ["nope"],
])
def test_usage_errors_exit_2(argv, tmp_path, trained):
    if argv[0] == "sample" and len(argv) > 1:
        argv = argv + ["--base", str(trained[0])]
    assert run(*argv, *(["--out", tmp_path] if argv[0] != "nope" else [])) == 2


def test_failed_assert_exits_3(tmp_path):
    assert run("verify", "order", "--solver", "euler", "--min-slope", 1.8, "--assert", "--out", tmp_path) == 3
    assert json.loads((tmp_path / "order.json").read_text())["passed"] is False


def test_verify_order_passes(tmp_path):
    assert run("verify", "order", "--solver", "pseudo", "--min-slope", 1.8, "--max-slope", 2.2,
               "--assert", "--out", tmp_path) == 0
    assert (tmp_path / "order.csv").read_text().startswith("h,error")


def test_verify_loss_identity_and_sw(tmp_path, trained):
    assert run("verify", "loss-identity", "--tuples", 20, "--assert", "--out", tmp_path / "l") == 0
    v, _ = trained
    run("sample", "--base", v, "--n", 64, "--out", tmp_path / "s")
    assert run("verify", "sw-distance", "--samples", tmp_path / "s" / "samples.csv", "--n", 256,
               "--out", tmp_path / "w") == 0
    rep = json.loads((tmp_path / "w" / "sw_distance.json").read_text())
    assert rep["n"] == 64 and rep["m"] == 256


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 10, "kind": "gmm"}))
    monkeypatch.setenv("FLOWTURBO_SEED", "5")
    r = resolve("data", {"config": str(cfg), "n": 20})
    assert (r["n"], r["kind"], r["seed"]) == (20, "gmm", 5)
    assert resolve("data", {"seed": 9})["seed"] == 9


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run("data", "--config", cfg, "--out", tmp_path) == 2


def test_bench_writes_csv(tmp_path, capsys):
    assert run("bench", "--plans", "H2", "--batch", 8, "--reps", 1, "--out", tmp_path) == 0
    assert "--reps 1" in capsys.readouterr().err
    assert (tmp_path / "bench.csv").read_text().splitlines()[0] == "plan,B,interpreted_ms,compiled_ms,nfe"


def test_bench_verdict():
    fast = [("H8", 1024, 10.0, 8.0, 16, 8), ("H2", 64, 1.0, 1.0, 4, 2)]
    assert bench_verdict(fast)[0]
    assert not bench_verdict([("H8", 1024, 10.0, 11.0, 16, 8)])[0]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "flowturbo", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("flowturbo ")
