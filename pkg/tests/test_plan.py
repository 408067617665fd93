import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowturbo.errors import PlanParseError, PlanValidationError
from flowturbo.net import RefinerNet, VelocityNet
from flowturbo.plan import ROW_TILE, SamplePlan, compile_plan, execute_compiled, parse_config
from flowturbo.sampling import GuidanceSpec, run_plan


def letters(plan):
    return "".join(b.value for b in plan.blocks)


@pytest.mark.parametrize("text,expect", [
    ("H2P4R2", "HHPPPPRR"),
    ("H8", "HHHHHHHH"),
    ("E1H1P1R1", "EHPR"),
    ("H,H,P,P,P,P,R,R", "HHPPPPRR"),
    ("H2, P4 ,R2", "HHPPPPRR"),
    ("H1P10", "H" + "P" * 10),
    ("  H3  ", "HHH"),
])
def test_parse_examples(text, expect):
    assert letters(parse_config(text)) == expect


@pytest.mark.parametrize("text,offset", [
    ("H2X1", 2),
    ("H", 1),
    ("H2P", 3),
    ("h2", 0),
    ("H2P-1", 3),
    ("  H2Z", 4),
    ("H2,,P1", 3),
    ("H2,Q1", 3),
])
def test_parse_errors_carry_offsets(text, offset):
    with pytest.raises(PlanParseError) as info:
        parse_config(text)
    assert info.value.offset == offset


@pytest.mark.parametrize("text", ["", "   ", "P2H1", "R1", "H0"])
def test_invalid_plans(text):
    with pytest.raises(PlanValidationError):
        parse_config(text)


def test_cache_block_first_names_index():
    with pytest.raises(PlanValidationError) as info:
        parse_config("P1H2")
    assert info.value.index == 0


def test_bad_grid():
    with pytest.raises(PlanValidationError):
        SamplePlan("HH", [0.0, 0.6, 0.5]).validate()
    with pytest.raises(PlanValidationError):
        SamplePlan("HH", [0.0, 1.0]).validate()


plans = st.tuples(st.sampled_from("HE"), st.text("HPRE", max_size=12)).map(lambda t: t[0] + t[1])


@settings(max_examples=100, deadline=None)
@given(seq=plans)
def test_config_round_trip(seq):
    p = SamplePlan(seq, None)
    assert letters(parse_config(p.to_config())) == seq
    if len(seq) > 1:
        assert letters(parse_config(",".join(seq))) == seq


def test_instruction_listing_for_h1p6r3():
    cp = compile_plan("H1P6R3")
    ops = [i.op for i in cp.instructions]
    assert ops == ["load_noise", "heun"] + ["pseudo"] * 6 + ["refine"] * 3 + ["store"]
    assert len(cp.blocks) == 10
    b = cp.blocks[4]
    assert (b.s0, b.s1) == pytest.approx((0.4, 0.5))
    assert b.half_dt == pytest.approx(0.05)
    nfe = parse_config("H1P6R3").expected_nfe()
    assert (nfe.base_evals, nfe.refiner_evals) == (8, 3)


def test_json_dump_is_deterministic():
    a = compile_plan("H2P4R2", GuidanceSpec(2.0, 1)).to_json()
    b = compile_plan(parse_config("H,H,P,P,P,P,R,R"), GuidanceSpec(2.0, 1)).to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["fused"] is True and doc["source"] == "H2P4R2"
    assert doc["instructions"][1]["op"] == "heun"


@pytest.mark.parametrize("spec,fused", [
    (GuidanceSpec(), False),
    (GuidanceSpec(1.0, 2), False),
    (GuidanceSpec(0.0, 2), False),
    (GuidanceSpec(3.0, 2), True),
])
def test_fusion_flag(spec, fused):
    assert compile_plan("H2", spec).fused is fused


def test_buffer_layout():
    cp = compile_plan("H2R1", GuidanceSpec(2.0, 0))
    lay = cp.buffer_layout(1000, 2, (64, 64), (16,))
    assert lay["base_input"] == [2000, 2]
    assert lay["base_hidden"] == [[ROW_TILE, 64], [ROW_TILE, 64]]
    assert lay["refiner_input"] == [2000, 4]
    assert "refiner_input" not in compile_plan("H2").buffer_layout(8, 2)


@pytest.fixture(scope="module")
def nets():
    base = VelocityNet(2, 3, hidden=(24, 24), seed=5)
    ref = RefinerNet(2, 3, hidden=(8, 8), seed=6)
    ref.layers[-1][0][...] = 0.1 * np.random.default_rng(1).standard_normal(ref.layers[-1][0].shape)
    return base, ref


def test_random_plans_compiled_equals_interpreted(nets):
    base, ref = nets
    rng = np.random.default_rng(2024)
    for trial in range(50):
        n = int(rng.integers(1, 10))
        seq = rng.choice(list("HE")) + "".join(rng.choice(list("HPRE"), size=n - 1))
        B = int(rng.choice([1, 3, 64, 200]))
        scale = float(rng.choice([0.0, 1.0, 1.5, 4.0]))
        y = None if trial % 5 == 0 else rng.integers(0, 3, size=B)
        spec = GuidanceSpec(scale, y)
        noise = rng.standard_normal((B, 2))
        a, ca = run_plan(SamplePlan(seq, None), base, ref, noise, spec)
        b, cb, _ = execute_compiled(compile_plan(SamplePlan(seq, None), spec), base, ref, noise)
        assert np.array_equal(a, b), (seq, B, scale)
        assert (ca.base_evals, ca.refiner_evals) == (cb.base_evals, cb.refiner_evals)


def test_fused_dispatch_halves_calls(nets):
    base, ref = nets
    spec = GuidanceSpec(2.5, 1)
    _, c, _ = execute_compiled(compile_plan("H2P1R2", spec), base, ref, np.zeros((4, 2)))
    assert (c.base_evals, c.base_calls) == (10, 5)
    assert (c.refiner_evals, c.refiner_calls) == (4, 2)


def test_compiled_checks_shapes(nets):
    base, _ = nets
    with pytest.raises(PlanValidationError):
        execute_compiled(compile_plan("H2"), base, None, np.zeros((2, 5)))
    with pytest.raises(PlanValidationError):
        execute_compiled(compile_plan("H1R1"), base, None, np.zeros((2, 2)))
