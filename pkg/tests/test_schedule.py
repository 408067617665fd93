import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowturbo.errors import DimensionError, DomainError, SingularityError
from flowturbo.schedule import (
    LINEAR,
    NoiseSchedule,
    eps_from_velocity,
    psi,
    target_velocity,
    zeta_weight,
)

COSINE = NoiseSchedule.cosine()


def test_psi_boundaries_and_midpoint():
    assert np.array_equal(psi([[1.0, 2.0]], [[0.0, 0.0]], 0.0), [[1.0, 2.0]])
    assert np.array_equal(psi([[1.0, 2.0]], [[3.0, 4.0]], 1.0), [[3.0, 4.0]])
    assert np.array_equal(psi([[2.0]], [[4.0]], 0.5), [[3.0]])


def test_psi_errors():
    with pytest.raises(DimensionError):
        psi(np.zeros((2, 2)), np.zeros((2, 3)), 0.5)
    with pytest.raises(DomainError):
        psi(np.zeros((1, 2)), np.zeros((1, 2)), 1.5)
    with pytest.raises(DomainError):
        target_velocity(np.zeros((1, 2)), np.zeros((1, 2)), -0.1)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
def test_linear_target_velocity_is_eps_minus_x0(t):
    assert np.array_equal(target_velocity([[1.0]], [[3.0]], t), [[2.0]])
    x = np.array([[0.7, -1.2]])
    assert np.array_equal(target_velocity(x, x, t), np.zeros_like(x))


def test_cosine_target_velocity_at_zero():
    assert target_velocity([[1.0]], [[0.0]], 0.0, COSINE)[0, 0] == pytest.approx(0.0, abs=1e-15)
    # finite difference of psi, one-sided at the boundary
    h = 1e-6
    fd = (psi([[1.0]], [[0.0]], h, COSINE) - psi([[1.0]], [[0.0]], 0.0, COSINE)) / h
    assert abs(fd[0, 0]) < 1e-5


@pytest.mark.parametrize("schedule", [LINEAR, COSINE], ids=["linear", "cosine"])
def test_target_velocity_matches_central_difference(schedule, rng):
    x0 = rng.normal(size=(4, 3))
    eps = rng.normal(size=(4, 3))
    h = 1e-5
    for t in np.linspace(0.01, 0.99, 50):
        fd = (psi(x0, eps, t + h, schedule) - psi(x0, eps, t - h, schedule)) / (2 * h)
        exact = target_velocity(x0, eps, t, schedule)
        rel = np.abs(fd - exact) / np.maximum(np.abs(exact), 1e-3)
        assert rel.max() < 1e-6


def test_linear_velocity_constant_in_t(rng):
    x0, eps = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    ref = target_velocity(x0, eps, 0.0)
    for t in np.linspace(0, 1, 101):
        assert np.abs(target_velocity(x0, eps, t) - ref).max() < 1e-12


@pytest.mark.parametrize("t,expected", [(0.0, 1.0), (0.5, 2.0), (0.9, 10.0)])
def test_zeta_linear(t, expected):
    assert zeta_weight(t) == pytest.approx(expected, rel=1e-12)


def test_zeta_singular_at_one():
    with pytest.raises(SingularityError):
        zeta_weight(1.0)
    with pytest.raises(SingularityError):
        zeta_weight(1.0, COSINE)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_zeta_positive_for_decreasing_snr(t):
    assert zeta_weight(t) > 0
    assert zeta_weight(t, COSINE) > 0


def test_general_vp_rejects_bad_boundaries():
    with pytest.raises(DomainError):
        NoiseSchedule.general_vp(lambda t: 1.0, lambda t: t, lambda t: 0.0, lambda t: 1.0)


@pytest.mark.parametrize("schedule", [LINEAR, COSINE], ids=["linear", "cosine"])
def test_eps_conversion_inverts_true_velocity(schedule, rng):
    # with v = d/dt psi exactly, converting back must recover the true noise
    x0, eps = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    for t in (0.1, 0.5, 0.9):
        xt = psi(x0, eps, t, schedule)
        v = target_velocity(x0, eps, t, schedule)
        assert np.allclose(eps_from_velocity(xt, v, t, schedule), eps, atol=1e-12)


def test_eps_conversion_general_singular_at_one():
    with pytest.raises(SingularityError):
        eps_from_velocity(np.zeros((1, 2)), np.zeros((1, 2)), 1.0, COSINE)
    # the linear closed form is finite there
    assert np.array_equal(eps_from_velocity([[1.0, 2.0]], [[5.0, 5.0]], 1.0), [[1.0, 2.0]])


def test_cosine_coefficients():
    a, s = COSINE.coefficients(0.5)
    assert a == pytest.approx(math.sqrt(0.5)) and s == pytest.approx(math.sqrt(0.5))
