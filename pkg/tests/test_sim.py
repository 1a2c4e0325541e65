import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from regulab.errors import DivergenceError
from regulab.model import Exosystem, LtiPlant
from regulab.sim import (
    Dataset,
    ExcitationSpec,
    collect_offline,
    excitation,
    midpoint_values,
    random_initial_state,
    rk4_autonomous,
    rk4_forced,
    rk4_integrate,
    rk4_linear_coefficients,
    simulate_exosystem,
    time_grid,
)


def test_rk4_exponential_decay():
    _, X = rk4_integrate(lambda t, x: -x, [1.0], 0.0, 1.0, 1e-3)
    assert abs(X[-1, 0] - math.exp(-1.0)) < 1e-10


def test_rk4_zero_field_is_constant():
    _, X = rk4_integrate(lambda t, x: np.zeros_like(x), [1.5, -2.0], 0.0, 3.0, 0.01)
    assert_array_equal(X, np.tile([1.5, -2.0], (X.shape[0], 1)))


def test_rk4_decaying_modes():
    lam = np.array([-1.0, -2.0, -3.0])
    _, X = rk4_integrate(lambda t, x: lam * x, np.ones(3), 0.0, 1.0, 1e-3)
    assert_allclose(X[-1], np.exp(lam), atol=1e-8)


def test_rk4_shortened_last_step():
    times, X = rk4_integrate(lambda t, x: -x, [1.0], 0.0, 1.05, 0.1)
    assert times[-1] == 1.05
    assert abs(X[-1, 0] - math.exp(-1.05)) < 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_rk4_divergence_raises():
    with pytest.raises(DivergenceError) as info:
        rk4_integrate(lambda t, x: x**2, [1.0], 0.0, 2.0, 0.01)
    assert 0.9 < info.value.t <= 2.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rk4_fourth_order(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(4, 4)) - 1.5 * np.eye(4)
    x0 = rng.normal(size=4)
    exact = scipy.linalg.expm(M * 2.0) @ x0
    errs = []
    for h in (0.04, 0.02):
        _, X = rk4_integrate(lambda t, x: M @ x, x0, 0.0, 2.0, h)
        errs.append(np.linalg.norm(X[-1] - exact))
    assert errs[0] / errs[1] >= 12


def test_linear_coefficients_match_stagewise():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(3, 3))
    b = rng.normal(size=3)
    h = 0.05
    P, g0, gm, g1 = rk4_linear_coefficients(M, b, h)
    x = rng.normal(size=3)
    s = lambda t: math.sin(3 * t)
    f = lambda t, y: M @ y + b * s(t)
    _, X = rk4_integrate(f, x, 0.0, h, h)
    mapped = P @ x + (g0[:, 0] * s(0) + gm[:, 0] * s(h / 2) + g1[:, 0] * s(h))
    assert_allclose(mapped, X[-1], rtol=1e-13, atol=1e-14)


def test_midpoint_values_polynomial_exact():
    # five-degree polynomial is reproduced exactly by the six-point stencil
    t = np.linspace(0.0, 1.0, 30)
    p = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5, -0.7, 1.1])
    mid = midpoint_values(p(t))
    assert_allclose(mid, p((t[:-1] + t[1:]) / 2), atol=1e-12)


def test_rk4_forced_matches_convolution():
    lam = np.array([-1.0, -2.0])
    L = np.array([1.0, 2.0])
    dt = 1e-3
    t = dt * np.arange(5001)
    s = np.sin(2 * t)
    X = rk4_forced(np.diag(lam), L, np.zeros(2), s, dt)
    # closed form of x' = lam x + L sin(2t), x(0) = 0
    w = 2.0
    exact = L * (w * np.exp(np.outer(t, lam)) - np.outer(np.sin(w * t), lam) - w * np.cos(w * t)[:, None]) / (
        lam**2 + w**2
    )
    assert_allclose(X, exact, atol=1e-10)


def test_autonomous_matches_expm():
    M = np.array([[0.0, 1.0], [-4.0, -0.2]])
    X = rk4_autonomous(M, [1.0, 0.0], 1e-3, 2000)
    assert_allclose(X[-1], scipy.linalg.expm(2.0 * M) @ [1.0, 0.0], atol=1e-10)


def test_time_grid_validation():
    assert_allclose(time_grid(0.0, 1.0, 0.25), [0.0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        time_grid(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        time_grid(1.0, 1.0, 0.1)


def test_excitation_values():
    spec = ExcitationSpec()
    assert excitation(spec, 0.0) == 0.0
    assert abs(excitation(ExcitationSpec((1.0,), math.pi), 0.5) - 1.0) < 1e-15
    expected = sum(k * math.sin(0.5 * k) for k in range(1, 5))
    assert abs(excitation(spec, 0.1) - expected) < 1e-14


def test_excitation_vectorized():
    t = np.linspace(0, 1, 7)
    spec = ExcitationSpec()
    assert_allclose(excitation(spec, t), [excitation(spec, ti) for ti in t], rtol=0, atol=0)


def test_collect_frozen_dynamics():
    plant = LtiPlant(np.zeros((3, 3)), np.zeros(3), [1.0, 0.0, 0.0])
    ds = collect_offline(plant, [0.7, 0.1, -0.2], ExcitationSpec(), 1.0, 1e-2)
    assert_allclose(ds.y, 0.7, rtol=0, atol=0)
    assert_allclose(ds.u, excitation(ExcitationSpec(), ds.t), atol=1e-15)


def test_collect_linear_growth():
    plant = LtiPlant(np.zeros((3, 3)), [1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    ds = collect_offline(plant, [0.25, 0.0, 0.0], ExcitationSpec((0.0,), 1.0), 2.0, 1e-3)
    # u = 0 here; a constant input is checked through the ODE directly
    assert_allclose(ds.y, 0.25, atol=1e-15)
    times, X = rk4_integrate(lambda t, x: plant.A @ x + plant.B * 1.0, [0.25, 0, 0], 0.0, 2.0, 1e-3)
    assert_allclose(X[:, 0], 0.25 + times, atol=1e-9)


def test_benchmark_dataset_decimates_to_101(bench_data):
    idx = bench_data.sample_indices(0.1)
    assert idx.size == 101
    assert_allclose(bench_data.t[idx], 0.1 * np.arange(101), atol=1e-12)


def test_collect_is_deterministic(bench):
    plant = bench[0]
    x0 = random_initial_state(3, 42)
    a = collect_offline(plant, x0, ExcitationSpec(), 1.0)
    b = collect_offline(plant, random_initial_state(3, 42), ExcitationSpec(), 1.0)
    assert_array_equal(a.y, b.y)
    assert_array_equal(a.u, b.u)


def test_random_initial_state_range():
    x = random_initial_state(1000, 7)
    assert x.min() >= -1 and x.max() <= 1 and x.shape == (1000,)


def test_exosystem_rotation(bench):
    exo = bench[1]
    times, W, yr = simulate_exosystem(exo, 1.0, 1e-3)
    c, s = math.cos(2.0), math.sin(2.0)
    assert_allclose(W[-1], [c - s, s + c], atol=1e-8)
    assert_allclose(yr, W @ exo.C_r)


def test_exosystem_constant():
    exo = Exosystem(np.zeros((2, 2)), [1.0, 0.0], [0.3, -0.4])
    _, W, _ = simulate_exosystem(exo, 2.0)
    assert_array_equal(W, np.tile([0.3, -0.4], (W.shape[0], 1)))


def test_exosystem_norm_conserved(bench):
    _, W, _ = simulate_exosystem(bench[1], 10.0)
    assert np.abs(np.linalg.norm(W, axis=1) - math.sqrt(2)).max() < 1e-6


def test_dataset_csv_round_trip(tmp_path, bench_data):
    small = bench_data.head(500)
    path = tmp_path / "dataset.csv"
    small.to_csv(path)
    back = Dataset.from_csv(path)
    assert_array_equal(back.u, small.u)
    assert_array_equal(back.y, small.y)
    assert back.dt == pytest.approx(small.dt, rel=1e-12)
    assert path.read_text().splitlines()[0] == "t,u,y"


def test_dataset_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        Dataset(0.0, 0.1, [1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        Dataset(0.0, -0.1, [1.0, 2.0], [1.0, 2.0])
    bad = tmp_path / "bad.csv"
    bad.write_text("t,u,y\n0,1,2\n0.1,1,2\n0.3,1,2\n")
    with pytest.raises(ValueError):
        Dataset.from_csv(bad)
    with pytest.raises(ValueError):
        Dataset(0.0, 0.1, np.zeros(10), np.zeros(10)).sample_indices(0.15)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(-3.0, -0.1))
def test_rk4_bit_identical_reruns(h, a):
    first = rk4_integrate(lambda t, x: a * x + math.sin(t), [1.0], 0.0, 1.0, h)[1]
    second = rk4_integrate(lambda t, x: a * x + math.sin(t), [1.0], 0.0, 1.0, h)[1]
    assert_array_equal(first, second)
