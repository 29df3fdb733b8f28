import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexist.branching import (PopulationState, QuenchedAccumulator, annealed_curve,
                               coexistence_functional, forward_survival_frequencies,
                               quenched_survival, sample_offspring_total, sample_offspring_totals,
                               simulate_forward)
from coexist.env import make_discrete_env, make_gaussian_env, sample_env_path
from coexist.errors import DomainError, PreconditionError
from coexist.estimators import brute_force_coexistence
from coexist.walk import walk_from_env

mpmath.mp.dps = 50


def _survival_mp(log_a, z):
    a = mpmath.exp(mpmath.mpf(log_a))
    return 1 - (a / (1 + a)) ** z


@pytest.mark.parametrize("log_a", [-700.0, -50.0, -5.0, 0.0, 3.0, 40.0, 700.0])
@pytest.mark.parametrize("z", [1, 3, 1000])
def test_quenched_survival_against_high_precision(log_a, z):
    got = quenched_survival(log_a, z)
    want = float(_survival_mp(log_a, z))
    assert got == pytest.approx(want, rel=1e-12, abs=1e-300)


def test_quenched_survival_special_values():
    assert quenched_survival(-np.inf, 1) == 1.0  # empty sum: nobody can die yet
    assert quenched_survival(0.0, 1) == 0.5
    assert quenched_survival(1.0, 0) == 0.0
    with pytest.raises(PreconditionError):
        quenched_survival(0.0, -1)


def test_one_generation_equals_one_minus_p():
    # with one generation the survival probability of one individual is 1 - p
    for x in (-2.0, 0.0, 1.3):
        acc = QuenchedAccumulator().push([x, x])
        p = 1.0 / (1.0 + math.exp(x))
        np.testing.assert_allclose(acc.survival((1, 1)), [1 - p, 1 - p])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_accumulator_streaming_matches_batch(seed, n):
    env = sample_env_path(make_gaussian_env(0.3), n, seed)
    walk = walk_from_env(env)
    a = QuenchedAccumulator().extend(env.x)
    b = QuenchedAccumulator.from_walk(walk)
    np.testing.assert_allclose(a.log_a, b.log_a, rtol=1e-12)
    direct = np.log(np.exp(-walk.S[1:]).sum(axis=0))
    np.testing.assert_allclose(a.log_a, direct, rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_coexistence_functional_non_increasing(seed):
    walk = walk_from_env(sample_env_path(make_gaussian_env(-0.2), 64, seed))
    y = coexistence_functional(walk, (2, 1), np.arange(1, 65))
    assert np.all(np.diff(y) <= 1e-15)
    assert np.all((0 <= y) & (y <= 1))


def test_coexistence_functional_matches_accumulator():
    env = sample_env_path(make_gaussian_env(0.0), 20, 4)
    walk = walk_from_env(env)
    acc = QuenchedAccumulator().extend(env.x[:13])
    want = np.prod(acc.survival((1, 3)))
    assert coexistence_functional(walk, (1, 3), [13])[0] == pytest.approx(want, rel=1e-12)
    with pytest.raises(PreconditionError):
        coexistence_functional(walk, (1, 1), [21])


def test_population_state_validation():
    assert PopulationState((2, 0)).z == (2, 0)
    with pytest.raises(PreconditionError):
        PopulationState((-1, 1))


@pytest.mark.parametrize("z,p", [(1, 0.3), (5, 0.5), (64, 0.45), (500, 0.5), (10_000, 0.52)])
def test_offspring_totals_moments(z, p):
    rng = np.random.default_rng(z)
    draw = sample_offspring_totals(np.full(200_000, z), p, rng)
    mean = z * (1 - p) / p
    var = z * (1 - p) / p**2
    assert abs(draw.totals.mean() - mean) < 5 * math.sqrt(var / 200_000)
    assert draw.totals.var() == pytest.approx(var, rel=0.03)
    assert np.all(draw.totals == np.rint(draw.totals))
    assert not draw.limit.any() and not draw.saturated.any()


def test_offspring_single_geometric_law():
    draw = sample_offspring_totals(np.ones(400_000, dtype=np.int64), 0.4, np.random.default_rng(1))
    assert (draw.totals == 0).mean() == pytest.approx(0.4, abs=0.005)


def test_offspring_huge_population_uses_limit():
    draw = sample_offspring_totals(np.array([1e30]), 0.5, np.random.default_rng(0))
    assert draw.limit[0] and not draw.saturated[0]
    assert draw.totals[0] == pytest.approx(1e30, rel=1e-10)


def test_offspring_domain():
    with pytest.raises(DomainError):
        sample_offspring_totals(np.array([1]), 0.0, np.random.default_rng(0))
    with pytest.raises(PreconditionError):
        sample_offspring_totals(np.array([-1]), 0.5, np.random.default_rng(0))
    assert sample_offspring_total(0, 0.5, 1) == 0


def test_simulate_forward_absorbs_at_zero():
    env = sample_env_path(make_gaussian_env(0.0), 30, 2)
    traj = simulate_forward((2, 2), env, 5)
    assert traj.Z.shape == (31, 2)
    for i in range(2):
        dead = np.flatnonzero(traj.Z[:, i] == 0)
        if dead.size:
            assert np.all(traj.Z[dead[0]:, i] == 0)


def test_forward_frequencies_match_quenched_formula():
    env = sample_env_path(make_gaussian_env(0.5), 12, 8)
    res = forward_survival_frequencies((1, 2), env, 50_000, 1)
    assert np.all(np.abs(res["frequency"] - res["exact"]) <= 4 * res["frequency_se"])


@pytest.mark.parametrize("rho", [-0.5, 0.0, 1.0])
def test_annealed_curve_matches_enumeration(rho):
    spec = make_discrete_env(rho)
    curve = annealed_curve(spec, (2, 1), [1, 2, 3, 4], 100_000, 3)
    exact = np.array([brute_force_coexistence(spec, (2, 1), k) for k in range(1, 5)])
    assert np.all(np.abs(curve.estimate - exact) <= 4 * curve.stderr)


def test_annealed_single_modes_and_validation():
    spec = make_gaussian_env(0.0)
    c = annealed_curve(spec, (1, 1), [8, 32], 5000, 1)
    s1 = annealed_curve(spec, (1, 1), [8, 32], 5000, 1, mode="single_1")
    assert np.all(c.estimate <= s1.estimate)
    with pytest.raises(DomainError):
        annealed_curve(make_gaussian_env(-1.0), (1, 1), [8], 10, 0)
    with pytest.raises(PreconditionError):
        annealed_curve(spec, (1, 1), [8], 10, 0, mode="both")
    with pytest.raises(PreconditionError):
        annealed_curve(spec, (1, 1), [8, 8], 10, 0)


def test_annealed_curve_worker_invariance():
    spec = make_gaussian_env(0.2)
    a = annealed_curve(spec, (1, 1), [16, 64], 5000, 4, workers=1)
    b = annealed_curve(spec, (1, 1), [16, 64], 5000, 4, workers=4)
    np.testing.assert_array_equal(a.estimate, b.estimate)
    np.testing.assert_array_equal(a.stderr, b.stderr)
