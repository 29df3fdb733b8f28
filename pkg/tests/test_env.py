import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexist.env import (ATOMS, EnvPath, Family, env_moment_report, make_discrete_env, make_env,
                         make_gaussian_env, p_from_x, sample_env_path, sample_steps, x_from_p)
from coexist.errors import DomainError, PreconditionError
from coexist.streams import Stream


@pytest.mark.parametrize("rho", [-1.0001, 1.5, float("nan")])
def test_rho_outside_unit_interval_rejected(rho):
    with pytest.raises(DomainError):
        make_gaussian_env(rho)


def test_boundary_rho_is_accepted_and_flagged():
    assert make_gaussian_env(1.0).degenerate
    assert make_discrete_env(-1.0).degenerate
    assert not make_gaussian_env(0.3).degenerate


@pytest.mark.parametrize("rho", [-1.0, -0.5, 0.0, 0.5, 1.0])
def test_atom_probabilities(rho):
    q = make_discrete_env(rho).atom_probabilities()
    assert q.sum() == pytest.approx(1.0)
    # E[X1 X2] over the atoms equals rho, and each coordinate is a fair sign
    assert np.dot(q, ATOMS[:, 0] * ATOMS[:, 1]) == pytest.approx(rho)
    assert np.dot(q, ATOMS[:, 0]) == pytest.approx(0.0)


def test_atom_probabilities_only_for_discrete():
    with pytest.raises(PreconditionError):
        make_gaussian_env(0.0).atom_probabilities()


def test_make_env_accepts_strings():
    assert make_env("discrete", 0.2).family is Family.DISCRETE_FOUR_POINT
    with pytest.raises(ValueError):
        make_env("cauchy", 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-30, max_value=30))
def test_p_and_x_are_inverse(x):
    p = p_from_x(x)
    assert 0.0 < p < 1.0
    # rounding p costs about eps * (1 + e^|x|) in x, which no inverse can recover
    assert x_from_p(p) == pytest.approx(x, abs=4e-16 * (1 + math.exp(abs(x))))


def test_p_from_x_values():
    assert p_from_x(0.0) == 0.5
    assert p_from_x(math.log(3.0)) == pytest.approx(0.25)


def test_sample_steps_shape_and_determinism():
    spec = make_gaussian_env(0.4)
    a = sample_steps(spec, (3, 5), Stream(1, "t").generator())
    b = sample_steps(spec, (3, 5), Stream(1, "t").generator())
    assert a.shape == (3, 5, 2)
    np.testing.assert_array_equal(a, b)


def test_discrete_steps_are_atoms():
    x = sample_steps(make_discrete_env(0.3), 10_000, np.random.default_rng(0))
    assert set(map(tuple, x)) <= set(map(tuple, ATOMS))


def test_rho_one_gives_identical_coordinates():
    x = sample_steps(make_gaussian_env(1.0), 1000, np.random.default_rng(0))
    np.testing.assert_array_equal(x[:, 0], x[:, 1])
    y = sample_steps(make_gaussian_env(-1.0), 1000, np.random.default_rng(0))
    np.testing.assert_array_equal(y[:, 0], -y[:, 1])


def test_env_path():
    spec = make_gaussian_env(0.0)
    path = sample_env_path(spec, 7, 3)
    assert len(path) == 7 and path.x.shape == (7, 2)
    assert path.provenance["seed"] == 3
    np.testing.assert_allclose(path.p, 1.0 / (1.0 + np.exp(path.x)))
    with pytest.raises(PreconditionError):
        sample_env_path(spec, 0, 3)
    assert EnvPath.from_steps(spec, [[0.0, 1.0]]).x.shape == (1, 2)


@pytest.mark.parametrize("family,rho", [("gaussian", 0.0), ("gaussian", -0.7), ("discrete", 0.5)])
def test_moment_report_matches_targets(family, rho):
    rep = env_moment_report(make_env(family, rho), 200_000, 11)
    assert rep.ok, rep.flagged
    assert abs(rep.corr - rho) < 4 * rep.corr_se + 1e-12


def test_moment_report_rho_one_is_exact():
    rep = env_moment_report(make_gaussian_env(1.0), 10_000, 0)
    assert rep.corr == 1.0


def test_moment_report_needs_draws():
    with pytest.raises(PreconditionError):
        env_moment_report(make_gaussian_env(0.0), 999, 0)
