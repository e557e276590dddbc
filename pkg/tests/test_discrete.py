import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtraj.discrete import (
    ChainKernel,
    choose_outcome,
    discrete_generator,
    dual_route_numerators,
    empirical_law,
    martingale_residuals,
    moment_constants,
    record_steps,
    renormalize,
    sample_ensemble,
    sample_path,
    transition,
)
from qtraj.errors import ValidationError
from qtraj.generators import TestFunction, evaluate_limit_generator
from qtraj.interaction import UnitaryFamily, build_from_coefficients
from qtraj.limits import LimitMaps
from qtraj.linalg import SIGMA_X, SIGMA_Z, BlockOperator, identity_block, partial_trace_h0, random_state
from qtraj.models import amplitude_damping_coefficients, counting_observable, excited
from qtraj.observable import SpectralObservable

from _support import random_coefficients, random_observable, random_unitary

seeds = st.integers(0, 2**32 - 1)
AD = amplitude_damping_coefficients()
AD_FAMILY = build_from_coefficients(AD)
COUNT = counting_observable()
TRACE = TestFunction.linear(np.eye(2), "trace")


def test_single_projector_branch_is_the_reduced_evolution(state):
    obs = SpectralObservable.trivial(2)
    u = AD_FAMILY(10)
    (step,) = transition(state, u, obs)
    assert step.probability == pytest.approx(1.0)
    beta = np.diag([1.0, 0.0])
    joint = u.matrix @ np.kron(beta, state) @ u.matrix.conj().T
    assert np.allclose(step.post_state.matrix, partial_trace_h0(BlockOperator(joint, 2)))


def test_no_interaction_keeps_the_state(state):
    steps = transition(state, identity_block(2, 2), COUNT)
    assert steps[0].probability == pytest.approx(1.0)
    assert np.allclose(steps[0].post_state.matrix, state)
    assert not steps[1].reachable


def test_jump_probability_to_first_order():
    n = 10**4
    steps = transition(excited(), AD_FAMILY(n), COUNT)
    # p^1 = v_1 / n + O(n^-2) with v_1(|1><1|) = 1
    assert abs(steps[1].probability * n - 1.0) < 1e-3


def test_transition_rejects_bad_inputs(state):
    with pytest.raises(ValidationError):
        transition(state, AD_FAMILY(10), SpectralObservable.basis(3))
    with pytest.raises(ValidationError):
        transition(state, BlockOperator(2 * np.eye(4), 2), COUNT)
    with pytest.raises(ValidationError):
        transition(np.eye(2), AD_FAMILY(10), COUNT)


@given(seeds, st.integers(2, 3), st.integers(2, 3), st.sampled_from([1, 10, 1000]))
def test_dual_routes_agree(seed, d, nb, n):
    rng = np.random.default_rng(seed)
    family = build_from_coefficients(random_coefficients(rng, d, nb))
    obs = random_observable(rng, nb)
    partial, block, probs = dual_route_numerators(random_state(rng, d), family(n), obs)
    assert np.max(np.abs(partial - block)) <= 1e-10
    assert abs(probs.sum() - 1.0) <= 1e-10


@given(seeds)
def test_transition_branches_are_states(seed):
    rng = np.random.default_rng(seed)
    u = BlockOperator(random_unitary(rng, 6), 3)
    obs = random_observable(rng, 3)
    steps = transition(random_state(rng, 2), u, obs)
    assert abs(sum(s.probability for s in steps) - 1.0) <= 1e-10
    for s in steps:
        if s.reachable:
            assert abs(np.trace(s.post_state.matrix) - 1) <= 1e-10


def test_nonzero_beta_index():
    # with beta = |x_1><x_1| the excited field quantum can be absorbed
    steps = transition(np.diag([1.0, 0.0]), AD_FAMILY(100), COUNT, beta_index=1)
    assert steps[0].probability > 0 and abs(sum(s.probability for s in steps) - 1) < 1e-12


def test_kernel_matches_transition(state):
    u = AD_FAMILY(50)
    kernel = ChainKernel(u, COUNT)
    post, probs = kernel.branches(state[None])
    for i, s in enumerate(transition(state, u, COUNT)):
        assert probs[i, 0] == pytest.approx(s.probability, abs=1e-14)
        assert np.allclose(post[i, 0], s.post_state.matrix, atol=1e-12)


def test_renormalize_reports_correction():
    fixed, corr = renormalize(np.array([[[0.6, 0.1], [0.1 + 1e-9, 0.6]]], dtype=complex))
    assert abs(np.trace(fixed[0]) - 1) < 1e-15
    assert 0.0 < corr < 0.1


def test_choose_outcome_inverse_cdf():
    probs = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 1e-15], [0.0, 0.5, 1.0 - 1e-15]])
    u = np.array([0.75, 0.25, 0.999999999])
    assert list(choose_outcome(probs, u, 1e-14)) == [1, 0, 2]
    # a uniform landing at the total mass falls back to the last reachable branch
    assert choose_outcome(np.array([[1.0], [0.0]]), np.array([1.0]), 1e-14)[0] == 0


def test_sample_path_deterministic_without_measurement_branching(state):
    obs = SpectralObservable.trivial(2)
    a = sample_path(state, AD_FAMILY, obs, 100, 0.5, seed=1)
    b = sample_path(state, AD_FAMILY, obs, 100, 0.5, seed=2)
    assert np.array_equal(a.states, b.states)
    rho = state
    u = AD_FAMILY(100)
    for _ in range(50):
        rho = transition(rho, u, obs)[0].post_state.matrix
    assert np.allclose(a.states[-1], rho)


def test_identity_family_gives_constant_path(state):
    path = sample_path(state, UnitaryFamily.constant(identity_block(2, 2)), COUNT, 10, 1.0, seed=0)
    assert np.allclose(path.states, state)


def test_ensemble_paths_equal_single_paths(state):
    ens = sample_ensemble(state, AD_FAMILY, COUNT, 50, 1.0, paths=4, seed=7, batch_size=3)
    for j in range(4):
        path = sample_path(state, AD_FAMILY, COUNT, 50, 1.0, seed=7, path_index=j)
        assert np.array_equal(ens.outcomes[j], path.outcomes)
        assert np.allclose(ens.states[j], path.states, atol=1e-13)


def test_ensemble_is_deterministic(state):
    a = sample_ensemble(state, AD_FAMILY, COUNT, 100, 1.0, paths=20, seed=3, record_every=10)
    b = sample_ensemble(state, AD_FAMILY, COUNT, 100, 1.0, paths=20, seed=3, record_every=10)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.outcomes, b.outcomes)
    c = sample_ensemble(state, AD_FAMILY, COUNT, 100, 1.0, paths=20, seed=4, record_every=10)
    assert not np.array_equal(a.outcomes, c.outcomes)


def test_record_grid():
    assert list(record_steps(10, 4)) == [0, 4, 8, 10]
    assert list(record_steps(1000, record_times=(0.5, 1.0), step_size=1e-3)) == [0, 500, 1000]


def test_amplitude_damping_mean_matches_exponential_decay():
    ens = sample_ensemble(excited(), AD_FAMILY, COUNT, 1000, 1.0, paths=10**4, seed=11,
                          record_times=(1.0,), keep_outcomes=False)
    mean, se = empirical_law(ens, 1.0, TestFunction.linear(np.diag([0.0, 1.0])))
    assert abs(mean - np.exp(-1.0)) <= 3 * se


def test_empirical_law_examples(state):
    ens = sample_ensemble(state, AD_FAMILY, COUNT, 10, 1.0, paths=5, seed=0)
    mean, se = empirical_law(ens, 1.0, TRACE)
    assert mean == pytest.approx(1.0) and se < 1e-15
    const = sample_ensemble(state, UnitaryFamily.constant(identity_block(2, 2)), COUNT, 10, 1.0, paths=5, seed=0)
    f = TestFunction.linear(SIGMA_X)
    mean, se = empirical_law(const, 0.5, f)
    assert mean == pytest.approx(float(f(state))) and se == 0.0
    two = ens.subset([0, 1])
    two.states[0, -1] = np.diag([1.0, 0.0])
    two.states[1, -1] = np.diag([0.0, 1.0])
    mean, _ = empirical_law(two, 1.0, TestFunction.linear(SIGMA_Z))
    assert mean == 0.0


def test_discrete_generator_trivial_cases(state):
    const = TestFunction.linear(np.zeros((2, 2)))
    assert discrete_generator(state, const, AD_FAMILY, COUNT, 100) == 0.0
    f = TestFunction.quadratic(SIGMA_X)
    assert discrete_generator(state, f, UnitaryFamily.constant(identity_block(2, 2)), COUNT, 100) == 0.0


def test_discrete_generator_converges_to_limit():
    f = TestFunction.linear(SIGMA_Z)
    limit = float(evaluate_limit_generator(LimitMaps(AD, COUNT), f, excited()))
    assert limit == pytest.approx(2.0)
    gaps = [abs(discrete_generator(excited(), f, AD_FAMILY, COUNT, n) - limit) for n in (100, 1000, 10**4)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_kernel_generator_matches_scalar_version(state):
    f = TestFunction.product(SIGMA_X, SIGMA_Z)
    kernel = ChainKernel(AD_FAMILY(200), COUNT)
    batch = kernel.generator(f.batch, state[None], 200)[0]
    assert batch == pytest.approx(discrete_generator(state, f, AD_FAMILY, COUNT, 200), abs=1e-9)


def test_martingale_property():
    rho0 = random_state(np.random.default_rng(8), 2)
    for f in (TestFunction.linear(SIGMA_Z), TestFunction.quadratic(SIGMA_X), TestFunction.product(SIGMA_X, SIGMA_Z)):
        res = martingale_residuals(rho0, AD_FAMILY, COUNT, 100, f, paths=10**4, seed=5)
        assert abs(res.mean()) <= 4 * res.std(ddof=1) / np.sqrt(len(res))


def test_moment_constants_of_a_constant_ensemble(state):
    ens = sample_ensemble(state, UnitaryFamily.constant(identity_block(2, 2)), COUNT, 10, 1.0, paths=3, seed=0)
    consts = moment_constants(ens, [1, 5])
    assert set(consts) == {1, 5} and max(consts.values()) < 1e-25
