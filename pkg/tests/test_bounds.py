import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsfnilm.bounds import (
    chain_indicators,
    lower_bound_h,
    modular_upper_bound_of_f,
    permutation_from_set,
    subgradient_h,
    subgradient_h_naive,
    supergradient_g,
    supergradient_g_naive,
    upper_bound_g,
)
from dsfnilm.setfn import (
    AggregateSeries,
    StateAssignment,
    all_subsets,
    assignment_to_indicator,
    assignment_to_indices,
    build_instance,
    eval_set_cost,
    f_of_sets,
    g_of_sets,
    h_of_sets,
    make_model,
    random_assignment,
)


def _anchor_and_perm(inst, seed, policy="shuffled"):
    rng = np.random.default_rng(seed)
    Y = random_assignment(inst.model, inst.horizon, rng)
    return Y, permutation_from_set(inst, Y, seed, policy)


def test_permutation_deterministic_layout(single_appliance):
    inst = single_appliance([0, 0])
    Y = StateAssignment([[0, 0]])
    np.testing.assert_array_equal(permutation_from_set(inst, Y, tail_policy="deterministic"), [0, 2, 1, 3])


def test_permutation_seeded_shuffle_repeatable(rand_instance):
    inst = rand_instance(0, T=5)
    Y, pi1 = _anchor_and_perm(inst, 11)
    pi2 = permutation_from_set(inst, Y, 11)
    np.testing.assert_array_equal(pi1, pi2)
    assert not np.array_equal(pi1, permutation_from_set(inst, Y, 12))


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_permutation_head_is_anchor(seed):
    from dsfnilm.verify import random_instance
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 3, (2, 3, 2), 4, 2)
    Y = random_assignment(inst.model, inst.horizon, rng)
    pi = permutation_from_set(inst, Y, seed)
    LT = Y.states.size
    assert set(pi[:LT].tolist()) == set(assignment_to_indices(inst, Y).tolist())
    assert sorted(pi.tolist()) == list(range(inst.ground_size))


def test_unknown_tail_policy(single_appliance):
    inst = single_appliance([0])
    with pytest.raises(ValueError):
        permutation_from_set(inst, StateAssignment([[0]]), tail_policy="sorted")


# -- supergradient of g -------------------------------------------------------------------------


def _three_state_two_times():
    model = make_model([[0, 40, 100]], [[1.0]], 1.0)
    return build_instance(model, AggregateSeries([[50.0], [90.0]]))


def test_supergradient_adjacent_equal_states():
    inst = _three_state_two_times()  # 6-element ground set
    Y = StateAssignment([[2, 2]])
    u = supergradient_g(inst, Y)
    expect = np.zeros(6)
    expect[[2, 5]] = -1.0
    np.testing.assert_array_equal(u, expect)
    bound = upper_bound_g(inst, Y)
    subsets = all_subsets(6)
    g_all = g_of_sets(inst, subsets)
    assert np.all(g_all <= bound(subsets))
    ind = assignment_to_indicator(inst, Y)
    assert bound(ind) == g_of_sets(inst, ind) == -1.0
    # definitional affine form g(Y) + u(X) - u(Y)
    np.testing.assert_array_equal(bound(subsets), -1.0 + subsets @ u - u[ind].sum())


def test_supergradient_no_matching_neighbours():
    inst = _three_state_two_times()
    Y = StateAssignment([[0, 2]])
    assert not supergradient_g(inst, Y).any()
    bound = upper_bound_g(inst, Y)
    assert bound.anchor == eval_set_cost(inst, Y)[1] == 0.0


@pytest.mark.parametrize("seed", range(100))
def test_supergradient_closed_form_matches_definition(rand_instance, seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, 4))
    inst = rand_instance(seed, L=L, states=tuple(rng.integers(2, 4, size=L)), T=int(rng.integers(1, 9)))
    Y = random_assignment(inst.model, inst.horizon, rng)
    np.testing.assert_allclose(supergradient_g(inst, Y), supergradient_g_naive(inst, Y), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_supergradient_sparsity(rand_instance, seed):
    inst = rand_instance(seed, L=3, states=(3, 2, 3), T=10)
    Y, _ = _anchor_and_perm(inst, seed)
    u = supergradient_g(inst, Y)
    assert np.count_nonzero(u) <= Y.states.size
    assert not u[~assignment_to_indicator(inst, Y)].any()


# -- subgradient of h ---------------------------------------------------------------------------


def test_subgradient_first_element_is_singleton_value(single_appliance):
    inst = single_appliance([100])
    Y = StateAssignment([[1]])
    pi = np.array([1, 0])
    v = subgradient_h(inst, Y, pi)
    assert v[1] == 10000.0
    assert v[1] == h_of_sets(inst, np.array([False, True]))


@pytest.mark.parametrize("seed", range(100))
def test_subgradient_tight_at_anchor(rand_instance, seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, 4))
    inst = rand_instance(seed, L=L, states=(2, 3, 2)[:L], T=int(rng.integers(1, 12)), R=int(rng.integers(1, 4)))
    Y, pi = _anchor_and_perm(inst, seed)
    v = subgradient_h(inst, Y, pi)
    _, _, h_y = eval_set_cost(inst, Y)
    assert v[assignment_to_indicator(inst, Y)].sum() == pytest.approx(h_y, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("policy", ["shuffled", "deterministic"])
def test_subgradient_closed_form_matches_chain(rand_instance, seed, policy):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, 4))
    inst = rand_instance(seed, L=L, states=tuple(rng.integers(2, 4, size=L)), T=int(rng.integers(1, 10)),
                         R=int(rng.integers(1, 4)))
    assert inst.ground_size <= 90
    Y, pi = _anchor_and_perm(inst, seed, policy)
    np.testing.assert_allclose(subgradient_h(inst, Y, pi), subgradient_h_naive(inst, Y, pi), rtol=1e-9, atol=1e-9)


def test_subgradient_rejects_inconsistent_head(rand_instance):
    inst = rand_instance(0)
    Y, pi = _anchor_and_perm(inst, 0)
    bad = pi.copy()
    bad[0], bad[-1] = bad[-1], bad[0]
    with pytest.raises(ValueError):
        subgradient_h(inst, Y, bad)
    with pytest.raises(ValueError):
        subgradient_h(inst, Y, pi[:-1])


@pytest.mark.parametrize("seed", range(10))
def test_chain_tightness(rand_instance, seed):
    inst = rand_instance(seed, L=2, states=(3, 2), T=4)
    Y, pi = _anchor_and_perm(inst, seed)
    lo = lower_bound_h(inst, Y, pi)
    chain = chain_indicators(pi)
    np.testing.assert_allclose(lo(chain), h_of_sets(inst, chain), rtol=1e-12, atol=1e-9)


# -- combined bound -----------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_f_upper_bound_exhaustive_six_elements(seed):
    rng = np.random.default_rng(seed)
    model = make_model([rng.integers(0, 150, 3)], [[1.0]], 1.0)
    inst = build_instance(model, AggregateSeries(rng.integers(0, 200, (2, 1)).astype(float)))
    subsets = all_subsets(inst.ground_size)
    f_all = f_of_sets(inst, subsets)
    for Y in (StateAssignment([[a, b]]) for a in range(3) for b in range(3)):
        for tail_seed in (1, 2):
            pi = permutation_from_set(inst, Y, tail_seed)
            M = modular_upper_bound_of_f(inst, Y, pi)
            assert np.all(f_all <= M(subsets) + 1e-9)
            ind = assignment_to_indicator(inst, Y)
            assert M(ind) == pytest.approx(eval_set_cost(inst, Y)[0], abs=1e-9)


def test_f_upper_bound_without_smoothness(rand_instance):
    inst = rand_instance(4, lam_choices=(0.0,))
    Y, pi = _anchor_and_perm(inst, 4)
    M = modular_upper_bound_of_f(inst, Y, pi)
    np.testing.assert_array_equal(M.weights, -subgradient_h(inst, Y, pi))
    assert M.anchor == 0.0


def test_different_tails_both_valid(rand_instance):
    inst = rand_instance(9)
    Y, _ = _anchor_and_perm(inst, 9)
    subsets = all_subsets(inst.ground_size)
    f_all = f_of_sets(inst, subsets)
    bounds = [modular_upper_bound_of_f(inst, Y, permutation_from_set(inst, Y, s)) for s in (100, 200)]
    assert not np.array_equal(bounds[0].weights, bounds[1].weights)
    f_y = eval_set_cost(inst, Y)[0]
    for M in bounds:
        assert np.all(f_all <= M(subsets) + 1e-9)
        assert M(assignment_to_indicator(inst, Y)) == pytest.approx(f_y, abs=1e-9)
