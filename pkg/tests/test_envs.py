import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvplab.envs import (LowerBoundSpec, assign_groups, make_chain, make_lower_bound_instance,
                         make_random_mdp, uniform_gap_groups)
from mvplab.errors import ValidationError
from mvplab.mdp import DeterministicPolicy, max_total_reward, state_marginals, validate_mdp
from mvplab.solver import optimal_values, variance_profile


def test_tiny_meta(tiny):
    mdp, meta = tiny
    assert mdp.S == 3 and mdp.A == 2 and mdp.H == 2
    np.testing.assert_allclose(meta.p_table.ravel(), [0.5, 0.45, 0.5, 0.4], atol=1e-15)
    np.testing.assert_array_equal(meta.sigma.ravel(), [0, 1, 2, 3])
    assert mdp.rewards[1][1][0].atoms == ((2.0, 0.5), (0.0, 0.5))
    assert validate_mdp(mdp) == []
    assert mdp.init_dist == (1.0, 0.0, 0.0)


def test_tiny_gaps_are_quarter(tiny, tiny_sol):
    _, meta = tiny
    gaps = np.array([0, 0.4, 0, 0.8])[meta.sigma]
    np.testing.assert_allclose(tiny_sol.gaps[:, 1:2, :], gaps / 4, atol=1e-12)
    np.testing.assert_allclose(tiny_sol.gaps[:, [0, 2], :], 0.0, atol=1e-15)


def test_tiny_conditional_and_unconditional(tiny, tiny_sol):
    prof = variance_profile(tiny[0], tiny_sol, exact=True)
    assert prof.var_max_c_exact == pytest.approx(71 / 64, abs=1e-12)
    assert prof.var_max == pytest.approx(15 / 64, abs=1e-12)


@pytest.mark.parametrize("gaps,msg", [
    ((0, 2.0, 0, 0.8), "sqrt"),
    ((0.1, 0.4, 0, 0.8), "realizability"),
    ((0, 0.4, 0), "S\\*A\\*H"),
])
def test_spec_validation(gaps, msg):
    with pytest.raises(ValidationError, match=msg):
        make_lower_bound_instance(LowerBoundSpec(1, 2, 2, 4, gaps))


def test_L_range_checked():
    with pytest.raises(ValidationError, match="L="):
        LowerBoundSpec(1, 2, 2, 5, (0, 0.4, 0, 0.8)).validate()


def test_group_assignment_moves_zeros():
    gaps = (0.3, 0.5, 0.0, 0.0)       # zeros arrive late: each group must still get one
    sigma = assign_groups(gaps, 1, 2, 2)
    for grp in sigma.reshape(-1, 2):
        assert any(gaps[j] == 0 for j in grp)
    assert sorted(sigma.ravel()) == [0, 1, 2, 3]


lb_specs = st.builds(
    lambda S, A, H, L, seed: (S, A, H, L, seed),
    st.integers(1, 3), st.integers(2, 3), st.integers(1, 5), st.floats(1.0, 4.0), st.integers(0, 10**6))


@settings(max_examples=40, deadline=None)
@given(lb_specs)
def test_construction_fidelity(params):
    S, A, H, L, seed = params
    L = min(L, H * H)
    rng = np.random.default_rng(seed)
    root = math.sqrt(L)
    gaps = [0.0 if a == 0 else float(rng.uniform(0.01, 0.99) * root)
            for _ in range(S * H) for a in range(A)]
    rng.shuffle(gaps)
    # reshuffling can break per-group zeros but never the zero count
    mdp, meta = make_lower_bound_instance(LowerBoundSpec(S, A, H, L, gaps))
    assert validate_mdp(mdp) == []
    assert max_total_reward(mdp) == pytest.approx(root if H >= 2 else 0.0)  # bandits reachable from step 2
    sol = optimal_values(mdp)
    bandits = slice(1, S + 1)
    np.testing.assert_allclose(sol.gaps[:, bandits], np.asarray(gaps)[meta.sigma] / 4, atol=1e-12)
    pq = meta.p_table
    assert (pq >= 0.25 - 1e-15).all() and (pq <= 0.5).all()
    assert all((pq[h, i] == 0.5).any() for h in range(H) for i in range(S))
    np.testing.assert_allclose(sol.per_step_var[:, bandits], pq * (1 - pq) * L, atol=1e-12)
    marg = state_marginals(mdp, DeterministicPolicy.constant(H, S + 2))
    np.testing.assert_allclose(meta.d_table, marg[1:, bandits], atol=1e-12)
    lo, hi = 1 / (math.e * L * S * H), 1 / (L * S * H)
    assert (meta.d_table >= lo - 1e-15).all() and (meta.d_table <= hi + 1e-15).all()


SEPARATION_GRID = [(H, L) for H in (8, 16, 32) for L in (1, 4, 16)]


@pytest.mark.parametrize("H,L", SEPARATION_GRID)
def test_separation_and_main_state_variance(H, L):
    mdp, _ = make_lower_bound_instance(LowerBoundSpec(2, 2, H, L, uniform_gap_groups(2, 2, H, [0, 0.2])))
    sol = optimal_values(mdp)
    prof = variance_profile(mdp, sol)
    assert prof.var_max_c_future >= 3 / 16 * L
    assert prof.var_max <= 3.0
    # calibrated over this grid by exact DP: max Var*(s_0) * H = 0.2495
    assert (sol.per_step_var[:, 0, :] <= 0.25 / H).all()


def kl_lhs(x):
    return (0.5 - x) ** 2 / (x * (1 - x))


def kl_rhs(x):
    return x * np.log(2 * x) + (1 - x) * np.log(2 - 2 * x)


def test_kl_inequality_points():
    assert kl_lhs(0.5) == kl_rhs(0.5) == 0.0
    assert kl_lhs(0.25) == pytest.approx(1 / 3, rel=1e-15)
    assert kl_rhs(0.25) == pytest.approx(0.25 * math.log(0.5) + 0.75 * math.log(1.5), rel=1e-15)
    assert kl_rhs(0.25) == pytest.approx(0.13081, abs=1e-5)


def test_random_mdp_generator():
    a, b = make_random_mdp(3, 2, 3, 0.5, 7), make_random_mdp(3, 2, 3, 0.5, 7)
    assert a == b
    assert validate_mdp(a) == []
    assert max_total_reward(a) <= 3 + 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), S=st.integers(1, 5), A=st.integers(1, 3), H=st.integers(1, 6),
       sparsity=st.floats(0.1, 1.0))
def test_random_mdp_always_valid(seed, S, A, H, sparsity):
    assert validate_mdp(make_random_mdp(S, A, H, sparsity, seed)) == []


def test_chain_fixture():
    chain = make_chain(3)
    sol = optimal_values(chain)
    prof = variance_profile(chain, sol, exact=True)
    assert sol.v0_star == 1.0
    assert prof.var_max == prof.var_max_c_future == prof.var_max_c_exact == prof.q_star_max == 0
    with pytest.raises(ValidationError):
        make_chain(0)
