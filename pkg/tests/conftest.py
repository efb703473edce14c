import pytest

from mvplab.envs import LowerBoundSpec, make_chain, make_lower_bound_instance
from mvplab.solver import optimal_values

TINY_SPEC = LowerBoundSpec(S=1, A=2, H=2, L=4, gaps=(0, 0.4, 0, 0.8))


@pytest.fixture(scope="session")
def tiny():
    mdp, meta = make_lower_bound_instance(TINY_SPEC)
    return mdp, meta


@pytest.fixture(scope="session")
def tiny_sol(tiny):
    return optimal_values(tiny[0])


@pytest.fixture(scope="session")
def chain3():
    return make_chain(3)
