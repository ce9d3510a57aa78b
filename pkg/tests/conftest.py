import pytest

from camis.graphs import gen_open_chain
from camis.markov import builtin_graph


@pytest.fixture(scope="session")
def four_node():
    return builtin_graph("four-node")


@pytest.fixture(scope="session")
def house():
    return builtin_graph("house")


@pytest.fixture(scope="session")
def chain3():
    return gen_open_chain(3)
