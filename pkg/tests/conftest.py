import numpy as np
import pytest

from lcf import fixtures
from lcf.graphs import Graph, Vertex
from lcf.tabular import TabularDistribution


@pytest.fixture
def fix_ab():
    """Binary A, B with p = [0.4, 0.1, 0.2, 0.3] over states 00, 01, 10, 11."""
    return TabularDistribution.from_probs(
        [("A", 2), ("B", 2)], np.array([[0.4, 0.1], [0.2, 0.3]])
    )


@pytest.fixture
def graph_ab():
    return Graph([Vertex("A"), Vertex("B")], undirected=[("A", "B")])


@pytest.fixture
def square():
    return fixtures.square4()


@pytest.fixture
def square_model(square):
    """Seeded random distribution inside the 4-cycle model."""
    return fixtures.random_model(square, seed=2024)


@pytest.fixture
def essential6():
    return fixtures.essential6()


def product_distribution(variables, seed):
    """Random product (fully independent) distribution."""
    rng = np.random.default_rng(seed)
    table = np.ones(tuple(c for _, c in variables))
    for i, (_, card) in enumerate(variables):
        marginal = rng.dirichlet(np.full(card, 5.0))
        shape = [1] * len(variables)
        shape[i] = card
        table = table * marginal.reshape(shape)
    return TabularDistribution.from_probs(variables, table)
