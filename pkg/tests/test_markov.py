import itertools

import numpy as np
import pytest

from conftest import product_distribution
from lcf import fixtures
from lcf.decomp import lc_factorize
from lcf.graphs import FIXED, Graph, GraphError, Vertex
from lcf.markov import (
    global_markov_holds,
    hammersley_clifford_check,
    pairwise_markov_holds,
)
from lcf.tabular import TabularDistribution, random_positive


def perturbed(p, bump=0.08):
    """Tilt one non-reference cell so the table leaves the model."""
    table = np.exp(p.log_table).copy()
    idx = tuple(c - 1 for c in table.shape)
    table[idx] *= np.exp(bump)
    table /= table.sum()
    return TabularDistribution.from_probs(p.variables, table, context=p.context)


class TestPairwiseMarkov:
    def test_composed_model_passes(self, square, square_model):
        report = pairwise_markov_holds(square_model, square)
        assert report.passed
        assert report.statements_checked == 2  # the two non-adjacent pairs

    def test_generic_table_fails_with_named_pair(self, square):
        p = random_positive([(n, 2) for n in "ABCD"], seed=9)
        report = pairwise_markov_holds(p, square)
        assert not report.passed
        named = " ".join(stmt for stmt, _ in report.violations)
        assert "A" in named and "D" in named or "B" in named and "C" in named

    def test_complete_graph_is_vacuous(self):
        g = Graph([Vertex(n) for n in "ABC"],
                  undirected=list(itertools.combinations("ABC", 2)))
        p = random_positive([(n, 2) for n in "ABC"], seed=10)
        report = pairwise_markov_holds(p, g)
        assert report.passed and report.statements_checked == 0

    def test_fixed_vertex_invariance(self):
        cug = Graph(
            [Vertex("A"), Vertex("B"), Vertex("W", FIXED, 2)],
            undirected=[("A", "B")],
            directed=[("W", "A")],
        )
        good = fixtures.random_model(cug, seed=3)
        assert pairwise_markov_holds(good, cug).passed
        # a table whose B-conditional varies with W violates the B/W pair
        bad_table = np.stack([
            np.exp(good.log_table[0]),
            np.exp(good.log_table[1])[:, ::-1],
        ])
        bad = TabularDistribution.from_probs(good.variables, bad_table,
                                             context=good.context)
        report = pairwise_markov_holds(bad, cug)
        assert not report.passed
        assert any("W" in stmt for stmt, _ in report.violations)


class TestGlobalMarkov:
    def test_square_separations_verified(self, square, square_model):
        report = global_markov_holds(square_model, square)
        assert report.passed
        assert report.statements_checked > 0

    def test_dag_model(self):
        g = fixtures.dag6()
        p = fixtures.random_chain_model(g, seed=12)
        report = global_markov_holds(p, g, max_conditioning=3)
        assert report.passed
        # the d-separations the structure promises hold on the table
        assert p.exact_ci_holds(("B",), ("C",), ("A",))
        assert p.exact_ci_holds(("D", "E", "F"), ("A",), ("B", "C"))

    def test_specific_square_statements(self, square_model):
        assert square_model.exact_ci_holds(("A",), ("D",), ("B", "C"))
        assert square_model.exact_ci_holds(("B",), ("C",), ("A", "D"))

    def test_product_on_edgeless_graph(self):
        g = Graph([Vertex(n) for n in "ABC"])
        p = product_distribution([(n, 2) for n in "ABC"], seed=4)
        report = global_markov_holds(p, g)
        assert report.passed

    def test_violations_reported(self, square):
        p = random_positive([(n, 2) for n in "ABCD"], seed=20)
        report = global_markov_holds(p, square)
        assert not report.passed

    def test_statement_cap(self, square, square_model):
        report = global_markov_holds(square_model, square, max_statements=1)
        assert report.statements_checked <= 1

    def test_chain_graph_rejected(self, essential6):
        p = fixtures.random_chain_model(essential6, seed=1)
        with pytest.raises(GraphError):
            global_markov_holds(p, essential6)


class TestHammersleyClifford:
    def test_composed_model_passes(self, square, square_model):
        report = hammersley_clifford_check(square_model, square)
        assert report.passed

    def test_perturbed_fails_both_ways(self, square, square_model):
        bad = perturbed(square_model)
        pw = pairwise_markov_holds(bad, square)
        hc = hammersley_clifford_check(bad, square)
        assert not pw.passed and not hc.passed
        assert any("phi" in stmt for stmt, _ in hc.violations)

    def test_fixed_scope_invariance(self):
        # W is adjacent only to A, so the BC interaction must ignore W
        cug = Graph(
            [Vertex("A"), Vertex("B"), Vertex("C"), Vertex("W", FIXED, 2)],
            undirected=[("A", "B"), ("B", "C")],
            directed=[("W", "A")],
        )
        p = fixtures.random_model(cug, seed=8)
        report = hammersley_clifford_check(p, cug)
        assert report.passed
        # breaking the invariance is detected
        table = np.exp(p.log_table).copy()
        table[1, :, 1, 1] *= np.exp(0.3)
        table /= table.sum(axis=(1, 2, 3), keepdims=True)
        bad = TabularDistribution.from_probs(p.variables, table, context=p.context)
        report = hammersley_clifford_check(bad, cug)
        assert not report.passed

    def test_product_distribution_trivially_passes(self, square):
        p = product_distribution([(n, 2) for n in "ABCD"], seed=6)
        assert hammersley_clifford_check(p, square).passed


class TestEquivalenceOfCharacterizations:
    """pairwise Markov <=> vanishing non-clique interactions <=> reconstruction."""

    GRAPHS = {
        "chain": [("A", "B"), ("B", "C")],
        "square": [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")],
        "star": [("A", "B"), ("A", "C"), ("A", "D")],
    }

    @pytest.mark.parametrize("name", sorted(GRAPHS))
    def test_three_way_equivalence(self, name):
        edges = self.GRAPHS[name]
        names = sorted({v for e in edges for v in e})
        g = Graph([Vertex(n) for n in names], undirected=edges)
        in_model = fixtures.random_model(g, seed=hash(name) % 1000)
        for p, expected in [(in_model, True), (perturbed(in_model), False)]:
            pw = pairwise_markov_holds(p, g).passed
            f = lc_factorize(p, g)
            phi_ok = not f.diagnostics
            recon_ok = f.max_deviation(p) <= 1e-9
            assert pw == expected
            assert phi_ok == expected
            assert recon_ok == expected

    def test_global_implies_pairwise(self):
        for seed in range(6):
            g = fixtures.square4()
            p = (fixtures.random_model(g, seed=seed) if seed % 2 == 0
                 else random_positive([(n, 2) for n in "ABCD"], seed=seed))
            if global_markov_holds(p, g).passed:
                assert pairwise_markov_holds(p, g).passed
