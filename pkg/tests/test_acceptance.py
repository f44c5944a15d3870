"""End-to-end acceptance suite.

Each test covers one release criterion at its stated tolerance and prints a
single PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s`` to
see them).  Tolerances are fixed here, not configurable.
"""

import itertools
import time
from contextlib import contextmanager

import numpy as np
import pytest

from lcf import decomp, fitscore, fixtures
from lcf.chaingraph import (
    class_coherent_score,
    dag_loglik,
    enumerate_equivalence_class,
    essential_graph,
)
from lcf.decomp import (
    chen_decompose,
    generalized_odds_ratio,
    lauritzen_decompose,
    lc_factorize,
    phi_log_table,
    reconstruct_conditional,
    reconstruct_marginal,
    reference_conditional_from_marginal,
)
from lcf.graphs import Graph, Vertex
from lcf.markov import pairwise_markov_holds
from lcf.tabular import TabularDistribution, random_positive

TOL = 1e-9


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:02d} {name}: FAIL")
        raise
    else:
        print(f"ACCEPTANCE {number:02d} {name}: PASS")


def corpus(n=100, with_context=True):
    """Seeded random positive distributions, K in 2..5, cardinalities 2-3."""
    out = []
    for seed in range(n):
        k = (2, 3, 4, 5)[seed % 4]
        cards = [(2, 3)[(seed + i) % 2] for i in range(k)]
        variables = [(f"V{i}", c) for i, c in enumerate(cards)]
        context = [("W", 2)] if with_context and seed % 3 == 0 else ()
        out.append(random_positive(variables, seed=seed, context=context))
    return out


def binary_graphs_k4():
    """A spread of undirected structures on at most 4 binary vertices."""
    def ug(names, edges):
        return Graph([Vertex(n) for n in names], undirected=edges)

    return [
        ug("AB", [("A", "B")]),
        ug("ABC", [("A", "B"), ("B", "C")]),
        ug("ABC", [("A", "B"), ("B", "C"), ("A", "C")]),
        ug("ABCD", [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]),
        ug("ABCD", [("A", "B"), ("A", "C"), ("A", "D")]),
        ug("ABCD", [("A", "B"), ("B", "C"), ("C", "D")]),
    ]


def perturb(p, bump=0.08):
    table = p.probs().copy()
    idx = tuple(c - 1 for c in table.shape)
    table[idx] *= np.exp(bump)
    axes = tuple(range(len(p.context), table.ndim))
    table /= table.sum(axis=axes, keepdims=True)
    return TabularDistribution.from_probs(p.variables, table, context=p.context)


class TestDecompositionIdentities:
    def test_01_moebius_reconstruction(self):
        with criterion(1, "moebius reconstruction on 100 random tables"):
            start = time.perf_counter()
            for p in corpus():
                terms = lauritzen_decompose(p)
                total = decomp.decomposition_log_table(p, terms)
                assert np.max(np.abs(total - p.log_table)) <= TOL
            elapsed = time.perf_counter() - start
            assert elapsed < 10.0, f"corpus run took {elapsed:.1f}s"

    def test_02_block_odds_ratio_identity(self):
        with criterion(2, "block odds ratios equal interaction products"):
            for p in corpus():
                order = p.var_names
                dec = chen_decompose(p, order)
                for k in range(2, len(order) + 1):
                    pivot = order[k - 1]
                    prefix = order[:k]
                    total = np.zeros(p.ctx_shape + p.var_shape)
                    for r in range(2, k + 1):
                        for subset in itertools.combinations(prefix, r):
                            if pivot not in subset:
                                continue
                            term = decomp.FactorTerm(
                                kind="phi",
                                variables=tuple((n, p.cardinality(n)) for n in subset),
                                context=p.context,
                                log_values=phi_log_table(p, subset),
                            )
                            total += decomp._embed_term(term, p)
                    eta = np.broadcast_to(
                        decomp._embed_term(dec.or_terms[k - 2], p), total.shape)
                    assert np.max(np.abs(eta - total)) <= TOL

    def test_03_order_invariance(self):
        with criterion(3, "all 24 orders reconstruct 4-variable tables"):
            for seed in (0, 1, 2):
                cards = [(2, 3)[(seed + i) % 2] for i in range(4)]
                p = random_positive([(f"V{i}", c) for i, c in enumerate(cards)],
                                    seed=1000 + seed,
                                    context=[("W", 2)] if seed == 2 else ())
                for order in itertools.permutations(p.var_names):
                    dec = chen_decompose(p, order)
                    assert dec.max_deviation(p) <= TOL

    def test_04_normalizer_closed_form(self):
        with criterion(4, "closed-form normalizer equals brute force"):
            for p in corpus():
                dec = chen_decompose(p, p.var_names)
                assert np.max(np.abs(dec.log_z - dec.log_z_direct)) <= TOL

    def test_05_odds_ratio_composition(self):
        with criterion(5, "four-term odds-ratio composition on 100 tables"):
            for seed in range(100):
                cards = [(2, 3)[(seed + i) % 2] for i in range(3)]
                p = random_positive([(f"V{i}", c) for i, c in enumerate(cards)],
                                    seed=2000 + seed)
                rng = np.random.default_rng(seed)
                v1 = rng.integers(1, cards[0])
                v2 = rng.integers(1, cards[1])
                v3 = rng.integers(1, cards[2])
                lhs = generalized_odds_ratio(p, {"V2": v3}, {"V0": v1, "V1": v2})
                rhs = (generalized_odds_ratio(p, {"V0": v1}, {"V2": v3})
                       + generalized_odds_ratio(p, {"V1": v2}, {"V2": v3})
                       + generalized_odds_ratio(p, {"V0": v1}, {"V1": v2},
                                                pinned={"V2": v3})
                       - generalized_odds_ratio(p, {"V0": v1}, {"V1": v2}))
                assert abs(lhs - rhs) <= TOL

    def test_06_bivariate_reconstruction_bijections(self):
        with criterion(6, "bivariate reconstruction identities round-trip"):
            for seed in range(100):
                k1, k2 = (2, 3)[seed % 2], (2, 3)[(seed + 1) % 2]
                p = random_positive([("A", k1), ("B", k2)], seed=3000 + seed,
                                    context=[("W", 2)])
                dec = chen_decompose(p, ("A", "B"))
                u1 = np.exp(dec.univariate_terms["A"].log_values)
                u2 = np.exp(dec.univariate_terms["B"].log_values)
                orr = np.exp(dec.or_terms[0].log_values)
                marg_b = np.exp(p.marginalize(["B"]).log_table)
                for w in range(2):
                    for b in range(k2):
                        direct = np.exp(p.condition_on({"B": b}).log_table[w])
                        got = reconstruct_conditional(u1, orr, b, (w,))
                        assert np.max(np.abs(got - direct)) <= TOL
                    got = reconstruct_marginal(u1, u2, orr, (w,))
                    assert np.max(np.abs(got - marg_b[w])) <= TOL
                    back = reference_conditional_from_marginal(marg_b, u1, orr, (w,))
                    assert np.max(np.abs(back - u2[w])) <= TOL


class TestMarkovCharacterizations:
    def test_07_factorization_equivalence_both_directions(self):
        with criterion(7, "factorization <=> pairwise Markov on binary graphs"):
            for i, g in enumerate(binary_graphs_k4()):
                composed = fixtures.random_model(g, seed=4000 + i)
                assert pairwise_markov_holds(composed, g).passed
                f = lc_factorize(composed, g)
                assert not f.diagnostics  # every non-clique |log phi| <= 1e-9
                assert f.max_deviation(composed) <= TOL
                complete = len(g.random_names) * (len(g.random_names) - 1) // 2
                if len(g.undirected_edges) == complete:
                    continue  # saturated graphs cannot leave the model
                bad = perturb(composed)
                assert not pairwise_markov_holds(bad, g).passed
                fb = lc_factorize(bad, g)
                assert fb.diagnostics
                assert fb.max_deviation(bad) > TOL

    def test_08_square_structure_and_separations(self):
        with criterion(8, "4-cycle factorization structure and separations"):
            g = fixtures.square4()
            p = fixtures.random_model(g, seed=4100)
            f = lc_factorize(p, g)
            assert set(f.univariate_terms) == {"A", "B", "C", "D"}
            assert set(f.phi_terms) == {
                frozenset({"A", "B"}), frozenset({"A", "C"}),
                frozenset({"B", "D"}), frozenset({"C", "D"}),
            }
            assert p.exact_ci_holds(("A",), ("D",), ("B", "C"), tol=TOL)
            assert p.exact_ci_holds(("B",), ("C",), ("A", "D"), tol=TOL)


class TestEquivalenceClasses:
    def test_09_essential_graph_of_the_dag_family(self):
        with criterion(9, "three equivalent DAGs share one essential graph"):
            expected = fixtures.essential6()
            for g in (fixtures.dag6(), fixtures.dag6_b(), fixtures.dag6_c()):
                assert essential_graph(g) == expected

    def test_10_class_count_and_brute_force(self):
        with criterion(10, "18-member class and K<=4 brute-force agreement"):
            cls = enumerate_equivalence_class(fixtures.essential6())
            assert len(cls) == 18
            for g in (fixtures.dag6(), fixtures.dag6_b(), fixtures.dag6_c()):
                assert g in tuple(cls)

            names = ("A", "B", "C", "D")
            pairs = list(itertools.combinations(names, 2))
            classes = {}
            for choice in itertools.product((0, 1, 2), repeat=len(pairs)):
                arcs = []
                for (a, b), c in zip(pairs, choice):
                    if c == 1:
                        arcs.append((a, b))
                    elif c == 2:
                        arcs.append((b, a))
                g = Graph([Vertex(n) for n in names], directed=arcs)
                if g.is_dag():
                    classes.setdefault((g.skeleton(), g.vstructures()), []).append(g)
            assert sum(len(v) for v in classes.values()) == 543
            for members in classes.values():
                essentials = {essential_graph(m) for m in members}
                assert len(essentials) == 1
                enumerated = enumerate_equivalence_class(next(iter(essentials)))
                assert (sorted(m.directed_edges for m in enumerated)
                        == sorted(m.directed_edges for m in members))

    def test_11_score_coherence(self):
        with criterion(11, "class-coherent scores across all 18 members"):
            p = fixtures.random_chain_model(fixtures.dag6(), seed=100,
                                            interaction_scale=0.4,
                                            concentration=6.0)
            samples = p.sample(2000, seed=17)
            members = tuple(enumerate_equivalence_class(fixtures.essential6()))
            logliks = [dag_loglik(samples, m) for m in members]
            assert max(logliks) - min(logliks) <= TOL
            scores = [class_coherent_score(samples, m) for m in members]
            assert len({s.score for s in scores}) == 1  # bit-identical
            assert scores[0].loglik == pytest.approx(logliks[0], abs=1e-6)
            bic = [class_coherent_score(samples, m, penalty="bic") for m in members]
            assert len({s.score for s in bic}) == 1


class TestParameterization:
    def test_12_mutual_inverses_and_jacobian_rank(self):
        with criterion(12, "parameter map is a bijection onto the model"):
            graphs = binary_graphs_k4()
            rng = np.random.default_rng(99)
            for trial in range(100):
                g = graphs[trial % len(graphs)]
                m0 = fitscore.zero_params(g)
                vec = rng.uniform(-3, 3, fitscore.param_count(m0))
                p = fitscore.params_to_distribution(fitscore.unpack(m0, vec))
                back = fitscore.params_from_distribution(p, g)
                assert np.max(np.abs(fitscore.pack(back) - vec)) <= TOL
                again = fitscore.params_to_distribution(back)
                assert np.max(np.abs(again.log_table - p.log_table)) <= TOL

            for g in binary_graphs_k4()[:3]:  # K <= 3 binary
                m0 = fitscore.zero_params(g)
                dim = fitscore.param_count(m0)
                vec = rng.uniform(-1, 1, dim)
                h = 1e-5
                cols = []
                for i in range(dim):
                    e = np.zeros(dim)
                    e[i] = h
                    hi = fitscore.params_to_distribution(
                        fitscore.unpack(m0, vec + e)).probs().ravel()
                    lo = fitscore.params_to_distribution(
                        fitscore.unpack(m0, vec - e)).probs().ravel()
                    cols.append((hi - lo) / (2 * h))
                jac = np.stack(cols, axis=1)
                assert np.linalg.matrix_rank(jac, tol=1e-8) == dim

    def test_13_gradient_matches_finite_differences(self):
        with criterion(13, "analytic gradients match central differences"):
            graphs = binary_graphs_k4()
            rng = np.random.default_rng(7)
            for trial in range(50):
                g = graphs[trial % len(graphs)]
                family = (fitscore.FREE if trial % 3 else fitscore.TRANSFORMED_LINEAR)
                m0 = fitscore.zero_params(g, family=family)
                vec = rng.uniform(-1.5, 1.5, fitscore.param_count(m0))
                m = fitscore.unpack(m0, vec)
                p = random_positive([(n, 2) for n in g.random_names],
                                    seed=5000 + trial)
                samples = p.sample(120, seed=trial)
                n = samples.n_rows
                _, grad = fitscore.loglik_and_gradient(m, samples)
                h = 1e-5
                for i in range(len(vec)):
                    e = np.zeros_like(vec)
                    e[i] = h
                    hi, _ = fitscore.loglik_and_gradient(fitscore.unpack(m0, vec + e),
                                                         samples)
                    lo, _ = fitscore.loglik_and_gradient(fitscore.unpack(m0, vec - e),
                                                         samples)
                    fd = (hi - lo) / (2 * h * n)
                    assert abs(grad[i] - fd) <= 1e-6 * max(1.0, abs(fd))

    def test_14_saturated_dimension_and_fit(self):
        with criterion(14, "saturated dimension and empirical recovery"):
            vectors = [(2, 2), (2, 3), (3, 3), (2, 2, 2), (2, 2, 3), (2, 3, 4),
                       (3, 3, 3), (2, 2, 2, 2), (2, 3, 2, 3), (4, 2)]
            for cards in vectors:
                names = [f"V{i}" for i in range(len(cards))]
                g = Graph([Vertex(n, cardinality=c) for n, c in zip(names, cards)],
                          undirected=[(a, b) for i, a in enumerate(names)
                                      for b in names[i + 1:]])
                assert (fitscore.param_count(fitscore.zero_params(g))
                        == int(np.prod(cards)) - 1)

            g = Graph([Vertex(n, cardinality=c) for n, c in
                       zip("XYZ", (2, 3, 2))],
                      undirected=[("X", "Y"), ("X", "Z"), ("Y", "Z")])
            p = fixtures.random_model(g, seed=12, interaction_scale=0.8)
            samples = p.sample(2000, seed=4)
            counts = fitscore.counts_table(samples, g)
            assert counts.min() > 0
            result = fitscore.fit_mle(g, samples, tol=1e-8)
            assert result.converged
            emp = counts / counts.sum()
            fitted = fitscore.params_to_distribution(result.params).probs()
            assert 0.5 * np.abs(fitted - emp).sum() <= 1e-6


class TestLargerFixtures:
    def test_15_lattice_and_tree(self):
        with criterion(15, "3x3 lattice and 15-vertex tree factorizations"):
            start = time.perf_counter()
            lattice = fixtures.lattice3x3()
            p = fixtures.random_model(lattice, seed=6000)
            f = lc_factorize(p, lattice, max_diagnostic_size=4)
            assert len(f.univariate_terms) == 9
            assert len(f.phi_terms) == 12
            assert set(f.phi_terms) == {frozenset(e) for e in lattice.undirected_edges}
            assert not f.diagnostics  # all scanned non-clique terms are 1
            assert f.max_deviation(p) <= TOL
            elapsed = time.perf_counter() - start
            assert elapsed < 60.0, f"lattice run took {elapsed:.1f}s"

            tree = fixtures.tree15()
            q = fixtures.random_model(tree, seed=6100)
            ft = lc_factorize(q, tree, max_diagnostic_size=2)
            assert len(ft.univariate_terms) == 15
            assert len(ft.phi_terms) == 14
            assert set(ft.phi_terms) == {frozenset(e) for e in tree.undirected_edges}
            assert not ft.diagnostics
            assert ft.max_deviation(q) <= TOL
