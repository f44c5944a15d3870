"""Canonical demonstration graphs and seeded in-model distributions.

These fixtures double as CLI demo output and test inputs: the 4-cycle (the
smallest undirected model not equivalent to any DAG model), a 6-vertex DAG
equivalence class with its essential graph, a 3x3 lattice, and a 15-vertex
binary tree treated as fully observed.
"""

from __future__ import annotations

import numpy as np

from .decomp import COND, PHI, FactorTerm, compose_from_terms
from .graphs import RANDOM, Graph, Vertex
from .tabular import resolve_reference


def _ug(names, edges, cardinality=2):
    return Graph([Vertex(n, RANDOM, cardinality) for n in names], undirected=edges)


def _dag(names, arcs, cardinality=2):
    return Graph([Vertex(n, RANDOM, cardinality) for n in names], directed=arcs)


def square4(cardinality=2):
    """4-cycle: A - B, A - C, B - D, C - D."""
    return _ug("ABCD", [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], cardinality)


def dag6(cardinality=2):
    """Six-vertex DAG whose equivalence class has 18 members."""
    arcs = [("A", "B"), ("A", "C"),
            ("B", "D"), ("C", "D"), ("B", "E"), ("C", "E"), ("D", "E"),
            ("D", "F"), ("E", "F"), ("B", "F"), ("C", "F")]
    return _dag("ABCDEF", arcs, cardinality)


def dag6_b(cardinality=2):
    """Second member of the same class (A's and some D/E/F arcs flipped)."""
    arcs = [("B", "A"), ("A", "C"),
            ("B", "D"), ("C", "D"), ("B", "E"), ("C", "E"), ("E", "D"),
            ("F", "D"), ("F", "E"), ("B", "F"), ("C", "F")]
    return _dag("ABCDEF", arcs, cardinality)


def dag6_c(cardinality=2):
    """Third member of the same class."""
    arcs = [("A", "B"), ("C", "A"),
            ("B", "D"), ("C", "D"), ("B", "E"), ("C", "E"), ("E", "D"),
            ("F", "D"), ("F", "E"), ("B", "F"), ("C", "F")]
    return _dag("ABCDEF", arcs, cardinality)


def essential6(cardinality=2):
    """The essential graph of the dag6 equivalence class."""
    vertices = [Vertex(n, RANDOM, cardinality) for n in "ABCDEF"]
    undirected = [("A", "B"), ("A", "C"), ("D", "E"), ("D", "F"), ("E", "F")]
    directed = [("B", "D"), ("C", "D"), ("B", "E"), ("C", "E"), ("B", "F"), ("C", "F")]
    return Graph(vertices, undirected, directed)


def lattice3x3(cardinality=2):
    """3x3 grid over V1..V9: 12 edges, no cliques beyond pairs."""
    names = [f"V{i}" for i in range(1, 10)]
    edges = []
    for row in range(3):
        for col in range(3):
            i = 3 * row + col + 1
            if col < 2:
                edges.append((f"V{i}", f"V{i + 1}"))
            if row < 2:
                edges.append((f"V{i}", f"V{i + 3}"))
    return _ug(names, edges, cardinality)


def tree15(cardinality=2):
    """Depth-3 binary tree: 8 leaves L1..L8, 7 inner vertices, 14 edges."""
    names = ["L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8",
             "H12", "H34", "H56", "H78", "H14", "H58", "H18"]
    edges = [("L1", "H12"), ("L2", "H12"), ("L3", "H34"), ("L4", "H34"),
             ("L5", "H56"), ("L6", "H56"), ("L7", "H78"), ("L8", "H78"),
             ("H12", "H14"), ("H34", "H14"), ("H56", "H58"), ("H78", "H58"),
             ("H14", "H18"), ("H58", "H18")]
    return _ug(names, edges, cardinality)


def demo_graphs():
    """Name -> graph map for the CLI demo command."""
    return {
        "square4": square4(),
        "dag6": dag6(),
        "dag6b": dag6_b(),
        "dag6c": dag6_c(),
        "essential6": essential6(),
        "lattice3x3": lattice3x3(),
        "tree15": tree15(),
    }


def random_terms(g, seed, reference=None, interaction_scale=1.0, concentration=1.0):
    """Seeded admissible terms for a graph: Dirichlet-style conditionals and
    uniform log interactions on the non-reference blocks."""
    reference = resolve_reference(reference)
    rng = np.random.default_rng(seed)
    fixed = set(g.fixed_names)
    univariate = {}
    for name in g.random_names:
        card = g.cardinality(name)
        scope = tuple(n for n in g.parents(name) if n in fixed)
        shape = tuple(g.cardinality(n) for n in scope) + (card,)
        raw = rng.gamma(concentration, size=shape)
        probs = raw / raw.sum(axis=-1, keepdims=True)
        probs = 0.98 * probs + 0.02 / card
        univariate[name] = FactorTerm(
            kind=COND,
            variables=((name, card),),
            context=tuple((n, g.cardinality(n)) for n in scope),
            log_values=np.log(probs),
        )
    phi = {}
    for clique in g.cliques():
        if len(clique) < 2:
            continue
        members = g.sorted_names(clique)
        scopes = [set(g.parents(v)) & fixed for v in members]
        scope = g.sorted_names(set.intersection(*scopes)) if scopes else ()
        cards = [g.cardinality(n) for n in members]
        shape = tuple(g.cardinality(n) for n in scope) + tuple(cards)
        table = rng.uniform(-interaction_scale, interaction_scale, size=shape)
        for i, name in enumerate(members):
            idx = [slice(None)] * len(shape)
            idx[len(scope) + i] = reference.level(name)
            table[tuple(idx)] = 0.0
        phi[frozenset(members)] = FactorTerm(
            kind=PHI,
            variables=tuple((n, g.cardinality(n)) for n in members),
            context=tuple((n, g.cardinality(n)) for n in scope),
            log_values=table,
        )
    return univariate, phi


def random_model(g, seed, reference=None, interaction_scale=1.0, concentration=1.0):
    """A seeded random positive distribution inside the model of ``g``."""
    univariate, phi = random_terms(g, seed, reference, interaction_scale, concentration)
    return compose_from_terms(g, univariate, phi, reference)


def random_chain_model(g, seed, reference=None, interaction_scale=1.0,
                       concentration=1.0):
    """A seeded in-model joint for any chain graph (DAGs and UGs included).

    Draws admissible terms per block against the block's conditional graph
    and multiplies the block conditionals in topological order.
    """
    from .graphs import GraphError
    from .tabular import TabularDistribution

    if g.fixed_names:
        raise GraphError("chain-model generation expects all-random vertices")
    ok, diag = g.validate_chain_graph()
    if not ok:
        raise GraphError(diag)
    names = g.random_names
    pos = {n: i for i, n in enumerate(names)}
    shape = tuple(g.cardinality(n) for n in names)
    total = np.zeros(shape)
    entropy = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = entropy.spawn(len(g.blocks()))
    for child, block in zip(children, g.blocks()):
        cond_graph = g.conditional_graph(block)
        q = random_model(cond_graph, child, reference, interaction_scale, concentration)
        term_names = q.ctx_names + q.var_names
        order = sorted(range(len(term_names)), key=lambda i: pos[term_names[i]])
        arranged = np.transpose(q.log_table, order)
        embed_shape = [1] * len(names)
        for n in term_names:
            embed_shape[pos[n]] = g.cardinality(n)
        total += arranged.reshape(embed_shape)
    variables = tuple((n, g.cardinality(n)) for n in names)
    return TabularDistribution(variables, total)
