"""Chain-graph factorization, essential graphs, and equivalence-class scoring.

A chain graph factorizes block-recursively: an outer product of block
conditionals in topological block order, each factorized against its
conditional graph.  DAG likelihoods built on the essential graph of the
DAG coincide across the whole Markov equivalence class by construction,
which is what makes them usable for score-based structure comparison.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import config, fitscore
from .decomp import _Frame, lc_factorize
from .graphs import Graph, GraphError
from .tabular import DistributionError, SampleSet, resolve_reference


@dataclass(frozen=True)
class ChainFactorization:
    """Two-level factorization of a joint table over a chain graph."""

    graph: Graph
    blocks: tuple
    block_conditionals: tuple  # p(block | parents), one TabularDistribution per block
    per_block: tuple           # LCFactorization against each conditional graph

    def reconstruct_log_table(self):
        """log of the product of per-block reconstructions, on the joint grid."""
        names = self.graph.random_names
        frame = _Frame((), tuple((n, self.graph.cardinality(n)) for n in names))
        total = np.zeros(frame.shape)
        for factorization in self.per_block:
            block_table = factorization.reconstruct_log_table()
            ctx = factorization.context
            variables = factorization.variables
            pos = {n: names.index(n) for n, _ in ctx + variables}
            # conditional tables have parent axes first; permute into joint order
            term_names = [n for n, _ in ctx] + [n for n, _ in variables]
            order = sorted(range(len(term_names)), key=lambda i: pos[term_names[i]])
            arranged = np.transpose(block_table, order)
            shape = [1] * len(names)
            for n, c in ctx + variables:
                shape[pos[n]] = c
            total += arranged.reshape(shape)
        return total

    def max_deviation(self, p):
        return float(np.max(np.abs(self.reconstruct_log_table() - p.log_table)))


def cg_lc_factorize(p, g, reference=None, tol=None, max_diagnostic_size=None):
    """Factorize a joint table block-recursively against a chain graph.

    Every vertex must be random and the distribution context-free; each
    block conditional is factorized against the block's conditional graph.
    """
    if g.fixed_names:
        raise GraphError("chain-graph factorization expects all-random vertices")
    if p.ctx_names:
        raise DistributionError("chain-graph factorization expects a context-free table")
    if set(p.var_names) != set(g.random_names):
        raise DistributionError("distribution variables do not match the graph")
    ok, diag = g.validate_chain_graph()
    if not ok:
        raise GraphError(diag)
    blocks = g.blocks()
    conditionals, factors = [], []
    for block in blocks:
        parents = set()
        for v in block:
            parents |= set(g.parents(v))
        parents = g.sorted_names(parents - set(block))
        q = p.marginalize(tuple(block) + parents)
        if parents:
            q = q.to_conditional(parents)
        cond_graph = g.conditional_graph(block)
        factorization = lc_factorize(q, cond_graph, reference, tol, max_diagnostic_size)
        conditionals.append(q)
        factors.append(factorization)
    return ChainFactorization(g, blocks, tuple(conditionals), tuple(factors))


# --- DAG likelihoods -----------------------------------------------------------


def _family_counts(samples, g, name):
    parents = g.parents(name)
    cols = [samples.variables.index(n) for n in parents + (name,)]
    shape = tuple(g.cardinality(n) for n in parents + (name,))
    for col, member, card in zip(cols, parents + (name,), shape):
        if np.any(samples.rows[:, col] >= card):
            raise DistributionError(f"sample level out of range for {member!r}")
    counts = np.zeros(shape)
    weights = samples.weights if samples.weights is not None else np.ones(len(samples.rows))
    idx = tuple(samples.rows[:, c] for c in cols)
    np.add.at(counts, idx, weights)
    return counts


def dag_loglik(data, g):
    """Log-likelihood of a DAG's factorization.

    For a distribution input, the population form: the expectation under
    the table of the summed log Markov factors.  For samples, the maximized
    empirical log-likelihood with per-family maximum-likelihood conditional
    tables (zero-count cells contribute nothing).
    """
    if not g.is_dag() or g.fixed_names:
        raise GraphError("DAG likelihood requires a directed acyclic graph")
    if isinstance(data, SampleSet):
        missing = set(g.random_names) - set(data.variables)
        if missing:
            raise DistributionError(f"samples missing variables {sorted(missing)}")
        total = 0.0
        for name in g.random_names:
            counts = _family_counts(data, g, name)
            parent_totals = counts.sum(axis=-1, keepdims=True)
            mask = counts > 0
            with np.errstate(divide="ignore", invalid="ignore"):
                log_cond = np.where(mask, np.log(counts) - np.log(parent_totals), 0.0)
            total += float((counts * log_cond).sum())
        return total
    p = data
    if set(p.var_names) != set(g.random_names) or p.ctx_names:
        raise DistributionError("distribution does not match the graph's vertices")
    total = 0.0
    for name in g.random_names:
        family = g.parents(name) + (name,)
        marg = p.marginalize(family)
        log_joint = marg.log_table
        axis = marg.var_axis(name)
        log_parents = logsumexp(log_joint, axis=axis, keepdims=True)
        total += float((np.exp(log_joint) * (log_joint - log_parents)).sum())
    return total


# --- essential graphs (CPDAGs) ---------------------------------------------------


def essential_graph(g):
    """The essential graph of a DAG: compelled edges stay directed.

    Starts from the skeleton plus unshielded colliders and closes under the
    four standard orientation-propagation rules until fixpoint.
    """
    if not g.is_dag() or g.fixed_names:
        raise GraphError("essential graph requires a directed acyclic graph")
    arcs = set()
    for a, c, b in g.vstructures():
        arcs.add((a, c))
        arcs.add((b, c))
    edges = {frozenset((a, b)) for a, b in g.directed_edges}
    undirected = edges - {frozenset(a) for a in arcs}
    _meek_closure(g, arcs, undirected)
    out = g.with_edges(sorted(tuple(sorted(e)) for e in undirected), sorted(arcs))
    ok, diag = out.validate_chain_graph()
    if not ok:  # cannot happen for a DAG input
        raise GraphError(f"essential graph is not a chain graph: {diag}")
    return out


def _meek_closure(g, arcs, undirected):
    """Apply the four orientation rules to fixpoint, mutating the edge sets."""

    def adjacent(x, y):
        return (x, y) in arcs or (y, x) in arcs or frozenset((x, y)) in undirected

    def parents_of(y):
        return [x for x, t in arcs if t == y]

    def orient(x, y):
        undirected.discard(frozenset((x, y)))
        arcs.add((x, y))

    changed = True
    while changed:
        changed = False
        for edge in sorted(undirected, key=sorted):
            for x, y in (tuple(sorted(edge)), tuple(sorted(edge))[::-1]):
                if _rule_applies(g, arcs, undirected, adjacent, parents_of, x, y):
                    orient(x, y)
                    changed = True
                    break
            if changed:
                break
    return arcs, undirected


def _rule_applies(g, arcs, undirected, adjacent, parents_of, x, y):
    # R1: z -> x, x - y, z and y nonadjacent.
    for z in parents_of(x):
        if not adjacent(z, y):
            return True
    # R2: x -> z -> y with x - y.
    for z in parents_of(y):
        if (x, z) in arcs:
            return True
    # R3: x - u -> y and x - v -> y with u, v nonadjacent.
    ins = [u for u in parents_of(y) if frozenset((x, u)) in undirected]
    for u, v in itertools.combinations(sorted(ins), 2):
        if not adjacent(u, v):
            return True
    # R4: u -> v -> y with u - x, v adjacent to x, u and y nonadjacent.
    for v in parents_of(y):
        if not adjacent(v, x):
            continue
        for u in parents_of(v):
            if frozenset((u, x)) in undirected and not adjacent(u, y):
                return True
    return False


@dataclass(frozen=True)
class EquivalenceClass:
    essential: Graph
    members: tuple

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def enumerate_equivalence_class(essential):
    """All DAGs whose essential graph is the given one.

    Backtracks over orientations of the undirected edges, pruning
    assignments that create a directed cycle or a new unshielded collider,
    and verifies each completed member by recomputing its essential graph.
    """
    if essential.fixed_names:
        raise GraphError("equivalence classes are over all-random DAGs")
    free = sorted(tuple(sorted(e)) for e in essential.undirected_edges)
    if len(free) > config.MAX_FREE_EDGES:
        raise config.CapExceededError(
            f"{len(free)} undirected edges exceed the enumeration cap of "
            f"{config.MAX_FREE_EDGES}"
        )
    base = set(essential.directed_edges)
    members = []

    def creates_cycle(arcs, a, b):
        # does adding a -> b close a directed cycle, i.e. b reaches a?
        stack, seen = [b], set()
        succ = {}
        for x, y in arcs:
            succ.setdefault(x, []).append(y)
        while stack:
            v = stack.pop()
            if v == a:
                return True
            for u in succ.get(v, ()):
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return False

    def creates_collider(arcs, a, b):
        # new unshielded collider at b after adding a -> b
        for x, y in arcs:
            if y == b and x != a and not essential.adjacent(x, a):
                return True
        return False

    def extend(i, arcs):
        if i == len(free):
            members.append(tuple(sorted(arcs)))
            return
        a, b = free[i]
        for src, dst in ((a, b), (b, a)):
            if creates_cycle(arcs, src, dst) or creates_collider(arcs, src, dst):
                continue
            arcs.add((src, dst))
            extend(i + 1, arcs)
            arcs.discard((src, dst))

    extend(0, base)
    graphs = []
    for arcs in sorted(members):
        member = essential.with_edges((), arcs)
        if essential_graph(member) != essential:
            raise GraphError(
                "input is not an essential graph: a member's essential graph differs"
            )
        graphs.append(member)
    if not graphs:
        raise GraphError("input is not an essential graph: no acyclic orientation exists")
    return EquivalenceClass(essential, tuple(graphs))


# --- class-coherent scoring --------------------------------------------------------


@dataclass(frozen=True)
class ScoreResult:
    score: float
    loglik: float
    dimension: int
    n_rows: float
    essential: Graph

    def __float__(self):
        return float(self.score)


def class_coherent_score(samples, g, penalty="none", reference=None,
                         tol=1e-8, max_iter=20000):
    """Score a DAG (or CPDAG) identically across its Markov equivalence class.

    Maps the graph to its essential graph, fits each block conditional by
    maximum likelihood against the block's conditional graph, and returns
    the total log-likelihood minus an optional BIC penalty.  Every DAG in
    one class maps to the same essential graph, so the value is the same
    computation bit for bit.
    """
    if penalty not in ("none", "bic"):
        raise ValueError(f"unknown penalty {penalty!r}")
    if samples.n_rows == 0:
        raise DistributionError("empty sample set")
    essential = essential_graph(g) if g.is_dag() else g
    ok, diag = essential.validate_chain_graph()
    if not ok:
        raise GraphError(diag)
    reference = resolve_reference(reference)
    total_loglik = 0.0
    dimension = 0
    for block in essential.blocks():
        cond_graph = essential.conditional_graph(block)
        result = fitscore.fit_mle(cond_graph, samples, reference=reference,
                                  tol=tol, max_iter=max_iter)
        total_loglik += result.loglik
        dimension += fitscore.param_count(result.params)
    n = samples.total_weight()
    score = total_loglik
    if penalty == "bic":
        score -= 0.5 * dimension * np.log(n)
    return ScoreResult(float(score), float(total_loglik), int(dimension), n, essential)
