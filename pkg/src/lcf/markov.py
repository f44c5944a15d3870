"""Markov-property verification on exact tables.

Checks are exact arithmetic on the stored table, not statistical tests:
the deviation metric is the maximum absolute difference between the two
conditional probabilities a conditional-independence statement equates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import config
from .decomp import clique_context, phi_log_table
from .graphs import GraphError
from .tabular import DistributionError, resolve_reference

PAIRWISE = "pairwise"
GLOBAL = "global"
FACTORIZATION = "factorization"


@dataclass(frozen=True)
class MarkovReport:
    property: str
    violations: tuple
    passed: bool
    statements_checked: int = 0

    @classmethod
    def build(cls, prop, violations, statements_checked=0):
        violations = tuple(violations)
        return cls(prop, violations, not violations, statements_checked)


def _check_match(p, g):
    if set(p.var_names) != set(g.random_names) or set(p.ctx_names) != set(g.fixed_names):
        raise DistributionError(
            "distribution variables/context do not match the graph's random/fixed vertices"
        )


def _context_invariance(p, var, ctx_var):
    """max |p(var | all other variables, context) - same with ctx_var changed|."""
    axis_v = p.var_axis(var)
    cond = np.exp(p.log_table - logsumexp(p.log_table, axis=axis_v, keepdims=True))
    axis_w = p.ctx_names.index(ctx_var)
    return float(np.max(cond.max(axis=axis_w) - cond.min(axis=axis_w)))


def pairwise_markov_holds(p, g, tol=None):
    """Check every non-adjacent pair (random vertex, other vertex).

    For a random pair the statement is conditional independence given all
    remaining random variables (and the whole context); for a fixed partner
    it is invariance of the full conditional of the random vertex to that
    context coordinate.
    """
    _check_match(p, g)
    tol = config.resolve_tol(tol)
    violations = []
    checked = 0
    fixed = set(g.fixed_names)
    for i, v in enumerate(g.random_names):
        for z in g.names:
            if z == v or g.adjacent(v, z):
                continue
            if z in fixed:
                checked += 1
                dev = _context_invariance(p, v, z)
                if dev > tol:
                    violations.append((f"{v} invariant to {z}", dev))
            else:
                if g.random_names.index(z) <= i:
                    continue  # unordered random pairs once
                checked += 1
                rest = tuple(n for n in g.random_names if n not in (v, z))
                dev = p.ci_deviation((v,), (z,), rest)
                if dev > tol:
                    violations.append((f"{v} _||_ {z} | rest", dev))
    return MarkovReport.build(PAIRWISE, violations, checked)


def _separation_oracle(g):
    if g.is_cug():
        ug = g.undirected_part()
        return lambda a, b, c: ug.ug_separated(a, b, c)
    if g.is_dag():
        return g.d_separated
    raise GraphError(
        "global Markov checks support undirected/conditional undirected graphs and DAGs"
    )


def global_markov_holds(p, g, tol=None, max_conditioning=None, max_statements=None):
    """Check every separation statement the graph implies, up to the caps.

    Enumerates disjoint nonempty subsets A, B of the random vertices with
    conditioning sets C up to ``max_conditioning``; statements whose
    separation holds are tested for conditional independence on the table.
    """
    _check_match(p, g)
    tol = config.resolve_tol(tol)
    max_c = config.MAX_CONDITIONING_SET if max_conditioning is None else int(max_conditioning)
    cap = config.MAX_STATEMENTS if max_statements is None else int(max_statements)
    separated = _separation_oracle(g)
    names = g.random_names
    violations = []
    checked = 0

    def triples():
        # deterministic order; the cap bounds enumerated triples, so graphs
        # with few separations still terminate quickly
        for r_a in range(1, len(names)):
            for a in itertools.combinations(names, r_a):
                rest_a = [n for n in names if n not in a]
                for r_b in range(1, len(rest_a) + 1):
                    for b in itertools.combinations(rest_a, r_b):
                        if a > b:  # each unordered {A,B} pair once
                            continue
                        rest_ab = [n for n in rest_a if n not in b]
                        for r_c in range(0, min(max_c, len(rest_ab)) + 1):
                            yield from ((a, b, c) for c in
                                        itertools.combinations(rest_ab, r_c))

    for enumerated, (a, b, c) in enumerate(triples()):
        if enumerated >= cap:
            break
        if not separated(a, b, c):
            continue
        checked += 1
        dev = p.ci_deviation(a, b, c)
        if dev > tol:
            stmt = f"{{{','.join(a)}}} _||_ {{{','.join(b)}}} | {{{','.join(c)}}}"
            violations.append((stmt, dev))
    return MarkovReport.build(GLOBAL, violations, checked)


def hammersley_clifford_check(p, g, reference=None, tol=None, max_subset_size=None):
    """Numerical factorization check for a pairwise-Markov table.

    Verifies that (i) the interaction term of every non-clique subset
    vanishes and (ii) each clique's interaction term, computed over the
    full context, does not vary with fixed coordinates outside the clique's
    common-parent scope.  A pairwise-Markov failure is reported as a
    precondition violation rather than raised.
    """
    _check_match(p, g)
    tol = config.resolve_tol(tol)
    reference = resolve_reference(reference)
    violations = []
    checked = 0

    pre = pairwise_markov_holds(p, g, tol)
    checked += pre.statements_checked
    for stmt, dev in pre.violations:
        violations.append((f"precondition pairwise: {stmt}", dev))

    clique_set = {frozenset(c) for c in g.cliques()}
    if max_subset_size is None:
        # same scan guard as the factorization diagnostic
        max_size = len(p.variables) if 3 ** len(p.variables) <= 250_000 else 4
    else:
        max_size = int(max_subset_size)
    for r in range(2, max_size + 1):
        for subset in itertools.combinations(p.var_names, r):
            checked += 1
            table = phi_log_table(p, subset, reference)
            if frozenset(subset) in clique_set:
                scope = set(clique_context(g, subset))
                for ctx_var in p.ctx_names:
                    if ctx_var in scope:
                        continue
                    axis = p.ctx_names.index(ctx_var)
                    dev = float(np.max(table.max(axis=axis) - table.min(axis=axis)))
                    if dev > tol:
                        violations.append(
                            (f"phi {{{','.join(subset)}}} varies with {ctx_var}", dev))
            else:
                dev = float(np.max(np.abs(table)))
                if dev > tol:
                    violations.append((f"phi {{{','.join(subset)}}} nonzero", dev))
    return MarkovReport.build(FACTORIZATION, violations, checked)
