"""Exact factor decompositions of positive categorical distributions.

The machinery here expresses a joint table as a product of univariate
conditional terms and higher-order interaction terms (generalized odds
ratios) anchored at per-variable reference levels.  Interaction terms are
computed by inclusion-exclusion over the subset lattice (Moebius inversion
of log probabilities pinned at the references), which makes them exact
functionals of the table.  Against a graph, the interaction terms of
non-cliques vanish exactly when the distribution is Markov, which is what
`lc_factorize` checks and exploits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import config
from .graphs import Graph, GraphError
from .tabular import (
    DistributionError,
    ReferenceAssignment,
    TabularDistribution,
    resolve_reference,
)

PHI = "phi"
COND = "cond"
ODDS = "or"


@dataclass(frozen=True)
class FactorTerm:
    """One factor of a decomposition.

    ``kind`` is "phi" for an interaction term (log value 0 whenever any
    coordinate sits at its reference level), "cond" for a univariate
    conditional (exponentials sum to 1 over the variable's levels per
    context state), or "or" for a block odds-ratio table.  ``log_values``
    has the context axes first, then one axis per variable, both in
    canonical order.
    """

    kind: str
    variables: tuple
    context: tuple
    log_values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.log_values, dtype=float)
        shape = tuple(c for _, c in self.context) + tuple(c for _, c in self.variables)
        if values.shape != shape:
            raise DistributionError(
                f"term over {self.var_names} has shape {values.shape}, expected {shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "log_values", values)

    @property
    def var_names(self):
        return tuple(n for n, _ in self.variables)

    @property
    def ctx_names(self):
        return tuple(n for n, _ in self.context)

    def value(self, v_state, w_state=()):
        return float(self.log_values[tuple(w_state) + tuple(v_state)])


@dataclass(frozen=True)
class CheckLine:
    name: str
    passed: bool
    deviation: float


@dataclass(frozen=True)
class CheckReport:
    lines: tuple

    @property
    def passed(self):
        return all(line.passed for line in self.lines)

    def failures(self):
        return tuple(line for line in self.lines if not line.passed)


@dataclass(frozen=True)
class PhiDiagnostic:
    """A non-clique subset whose interaction term deviates from 1."""

    subset: tuple
    max_abs_log: float


# --- reference pinning and interaction tables --------------------------------


def _reference_levels(p, reference):
    reference = resolve_reference(reference)
    reference.validate(p.variables)
    return {n: reference.level(n) for n, _ in p.variables}


def _h_slice(p, subset, ref_levels):
    """log p with the subset's variables free and all others pinned at reference.

    Returns an array with the context axes first, then one axis per subset
    member in canonical order.
    """
    member = set(subset)
    idx = [slice(None)] * len(p.context)
    idx += [slice(None) if n in member else ref_levels[n] for n in p.var_names]
    return p.log_table[tuple(idx)]


def _canonical_subset(p, subset):
    subset = tuple(subset)
    unknown = set(subset) - set(p.var_names)
    if unknown:
        raise DistributionError(f"unknown variables {sorted(unknown)}")
    if len(set(subset)) != len(subset):
        raise DistributionError("duplicate variables in subset")
    return tuple(n for n in p.var_names if n in set(subset))


def phi_log_table(p, subset, reference=None):
    """Interaction term log phi_C over the states of C (context axes first).

    Computed by the alternating subset sum over pinned-reference log
    probabilities; the result is exactly zero on every slice where some
    coordinate equals its reference level.
    """
    ref_levels = _reference_levels(p, reference)
    subset = _canonical_subset(p, subset)
    config.check_subset_cap(len(subset))
    cards = {n: p.cardinality(n) for n in subset}
    out = np.zeros(p.ctx_shape + tuple(cards[n] for n in subset))
    for r in range(len(subset) + 1):
        for b in itertools.combinations(subset, r):
            sign = 1.0 if (len(subset) - r) % 2 == 0 else -1.0
            h = _h_slice(p, b, ref_levels)
            member = set(b)
            shape = p.ctx_shape + tuple(cards[n] if n in member else 1 for n in subset)
            out += sign * h.reshape(shape)
    return out


def h_term(p, subset, v_state, w_state=(), reference=None):
    """log p(v_C, rest-at-reference | w) for the canonical ordering of C."""
    ref_levels = _reference_levels(p, reference)
    subset = _canonical_subset(p, subset)
    v_state = tuple(int(s) for s in v_state)
    if len(v_state) != len(subset):
        raise DistributionError("state arity does not match the subset")
    given = dict(zip(subset, v_state))
    full = tuple(given.get(n, ref_levels[n]) for n in p.var_names)
    return p.evaluate(full, w_state)


def phi_term(p, subset, v_state, w_state=(), reference=None):
    """log phi_C at one state, by the explicit alternating subset sum."""
    subset = _canonical_subset(p, subset)
    config.check_subset_cap(len(subset))
    v_state = tuple(int(s) for s in v_state)
    if len(v_state) != len(subset):
        raise DistributionError("state arity does not match the subset")
    state = dict(zip(subset, v_state))
    total = 0.0
    for r in range(len(subset) + 1):
        for b in itertools.combinations(subset, r):
            sign = 1.0 if (len(subset) - r) % 2 == 0 else -1.0
            total += sign * h_term(p, b, tuple(state[n] for n in b), w_state, reference)
    return total


def phi_extension_ratio(p, subset, extra, v_state, w_state=(), reference=None):
    """log phi of C + {extra} via the one-variable extension recursion.

    Evaluates the alternating sum over subsets of C twice, once with the
    extra variable at its given level and once at its reference level, and
    returns the difference; this equals ``phi_term`` on the enlarged set.
    """
    subset = _canonical_subset(p, subset)
    if extra in subset:
        raise DistributionError(f"{extra!r} already belongs to the subset")
    enlarged = _canonical_subset(p, subset + (extra,))
    v_state = tuple(int(s) for s in v_state)
    if len(v_state) != len(enlarged):
        raise DistributionError("state arity does not match the enlarged subset")
    state = dict(zip(enlarged, v_state))
    extra_level = state[extra]
    with_extra, at_reference = 0.0, 0.0
    for r in range(len(subset) + 1):
        for b in itertools.combinations(subset, r):
            sign = 1.0 if (len(subset) - r) % 2 == 0 else -1.0
            states_b = tuple(state[n] for n in b)
            joined = _canonical_subset(p, b + (extra,))
            full = dict(zip(b, states_b))
            full[extra] = extra_level
            with_extra += sign * h_term(p, joined, tuple(full[n] for n in joined),
                                        w_state, reference)
            at_reference += sign * h_term(p, b, states_b, w_state, reference)
    return with_extra - at_reference


# --- full-lattice decomposition -----------------------------------------------


def lauritzen_decompose(p, reference=None):
    """Every interaction term phi_C for C over the full subset lattice.

    Keys are frozensets of variable names (the empty set included); the
    product of all terms reproduces the table pointwise.
    """
    config.check_subset_cap(len(p.variables))
    reference = resolve_reference(reference)
    terms = {}
    for r in range(len(p.variables) + 1):
        for subset in itertools.combinations(p.var_names, r):
            table = phi_log_table(p, subset, reference)
            terms[frozenset(subset)] = FactorTerm(
                kind=PHI,
                variables=tuple((n, p.cardinality(n)) for n in subset),
                context=p.context,
                log_values=table,
            )
    return terms


def decomposition_log_table(p, terms):
    """Sum of the term log values on the full state grid of ``p``."""
    total = np.zeros(p.ctx_shape + p.var_shape)
    for term in terms.values():
        total += _embed_term(term, p)
    return total


def _embed_term(term, p):
    """Broadcast a term's table into the (context, variables) frame of ``p``."""
    ctx_pos = {n: i for i, n in enumerate(p.ctx_names)}
    var_pos = {n: i for i, n in enumerate(p.var_names)}
    shape = [1] * (len(p.context) + len(p.variables))
    for n, c in term.context:
        shape[ctx_pos[n]] = c
    for n, c in term.variables:
        shape[len(p.context) + var_pos[n]] = c
    # Move term axes into canonical positions before reshaping.
    order = sorted(range(len(term.context)), key=lambda i: ctx_pos[term.ctx_names[i]])
    order += [len(term.context) + i
              for i in sorted(range(len(term.variables)),
                              key=lambda i: var_pos[term.var_names[i]])]
    values = np.transpose(term.log_values, order)
    return values.reshape(shape)


# --- generalized odds ratios and ordered decomposition --------------------------


def generalized_odds_ratio(p, block1, block2, w_state=(), pinned=None, reference=None):
    """log of the block odds ratio between two variable blocks.

    ``block1`` and ``block2`` map variable names to levels.  All remaining
    variables are pinned at their reference levels unless ``pinned`` gives
    explicit levels for them.  The value is the four-point log ratio
    comparing each block at its given state versus its reference state.
    """
    block1, block2 = dict(block1), dict(block2)
    if set(block1) & set(block2):
        raise DistributionError("odds-ratio blocks must be disjoint")
    ref_levels = _reference_levels(p, reference)
    pinned = dict(pinned or {})
    overlap = (set(block1) | set(block2)) & set(pinned)
    if overlap:
        raise DistributionError(f"pinned variables {sorted(overlap)} overlap the blocks")
    base = {n: pinned.get(n, ref_levels[n]) for n, _ in p.variables}

    def at(b1_on, b2_on):
        state = dict(base)
        state.update(block1 if b1_on else {n: ref_levels[n] for n in block1})
        state.update(block2 if b2_on else {n: ref_levels[n] for n in block2})
        return p.evaluate(tuple(state[n] for n in p.var_names), w_state)

    return at(True, True) + at(False, False) - at(True, False) - at(False, True)


@dataclass(frozen=True)
class ChenDecomposition:
    """Ordered decomposition: univariate conditionals, block odds ratios, Z.

    ``or_terms[k-1]`` is the odds-ratio table between the k-th variable of
    ``order`` and its predecessors (later variables pinned at reference);
    its value is 0 in the log domain whenever the k-th variable or the
    whole predecessor block sits at reference.  ``log_z`` is the closed-form
    normalizer per context state; ``log_z_direct`` the brute-force sum.
    """

    order: tuple
    univariate_terms: dict
    or_terms: tuple
    log_z: np.ndarray
    log_z_direct: np.ndarray

    def reconstruct_log_table(self, p):
        total = np.zeros(p.ctx_shape + p.var_shape)
        for term in self.univariate_terms.values():
            total += _embed_term(term, p)
        for term in self.or_terms:
            total += _embed_term(term, p)
        z = self.log_z.reshape(p.ctx_shape + (1,) * len(p.variables))
        return total - z

    def max_deviation(self, p):
        return float(np.max(np.abs(self.reconstruct_log_table(p) - p.log_table)))


def univariate_reference_conditionals(p, reference=None):
    """p(v_k | rest-at-reference, w) for every variable, as cond terms."""
    ref_levels = _reference_levels(p, reference)
    terms = {}
    for name, card in p.variables:
        h = _h_slice(p, (name,), ref_levels)
        log_u = h - logsumexp(h, axis=-1, keepdims=True)
        terms[name] = FactorTerm(
            kind=COND,
            variables=((name, card),),
            context=p.context,
            log_values=log_u,
        )
    return terms


def chen_decompose(p, order, reference=None):
    """Decompose ``p`` along a variable order into conditionals and odds ratios.

    Valid for any order; the product of the univariate terms and the
    odds-ratio terms, divided by Z, reproduces the table pointwise.
    """
    order = tuple(order)
    if sorted(order) != sorted(p.var_names):
        raise DistributionError("order must be a permutation of the variables")
    ref_levels = _reference_levels(p, reference)
    reference = resolve_reference(reference)
    univariate = univariate_reference_conditionals(p, reference)

    or_terms = []
    for k in range(2, len(order) + 1):
        prefix, pivot = order[:k - 1], order[k - 1]
        members = _canonical_subset(p, prefix + (pivot,))
        cards = {n: p.cardinality(n) for n in members}
        shape = p.ctx_shape + tuple(cards[n] for n in members)

        def embed(names):
            member = set(names)
            h = _h_slice(p, names, ref_levels)
            s = p.ctx_shape + tuple(cards[n] if n in member else 1 for n in members)
            return h.reshape(s)

        table = (embed(members) + embed(())
                 - embed(_canonical_subset(p, (pivot,)))
                 - embed(_canonical_subset(p, prefix)))
        or_terms.append(FactorTerm(
            kind=ODDS,
            variables=tuple((n, cards[n]) for n in members),
            context=p.context,
            log_values=np.broadcast_to(table, shape).copy(),
        ))

    log_phi_empty = _h_slice(p, (), ref_levels)
    ref_mass = 0.0
    for name, _ in p.variables:
        ref_mass = ref_mass + univariate[name].log_values[..., ref_levels[name]]
    log_z = np.asarray(ref_mass - log_phi_empty, dtype=float).reshape(p.ctx_shape)

    total = np.zeros(p.ctx_shape + p.var_shape)
    for term in univariate.values():
        total += _embed_term(term, p)
    for term in or_terms:
        total += _embed_term(term, p)
    axes = tuple(range(len(p.context), total.ndim))
    log_z_direct = np.asarray(logsumexp(total, axis=axes), dtype=float).reshape(p.ctx_shape)
    return ChenDecomposition(order, univariate, tuple(or_terms), log_z, log_z_direct)


# --- factorization against a graph ---------------------------------------------


@dataclass(frozen=True)
class LCFactorization:
    """Clique factorization of a distribution against a conditional graph.

    Holds one univariate conditional per random vertex (neighbors pinned at
    reference, scoped to the vertex's fixed parents) and one interaction
    term per clique of size >= 2 (scoped to the clique's common fixed
    parents).  ``log_z`` is the closed-form normalizer per full context
    state.  ``diagnostics`` lists non-clique subsets whose interaction
    terms deviate from 1, which is empty iff the table is Markov within
    tolerance over the scanned subset sizes.
    """

    graph: Graph
    reference: ReferenceAssignment
    univariate_terms: dict
    phi_terms: dict
    log_phi_empty: np.ndarray
    log_z: np.ndarray
    diagnostics: tuple = ()
    checked_subset_size: int = 0

    @property
    def context(self):
        return tuple((n, self.graph.cardinality(n)) for n in self.graph.fixed_names)

    @property
    def variables(self):
        return tuple((n, self.graph.cardinality(n)) for n in self.graph.random_names)

    def _frame(self):
        return _Frame(self.context, self.variables)

    def reconstruct_log_table(self):
        """log of the term product over the full state grid, minus log Z."""
        frame = self._frame()
        total = np.zeros(frame.shape)
        for term in self.univariate_terms.values():
            total += _embed_term(term, frame)
        for term in self.phi_terms.values():
            total += _embed_term(term, frame)
        z = self.log_z.reshape(frame.ctx_shape + (1,) * len(self.variables))
        return total - z

    def max_deviation(self, p):
        return float(np.max(np.abs(self.reconstruct_log_table() - p.log_table)))

    def to_distribution(self):
        table = self.reconstruct_log_table()
        axes = tuple(range(len(self.context), table.ndim))
        norm = logsumexp(table, axis=axes, keepdims=True) if self.variables else 0.0
        return TabularDistribution(self.variables, table - norm, context=self.context)


class _Frame:
    """Minimal stand-in exposing the shape attributes `_embed_term` needs."""

    def __init__(self, context, variables):
        self.context = tuple(context)
        self.variables = tuple(variables)
        self.ctx_names = tuple(n for n, _ in self.context)
        self.var_names = tuple(n for n, _ in self.variables)
        self.ctx_shape = tuple(c for _, c in self.context)
        self.var_shape = tuple(c for _, c in self.variables)
        self.shape = self.ctx_shape + self.var_shape


def _check_alignment(p, g):
    if p.var_names != g.random_names:
        raise DistributionError(
            f"distribution variables {p.var_names} do not match the graph's random "
            f"vertices {g.random_names} (same names in the same order required)"
        )
    if p.ctx_names != g.fixed_names:
        raise DistributionError(
            f"distribution context {p.ctx_names} does not match the graph's fixed "
            f"vertices {g.fixed_names}"
        )
    for n, c in p.variables + p.context:
        if g.cardinality(n) != c:
            raise DistributionError(f"cardinality mismatch for {n!r}")


def _reduce_context(table, full_ctx_names, keep_names, n_var_axes):
    """Pin out-of-scope context axes at state 0."""
    keep = set(keep_names)
    idx = tuple(slice(None) if n in keep else 0 for n in full_ctx_names)
    return table[idx + (slice(None),) * n_var_axes]


def clique_context(g, clique):
    """Common fixed parents of the clique's members, in canonical order."""
    members = list(clique)
    fixed = set(g.fixed_names)
    scopes = [set(g.parents(v)) & fixed for v in members]
    common = set.intersection(*scopes) if scopes else set()
    return g.sorted_names(common)


def lc_factorize(p, g, reference=None, tol=None, max_diagnostic_size=None):
    """Factorize ``p`` against the cliques of ``g``.

    Returns the univariate conditional terms (one per random vertex, with
    the vertex's neighbors pinned at reference), interaction terms for all
    cliques of size >= 2, and the closed-form normalizer.  Non-clique
    subsets up to ``max_diagnostic_size`` are scanned; any whose
    interaction term exceeds ``tol`` is reported in ``diagnostics`` rather
    than raised, since the factorization of a non-Markov table is still
    informative (it simply fails reconstruction).  The default scan covers
    every subset while that stays cheap and falls back to subsets of size
    at most 4 on larger variable sets; pass an explicit size to override.
    """
    _check_alignment(p, g)
    if not g.is_cug():
        raise GraphError("factorization requires an undirected or conditional undirected graph")
    config.check_subset_cap(len(p.variables))
    tol = config.resolve_tol(tol)
    reference = resolve_reference(reference)
    ref_levels = _reference_levels(p, reference)

    univariate = {}
    for name, card in p.variables:
        h = _h_slice(p, (name,), ref_levels)
        log_u = h - logsumexp(h, axis=-1, keepdims=True)
        scope = tuple(n for n in g.parents(name) if n in set(g.fixed_names))
        reduced = _reduce_context(log_u, p.ctx_names, scope, 1)
        univariate[name] = FactorTerm(
            kind=COND,
            variables=((name, card),),
            context=tuple((n, p.cardinality(n)) for n in scope),
            log_values=reduced,
        )

    clique_set = {frozenset(c) for c in g.cliques()}
    phi_terms = {}
    for clique in sorted((c for c in clique_set if len(c) >= 2),
                         key=lambda c: (len(c), tuple(sorted(c)))):
        members = _canonical_subset(p, tuple(clique))
        table = phi_log_table(p, members, reference)
        scope = clique_context(g, members)
        reduced = _reduce_context(table, p.ctx_names, scope, len(members))
        phi_terms[clique] = FactorTerm(
            kind=PHI,
            variables=tuple((n, p.cardinality(n)) for n in members),
            context=tuple((n, p.cardinality(n)) for n in scope),
            log_values=reduced,
        )

    log_phi_empty = np.asarray(_h_slice(p, (), ref_levels), dtype=float).reshape(p.ctx_shape)
    ref_mass = np.zeros(p.ctx_shape)
    frame = _Frame(p.context, ())
    for name, _ in p.variables:
        term = univariate[name]
        at_ref = FactorTerm(
            kind=COND,
            variables=(),
            context=term.context,
            log_values=term.log_values[..., ref_levels[name]],
        )
        ref_mass = ref_mass + _embed_term(at_ref, frame)
    log_z = ref_mass - log_phi_empty

    if max_diagnostic_size is None:
        # the full scan costs ~3^K array slices; beyond that, low-order
        # interactions are still scanned and higher orders are skipped
        max_size = len(p.variables) if 3 ** len(p.variables) <= 250_000 else 4
    else:
        max_size = int(max_diagnostic_size)
    diagnostics = []
    for r in range(2, max_size + 1):
        for subset in itertools.combinations(p.var_names, r):
            if frozenset(subset) in clique_set:
                continue
            table = phi_log_table(p, subset, reference)
            dev = float(np.max(np.abs(table)))
            if dev > tol:
                diagnostics.append(PhiDiagnostic(subset, dev))
    diagnostics.sort(key=lambda d: (len(d.subset), d.subset))

    return LCFactorization(
        graph=g,
        reference=reference,
        univariate_terms=univariate,
        phi_terms=phi_terms,
        log_phi_empty=log_phi_empty,
        log_z=log_z,
        diagnostics=tuple(diagnostics),
        checked_subset_size=max_size,
    )


# --- term admissibility and composition ---------------------------------------


def check_terms(univariate_terms, phi_terms, reference=None, tol=None):
    """Admissibility checks shared by `verify_restrictions` and composition."""
    tol = config.resolve_tol(tol)
    reference = resolve_reference(reference)
    lines = []
    for name in sorted(univariate_terms):
        term = univariate_terms[name]
        finite = bool(np.all(np.isfinite(term.log_values)))
        if finite:
            norm = logsumexp(term.log_values, axis=-1)
            dev = float(np.max(np.abs(norm)))
        else:
            dev = np.inf
        lines.append(CheckLine(f"cond {name} normalized", finite and dev <= tol, dev))
    for clique in sorted(phi_terms, key=lambda c: (len(c), tuple(sorted(c)))):
        term = phi_terms[clique]
        label = "{" + ",".join(term.var_names) + "}"
        finite = bool(np.all(np.isfinite(term.log_values)))
        dev = 0.0
        for i, (name, _) in enumerate(term.variables):
            axis = len(term.context) + i
            sl = [slice(None)] * term.log_values.ndim
            sl[axis] = reference.level(name)
            block = term.log_values[tuple(sl)]
            if block.size:
                dev = max(dev, float(np.max(np.abs(block))))
        if not finite:
            dev = np.inf
        lines.append(CheckLine(f"phi {label} reference-slice", finite and dev <= tol, dev))
    return CheckReport(tuple(lines))


def verify_restrictions(factorization, tol=None):
    """Per-term admissibility report for a factorization (or raw term maps)."""
    if isinstance(factorization, LCFactorization):
        return check_terms(factorization.univariate_terms, factorization.phi_terms,
                           factorization.reference, tol)
    univariate_terms, phi_terms, reference = factorization
    return check_terms(univariate_terms, phi_terms, reference, tol)


def compose_from_terms(g, univariate_terms, phi_terms, reference=None, tol=None):
    """Build the distribution whose factorization has exactly these terms.

    Inputs must be admissible: conditionals normalized, interaction terms 1
    on every reference slice.  Any finite admissible assignment yields a
    valid positive member of the graph's model, with Z computed by explicit
    summation; factorizing the result returns the inputs.
    """
    reference = resolve_reference(reference)
    missing = set(g.random_names) - set(univariate_terms)
    if missing:
        raise DistributionError(f"missing univariate terms for {sorted(missing)}")
    cliques = {frozenset(c) for c in g.cliques() if len(c) >= 2}
    extraneous = {frozenset(c) for c in phi_terms} - cliques
    if extraneous:
        bad = sorted(tuple(sorted(c)) for c in extraneous)
        raise DistributionError(f"interaction terms for non-cliques: {bad}")
    report = check_terms(univariate_terms, phi_terms, reference, tol)
    if not report.passed:
        bad = ", ".join(f"{line.name} (deviation {line.deviation:.3g})"
                        for line in report.failures())
        raise DistributionError(f"inadmissible terms: {bad}")

    frame = _Frame(
        tuple((n, g.cardinality(n)) for n in g.fixed_names),
        tuple((n, g.cardinality(n)) for n in g.random_names),
    )
    total = np.zeros(frame.shape)
    for name in g.random_names:
        total += _embed_term(univariate_terms[name], frame)
    for term in phi_terms.values():
        total += _embed_term(term, frame)
    axes = tuple(range(len(frame.context), total.ndim))
    log_z = logsumexp(total, axis=axes, keepdims=True)
    return TabularDistribution(frame.variables, total - log_z, context=frame.context)


# --- two-variable reconstruction identities -------------------------------------


def _context_slice(table, w_state, extra_axes):
    w_state = tuple(int(s) for s in w_state)
    return np.asarray(table)[w_state + (slice(None),) * extra_axes]


def reconstruct_conditional(univ1, or_table, v2_state, w_state=()):
    """p(v1 | v2, w) from p(v1 | v2*, w) and the odds-ratio table.

    All inputs are linear-domain arrays: ``univ1`` with a trailing v1 axis,
    ``or_table`` with trailing (v1, v2) axes.
    """
    u = _context_slice(univ1, w_state, 1)
    o = _context_slice(or_table, w_state, 2)[:, int(v2_state)]
    r = u * o
    return r / r.sum()


def reconstruct_marginal(univ1, univ2, or_table, w_state=()):
    """p(v2 | w) from both reference conditionals and the odds-ratio table."""
    u1 = _context_slice(univ1, w_state, 1)
    u2 = _context_slice(univ2, w_state, 1)
    o = _context_slice(or_table, w_state, 2)
    s = u1 @ o
    r = u2 * s
    return r / r.sum()


def reference_conditional_from_marginal(marg2, univ1, or_table, w_state=()):
    """p(v2 | v1*, w) from the v2 marginal, inverting `reconstruct_marginal`."""
    m2 = _context_slice(marg2, w_state, 1)
    u1 = _context_slice(univ1, w_state, 1)
    o = _context_slice(or_table, w_state, 2)
    s = u1 @ o
    r = m2 / s
    return r / r.sum()


# --- report format --------------------------------------------------------------
#
# One block per term: a `term phi {C}`, `term cond <v>`, or `term or {C}`
# header followed by state/value lines (linear domain, 12 significant
# digits) in canonical state order; `Z <context-state> <value>` lines; and
# `check <name> pass|fail <max-deviation>` trailers.


def term_header(term):
    if term.kind == COND:
        return f"term cond {term.var_names[0]}"
    label = "{" + ",".join(term.var_names) + "}"
    return f"term {term.kind} {label}"


def term_lines(term):
    lines = [term_header(term)]
    ctx_shape = tuple(c for _, c in term.context)
    var_shape = tuple(c for _, c in term.variables)
    for ctx_state in np.ndindex(ctx_shape):
        for v_state in np.ndindex(var_shape):
            state = ",".join(str(s) for s in v_state)
            if ctx_state:
                state += "|" + ",".join(str(s) for s in ctx_state)
            value = float(np.exp(term.log_values[ctx_state + v_state]))
            lines.append(f"{state} {value:.12g}")
    return lines


def z_lines(log_z, ctx_shape):
    log_z = np.asarray(log_z, dtype=float).reshape(tuple(ctx_shape))
    lines = []
    if not ctx_shape:
        return [f"Z - {float(np.exp(log_z)):.12g}"]
    for ctx_state in np.ndindex(tuple(ctx_shape)):
        state = ",".join(str(s) for s in ctx_state)
        lines.append(f"Z {state} {float(np.exp(log_z[ctx_state])):.12g}")
    return lines


def check_line(name, passed, deviation):
    return f"check {name} {'pass' if passed else 'fail'} {float(deviation):.6g}"
