"""Non-redundant log-linear parameterization and exact-gradient fitting.

Parameters use corner (reference-cell) coding: per random vertex a vector
of log-ratios against the reference level, per clique of size >= 2 an
array over non-reference level combinations, each replicated over the
states of the term's fixed-parent scope.  Setting everything to zero gives
the uniform distribution; any finite values give a valid in-model
distribution, and the parameter-to-distribution map is injective.

The likelihood is an exponential family in these parameters with the
normalizer computed by full enumeration per context state, so gradients
(observed minus expected sufficient-statistic proportions) are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .decomp import (
    COND,
    PHI,
    FactorTerm,
    clique_context,
    compose_from_terms,
    lc_factorize,
)
from .graphs import Graph, GraphError
from .tabular import DistributionError, SampleSet, resolve_reference

FREE = "free"
TRANSFORMED_LINEAR = "transformed_linear"


@dataclass(frozen=True)
class ModelParams:
    """Free parameters of the clique model of ``graph``.

    ``univariate[v]`` has shape (fixed-parent cards..., cardinality - 1):
    log-ratios of the non-reference levels against the reference.  For the
    free family, ``interaction[C]`` has shape (common-parent cards...,
    then cardinality - 1 per member): the log interaction values at
    non-reference level combinations.  For the transformed-linear family it
    is a single coefficient per context state, and ``scores[v]`` holds the
    per-level score values (level index by default).
    """

    graph: Graph
    reference: object
    family: str
    univariate: dict
    interaction: dict
    scores: dict | None = None

    def __post_init__(self):
        if self.family not in (FREE, TRANSFORMED_LINEAR):
            raise ValueError(f"unknown family {self.family!r}")


def _univariate_scope(g, name):
    return tuple(n for n in g.parents(name) if n in set(g.fixed_names))


def _interaction_cliques(g):
    return sorted(({frozenset(c) for c in g.cliques() if len(c) >= 2}),
                  key=lambda c: (len(c), tuple(sorted(c))))


def _score_table(m, name):
    card = m.graph.cardinality(name)
    if m.scores and name in m.scores:
        table = np.asarray(m.scores[name], dtype=float)
        if table.shape != (card,):
            raise DistributionError(f"score table for {name!r} must have {card} entries")
        return table
    return np.arange(card, dtype=float)


def zero_params(g, reference=None, family=FREE, scores=None):
    """All-zero parameters: the uniform joint for every context state."""
    reference = resolve_reference(reference)
    univariate = {}
    for name in g.random_names:
        scope_shape = tuple(g.cardinality(n) for n in _univariate_scope(g, name))
        univariate[name] = np.zeros(scope_shape + (g.cardinality(name) - 1,))
    interaction = {}
    for clique in _interaction_cliques(g):
        members = g.sorted_names(clique)
        scope_shape = tuple(g.cardinality(n) for n in clique_context(g, members))
        if family == FREE:
            block = tuple(g.cardinality(n) - 1 for n in members)
            interaction[clique] = np.zeros(scope_shape + block)
        else:
            interaction[clique] = np.zeros(scope_shape)
    return ModelParams(g, reference, family, univariate, interaction, scores)


def param_count(m):
    """Exact number of free real parameters."""
    total = 0
    for table in m.univariate.values():
        total += table.size
    for table in m.interaction.values():
        total += table.size
    return total


def pack(m):
    """Deterministic flat vector of all parameters."""
    parts = [m.univariate[n].ravel() for n in m.graph.random_names]
    parts += [m.interaction[c].ravel() for c in _interaction_cliques(m.graph)]
    return np.concatenate(parts) if parts else np.zeros(0)


def unpack(m, vector):
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (param_count(m),):
        raise DistributionError(f"expected a parameter vector of length {param_count(m)}")
    univariate, interaction = {}, {}
    pos = 0
    for name in m.graph.random_names:
        table = m.univariate[name]
        univariate[name] = vector[pos:pos + table.size].reshape(table.shape)
        pos += table.size
    for clique in _interaction_cliques(m.graph):
        table = m.interaction[clique]
        interaction[clique] = vector[pos:pos + table.size].reshape(table.shape)
        pos += table.size
    return replace(m, univariate=univariate, interaction=interaction)


def _nonref_levels(card, ref_level):
    return [lv for lv in range(card) if lv != ref_level]


def _phi_tables(m):
    """Interaction parameter blocks expanded into full admissible phi terms."""
    g = m.graph
    reference = resolve_reference(m.reference)
    terms = {}
    for clique in _interaction_cliques(g):
        members = g.sorted_names(clique)
        scope = clique_context(g, members)
        scope_shape = tuple(g.cardinality(n) for n in scope)
        cards = [g.cardinality(n) for n in members]
        table = np.zeros(scope_shape + tuple(cards))
        if m.family == FREE:
            nonref = [_nonref_levels(c, reference.level(n))
                      for n, c in zip(members, cards)]
            idx = (Ellipsis,) + np.ix_(*nonref)
            table[idx] = m.interaction[clique]
        else:
            stat = np.ones(tuple(cards))
            for i, name in enumerate(members):
                scores = _score_table(m, name)
                delta = scores - scores[reference.level(name)]
                shape = [1] * len(members)
                shape[i] = cards[i]
                stat = stat * delta.reshape(shape)
            gamma = m.interaction[clique].reshape(scope_shape + (1,) * len(members))
            table = gamma * stat
        terms[clique] = FactorTerm(
            kind=PHI,
            variables=tuple((n, g.cardinality(n)) for n in members),
            context=tuple((n, g.cardinality(n)) for n in scope),
            log_values=table,
        )
    return terms


def _cond_tables(m):
    g = m.graph
    reference = resolve_reference(m.reference)
    terms = {}
    for name in g.random_names:
        card = g.cardinality(name)
        scope = _univariate_scope(g, name)
        scope_shape = tuple(g.cardinality(n) for n in scope)
        ref_level = reference.level(name)
        logits = np.zeros(scope_shape + (card,))
        nonref = _nonref_levels(card, ref_level)
        logits[(Ellipsis,) + (nonref,)] = m.univariate[name]
        log_u = logits - logsumexp(logits, axis=-1, keepdims=True)
        terms[name] = FactorTerm(
            kind=COND,
            variables=((name, card),),
            context=tuple((n, g.cardinality(n)) for n in scope),
            log_values=log_u,
        )
    return terms


def params_to_distribution(m):
    """Compose the parameterized terms into the model distribution.

    Well-defined for every finite parameter vector; the reference slices of
    all interaction terms are identically 1 by construction.
    """
    return compose_from_terms(m.graph, _cond_tables(m), _phi_tables(m), m.reference)


def params_from_distribution(p, g, reference=None):
    """Invert `params_to_distribution` by factorizing (free family only)."""
    reference = resolve_reference(reference)
    f = lc_factorize(p, g, reference, max_diagnostic_size=0)
    univariate, interaction = {}, {}
    for name in g.random_names:
        term = f.univariate_terms[name]
        ref_level = reference.level(name)
        log_u = term.log_values
        ratios = log_u - log_u[..., ref_level:ref_level + 1]
        nonref = _nonref_levels(g.cardinality(name), ref_level)
        univariate[name] = ratios[(Ellipsis,) + (nonref,)]
    for clique, term in f.phi_terms.items():
        members = term.var_names
        nonref = [_nonref_levels(c, reference.level(n)) for n, c in term.variables]
        interaction[clique] = term.log_values[(Ellipsis,) + np.ix_(*nonref)]
    return ModelParams(g, reference, FREE, univariate, interaction)


# --- likelihood and exact gradient -----------------------------------------------


def counts_table(samples, g, pseudocount=0.0):
    """Weighted empirical counts on the (context, variables) grid of ``g``."""
    names = g.fixed_names + g.random_names
    missing = set(names) - set(samples.variables)
    if missing:
        raise DistributionError(f"samples missing variables {sorted(missing)}")
    shape = tuple(g.cardinality(n) for n in names)
    cols = [samples.variables.index(n) for n in names]
    for col, n, card in zip(cols, names, shape):
        if np.any(samples.rows[:, col] >= card):
            raise DistributionError(f"sample level out of range for {n!r}")
    counts = np.full(shape, float(pseudocount))
    weights = samples.weights if samples.weights is not None else np.ones(len(samples.rows))
    np.add.at(counts, tuple(samples.rows[:, c] for c in cols), weights)
    return counts


class _Evaluator:
    """Cached likelihood/gradient evaluation on a fixed count tensor.

    Precomputes, per parameter block, where its term embeds in the joint
    frame and which axes its sufficient statistics project onto, so the
    optimizer's inner loop reduces to a handful of dense array operations.
    """

    def __init__(self, g, reference, family, scores_map, counts):
        self.family = family
        reference = resolve_reference(reference)
        n_ctx = len(g.fixed_names)
        self.frame_shape = tuple(g.cardinality(n) for n in g.fixed_names + g.random_names)
        ndim = len(self.frame_shape)
        self.var_axes = tuple(range(n_ctx, ndim))
        self.counts = np.asarray(counts, dtype=float)
        self.n = float(self.counts.sum())
        self.ctx_totals = (self.counts.sum(axis=self.var_axes, keepdims=True)
                           if self.var_axes else self.counts)
        self.blocks = []
        offset = 0
        for name in g.random_names:
            card = g.cardinality(name)
            scope = _univariate_scope(g, name)
            scope_shape = tuple(g.cardinality(s) for s in scope)
            axes = [g.fixed_names.index(s) for s in scope]
            axes.append(n_ctx + g.random_names.index(name))
            embed = [1] * ndim
            for ax, c in zip(axes, scope_shape + (card,)):
                embed[ax] = c
            size = int(np.prod(scope_shape, initial=1)) * (card - 1)
            self.blocks.append({
                "kind": "cond", "offset": offset, "size": size,
                "param_shape": scope_shape + (card - 1,),
                "table_shape": scope_shape + (card,),
                "embed": tuple(embed),
                "nonref": _nonref_levels(card, reference.level(name)),
                "drop": tuple(ax for ax in range(ndim) if ax not in axes),
            })
            offset += size
        for clique in _interaction_cliques(g):
            members = g.sorted_names(clique)
            cards = tuple(g.cardinality(v) for v in members)
            scope = clique_context(g, members)
            scope_shape = tuple(g.cardinality(s) for s in scope)
            axes = [g.fixed_names.index(s) for s in scope]
            axes += [n_ctx + g.random_names.index(v) for v in members]
            embed = [1] * ndim
            for ax, c in zip(axes, scope_shape + cards):
                embed[ax] = c
            nonref = [_nonref_levels(c, reference.level(v))
                      for v, c in zip(members, cards)]
            block = {
                "kind": "phi", "offset": offset,
                "table_shape": scope_shape + cards,
                "embed": tuple(embed),
                "drop": tuple(ax for ax in range(ndim) if ax not in axes),
                "ix": (Ellipsis,) + np.ix_(*nonref),
                "n_members": len(members),
            }
            if family == FREE:
                block["param_shape"] = scope_shape + tuple(c - 1 for c in cards)
            else:
                stat = np.ones(cards)
                for i, v in enumerate(members):
                    table = (np.asarray(scores_map[v], dtype=float)
                             if scores_map and v in scores_map
                             else np.arange(cards[i], dtype=float))
                    delta = table - table[reference.level(v)]
                    shape = [1] * len(members)
                    shape[i] = cards[i]
                    stat = stat * delta.reshape(shape)
                block["param_shape"] = scope_shape
                block["stat"] = stat
            block["size"] = int(np.prod(block["param_shape"], initial=1))
            self.blocks.append(block)
            offset += block["size"]
        self.n_params = offset

    def log_table(self, theta):
        total = np.zeros(self.frame_shape)
        for block in self.blocks:
            values = theta[block["offset"]:block["offset"] + block["size"]]
            values = values.reshape(block["param_shape"])
            if block["kind"] == "cond":
                logits = np.zeros(block["table_shape"])
                logits[..., block["nonref"]] = values
                table = logits - logsumexp(logits, axis=-1, keepdims=True)
            elif self.family == FREE:
                table = np.zeros(block["table_shape"])
                table[block["ix"]] = values
            else:
                gamma = values.reshape(values.shape + (1,) * block["n_members"])
                table = gamma * block["stat"]
            total += table.reshape(block["embed"])
        if self.var_axes:
            total = total - logsumexp(total, axis=self.var_axes, keepdims=True)
        return total

    def value_and_grad(self, theta):
        """(total log-likelihood, gradient of the mean log-likelihood)."""
        log_q = self.log_table(theta)
        loglik = float((self.counts * log_q).sum())
        diff = self.counts - np.exp(log_q) * self.ctx_totals
        grads = np.empty(self.n_params)
        for block in self.blocks:
            proj = diff.sum(axis=block["drop"]) if block["drop"] else diff
            if block["kind"] == "cond":
                part = proj[..., block["nonref"]]
            elif self.family == FREE:
                part = proj[block["ix"]]
            else:
                axes = tuple(range(proj.ndim - block["n_members"], proj.ndim))
                part = (proj * block["stat"]).sum(axis=axes)
            grads[block["offset"]:block["offset"] + block["size"]] = part.ravel() / self.n
        return loglik, grads


def _evaluator_for(m, counts):
    return _Evaluator(m.graph, m.reference, m.family, m.scores, counts)


def loglik_and_gradient(m, data):
    """Exact log-likelihood and the gradient of the mean log-likelihood.

    The log-likelihood is the total over rows (duplicating the data doubles
    it); the gradient is per sample, observed minus model-expected
    sufficient-statistic proportions, so duplication leaves it unchanged.
    The analytic gradient matches central finite differences of the mean
    log-likelihood.
    """
    if isinstance(data, SampleSet):
        counts = counts_table(data, m.graph)
    else:
        counts = np.asarray(data, dtype=float)
    if counts.sum() <= 0:
        raise DistributionError("data has no mass")
    return _evaluator_for(m, counts).value_and_grad(pack(m))


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    loglik: float
    trace: tuple
    converged: bool
    iterations: int


ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
MIN_STEP = 1e-13
MAX_BB_STEP = 1e8


def fit_mle(g, data, family=FREE, init=None, reference=None, tol=1e-8,
            max_iter=20000, pseudocount=0.0, scores=None):
    """Maximum-likelihood fit by full-batch gradient ascent with backtracking.

    The ascent direction is always the gradient of the mean log-likelihood;
    each step starts from a spectral (gradient-difference) step length and
    backtracks under the Armijo condition, so accepted steps never decrease
    the log-likelihood.  Deterministic given ``init`` (zero parameters by
    default).  Stops when the mean-gradient max-norm falls below ``tol``;
    if ``max_iter`` is exhausted first, the best iterate is returned with
    ``converged=False``.
    """
    reference = resolve_reference(reference)
    if isinstance(data, SampleSet):
        counts = counts_table(data, g, pseudocount)
    else:
        counts = np.asarray(data, dtype=float) + float(pseudocount)
    if counts.sum() <= 0:
        raise DistributionError("data has no mass")
    _check_level_support(g, counts, pseudocount)

    m = init if init is not None else zero_params(g, reference, family, scores)
    if init is not None and init.graph != g:
        raise GraphError("initial parameters belong to a different graph")
    evaluator = _evaluator_for(m, counts)
    theta = pack(m)
    n = evaluator.n

    total, grad = evaluator.value_and_grad(theta)
    f_val = total / n
    trace = [total]
    converged = bool(np.max(np.abs(grad), initial=0.0) <= tol)
    steps = 0
    alpha = 1.0
    while not converged and steps < max_iter:
        step = min(max(alpha, MIN_STEP), MAX_BB_STEP)
        g_dot_d = float(grad @ grad)
        accepted = False
        while step >= MIN_STEP:
            cand = theta + step * grad
            total_new, grad_new = evaluator.value_and_grad(cand)
            f_new = total_new / n
            if f_new >= f_val + ARMIJO_C * step * g_dot_d:
                s = cand - theta
                y = grad_new - grad
                sy = float(s @ y)
                alpha = float(s @ s) / -sy if sy < 0 else 1.0
                theta, f_val, grad = cand, f_new, grad_new
                accepted = True
                break
            step *= ARMIJO_SHRINK
        if not accepted:
            break
        steps += 1
        trace.append(f_val * n)
        converged = bool(np.max(np.abs(grad), initial=0.0) <= tol)
    fitted = unpack(m, theta)
    return FitResult(fitted, float(f_val * n), tuple(trace), converged, steps)


def _check_level_support(g, counts, pseudocount):
    if pseudocount > 0:
        return
    n_ctx = len(g.fixed_names)
    for i, name in enumerate(g.random_names):
        axis = n_ctx + i
        other = tuple(ax for ax in range(counts.ndim) if ax != axis)
        level_mass = counts.sum(axis=other)
        if np.count_nonzero(level_mass) < 2:
            raise DistributionError(
                f"variable {name!r} shows fewer than two levels in the data; "
                "enable the smoothing pseudocount"
            )


def transformed_linear_phi(gamma, scores, state, ref_scores):
    """log interaction value gamma * prod_i (g_i(v_i) - g_i(v_i*))."""
    state = tuple(int(s) for s in state)
    if len(scores) != len(state) or len(ref_scores) != len(state):
        raise DistributionError("scores, state, and ref_scores must align")
    value = float(gamma)
    for table, level, ref in zip(scores, state, ref_scores):
        value *= float(np.asarray(table)[level]) - float(ref)
    return value


# --- parameter file format -----------------------------------------------------
#
#   param cond <v> <level>[|<ctx-levels>] <value>
#   param phi {<v1>,<v2>,...} <levels>[|<ctx-levels>] <value>
#
# Levels are comma-separated non-reference level indices; values carry 17
# significant digits so a write/read round-trip is exact.


def format_params(m, comments=()):
    g = m.graph
    reference = resolve_reference(m.reference)
    lines = [f"# {c}" for c in comments]
    lines.append(f"family {m.family}")
    for name in g.random_names:
        table = m.univariate[name]
        scope = _univariate_scope(g, name)
        nonref = _nonref_levels(g.cardinality(name), reference.level(name))
        for ctx_state in np.ndindex(table.shape[:-1]):
            suffix = "|" + ",".join(str(s) for s in ctx_state) if scope else ""
            for i, level in enumerate(nonref):
                lines.append(f"param cond {name} {level}{suffix} "
                             f"{table[ctx_state + (i,)]:.17g}")
    for clique in _interaction_cliques(g):
        members = g.sorted_names(clique)
        label = "{" + ",".join(members) + "}"
        table = m.interaction[clique]
        scope = clique_context(g, members)
        n_scope = len(scope)
        if m.family == FREE:
            nonref = [_nonref_levels(g.cardinality(v), reference.level(v))
                      for v in members]
            for ctx_state in np.ndindex(table.shape[:n_scope]):
                suffix = "|" + ",".join(str(s) for s in ctx_state) if scope else ""
                for combo in np.ndindex(table.shape[n_scope:]):
                    levels = ",".join(str(nonref[i][c]) for i, c in enumerate(combo))
                    lines.append(f"param phi {label} {levels}{suffix} "
                                 f"{table[ctx_state + combo]:.17g}")
        else:
            for ctx_state in np.ndindex(table.shape):
                suffix = "|" + ",".join(str(s) for s in ctx_state) if scope else ""
                lines.append(f"param phi {label} gamma{suffix} {table[ctx_state]:.17g}")
    return "\n".join(lines) + "\n"


def parse_params(text, g, reference=None):
    reference = resolve_reference(reference)
    family = FREE
    assignments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "family":
            if len(tokens) != 2 or tokens[1] not in (FREE, TRANSFORMED_LINEAR):
                raise DistributionError(f"line {lineno}: bad family directive")
            family = tokens[1]
            continue
        if tokens[0] != "param" or len(tokens) != 5:
            raise DistributionError(f"line {lineno}: expected a 'param' line")
        assignments.append((lineno, tokens[1:]))
    m = zero_params(g, reference, family)
    univariate = {k: v.copy() for k, v in m.univariate.items()}
    interaction = {k: v.copy() for k, v in m.interaction.items()}
    for lineno, (kind, target, state_spec, value_str) in assignments:
        try:
            value = float(value_str)
        except ValueError:
            raise DistributionError(f"line {lineno}: bad value {value_str!r}") from None
        state_part, _, ctx_part = state_spec.partition("|")
        ctx_state = tuple(int(s) for s in ctx_part.split(",")) if ctx_part else ()
        if kind == "cond":
            if target not in univariate:
                raise DistributionError(f"line {lineno}: unknown variable {target!r}")
            nonref = _nonref_levels(g.cardinality(target), reference.level(target))
            level = int(state_part)
            if level not in nonref:
                raise DistributionError(f"line {lineno}: level {level} is not a free level")
            univariate[target][ctx_state + (nonref.index(level),)] = value
        elif kind == "phi":
            members = tuple(target.strip("{}").split(","))
            clique = frozenset(members)
            if clique not in interaction:
                raise DistributionError(f"line {lineno}: {target} is not a clique of size >= 2")
            members = g.sorted_names(members)
            if family == TRANSFORMED_LINEAR:
                if state_part != "gamma":
                    raise DistributionError(f"line {lineno}: expected 'gamma' level field")
                interaction[clique][ctx_state] = value
            else:
                levels = tuple(int(s) for s in state_part.split(","))
                nonref = [_nonref_levels(g.cardinality(v), reference.level(v))
                          for v in members]
                try:
                    combo = tuple(nonref[i].index(lv) for i, lv in enumerate(levels))
                except ValueError:
                    raise DistributionError(
                        f"line {lineno}: levels {levels} include a reference level"
                    ) from None
                interaction[clique][ctx_state + combo] = value
        else:
            raise DistributionError(f"line {lineno}: unknown param kind {kind!r}")
    return ModelParams(g, reference, family, univariate, interaction)
