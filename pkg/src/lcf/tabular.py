"""Exact categorical distributions stored in the log domain.

A :class:`TabularDistribution` is a full joint (or conditional) probability
table over finitely many categorical variables, optionally indexed by the
states of context variables.  Everything is exact table arithmetic: no
sampling-based approximations, no sparse storage.  All entries must be
strictly positive, since the factorization theory only covers positive
distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import config

POSITIVITY_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-9
RANDOM_FLOOR = 1e-6


class DistributionError(ValueError):
    """Malformed distribution table or invalid state indices."""


class DistributionFormatError(DistributionError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReferenceAssignment:
    """One designated reference level per variable (defaults to level 0)."""

    def __init__(self, levels=None):
        self._levels = dict(levels or {})
        for name, idx in self._levels.items():
            if int(idx) != idx or idx < 0:
                raise DistributionError(f"reference level for {name!r} must be a nonnegative integer")
            self._levels[name] = int(idx)

    def level(self, name):
        return self._levels.get(name, 0)

    def validate(self, variables):
        for name, card in variables:
            if self.level(name) >= card:
                raise DistributionError(
                    f"reference level {self.level(name)} out of range for {name!r} (cardinality {card})"
                )

    def items(self):
        return dict(self._levels)

    def __repr__(self):
        return f"ReferenceAssignment({self._levels!r})"


def resolve_reference(reference):
    if reference is None:
        return ReferenceAssignment()
    if isinstance(reference, ReferenceAssignment):
        return reference
    return ReferenceAssignment(reference)


@dataclass
class SampleSet:
    """Rows of integer category indices, one column per named variable."""

    variables: tuple
    rows: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.variables):
            raise DistributionError("sample rows must be (n, n_variables)")
        if np.any(self.rows < 0):
            raise DistributionError("negative category index in samples")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self.rows),) or np.any(self.weights <= 0):
                raise DistributionError("weights must be positive, one per row")

    @property
    def n_rows(self):
        return len(self.rows)

    def total_weight(self):
        return float(len(self.rows)) if self.weights is None else float(self.weights.sum())

    def column(self, name):
        return self.rows[:, self.variables.index(name)]


class TabularDistribution:
    """Exact log-domain probability table p(variables | context).

    The array layout places context axes first, then variable axes, both in
    declaration order.  Instances are immutable; operations return new
    objects.
    """

    def __init__(self, variables, log_table, context=(), positive=True):
        self.variables = tuple((str(n), int(c)) for n, c in variables)
        self.context = tuple((str(n), int(c)) for n, c in context)
        names = [n for n, _ in self.variables] + [n for n, _ in self.context]
        if len(set(names)) != len(names):
            raise DistributionError("duplicate variable names")
        for n, c in self.variables:
            if c < 2:
                raise DistributionError(f"variable {n!r} needs cardinality >= 2")
        shape = self.ctx_shape + self.var_shape
        table = np.asarray(log_table, dtype=float)
        if table.shape != shape:
            raise DistributionError(f"log table shape {table.shape} does not match {shape}")
        if not np.all(np.isfinite(table)):
            raise DistributionError("log table contains non-finite entries")
        axes = tuple(range(len(self.context), table.ndim))
        norms = logsumexp(table, axis=axes) if self.variables else table
        if np.max(np.abs(np.exp(norms) - 1.0)) > NORMALIZATION_TOL:
            raise DistributionError("table does not normalize to 1 for every context state")
        self.positive = bool(positive)
        if self.positive and np.min(table) < np.log(POSITIVITY_FLOOR):
            raise DistributionError(
                f"positive distribution has an entry below the {POSITIVITY_FLOOR} floor"
            )
        table = table - (norms.reshape(self.ctx_shape + (1,) * len(self.variables))
                         if self.variables else norms)
        table.setflags(write=False)
        self.log_table = table

    # --- constructors -------------------------------------------------------

    @classmethod
    def from_probs(cls, variables, probs, context=(), positive=True):
        probs = np.asarray(probs, dtype=float)
        if np.any(probs <= 0):
            if positive:
                raise DistributionError("zero or negative probability in a positive table")
            probs = np.maximum(probs, POSITIVITY_FLOOR)
        with np.errstate(divide="ignore"):
            return cls(variables, np.log(probs), context=context, positive=positive)

    @classmethod
    def uniform(cls, variables, context=()):
        variables = tuple(variables)
        context = tuple(context)
        shape = tuple(c for _, c in context) + tuple(c for _, c in variables)
        n = int(np.prod([c for _, c in variables], initial=1))
        return cls(variables, np.full(shape, -np.log(n)), context=context)

    # --- shape helpers --------------------------------------------------------

    @property
    def var_names(self):
        return tuple(n for n, _ in self.variables)

    @property
    def ctx_names(self):
        return tuple(n for n, _ in self.context)

    @property
    def var_shape(self):
        return tuple(c for _, c in self.variables)

    @property
    def ctx_shape(self):
        return tuple(c for _, c in self.context)

    @property
    def n_states(self):
        return int(np.prod(self.var_shape, initial=1))

    def cardinality(self, name):
        for n, c in self.variables + self.context:
            if n == name:
                return c
        raise DistributionError(f"unknown variable {name!r}")

    def var_axis(self, name):
        return len(self.context) + self.var_names.index(name)

    def _check_state(self, v_state, w_state):
        v_state = tuple(int(s) for s in v_state)
        w_state = tuple(int(s) for s in w_state)
        if len(v_state) != len(self.variables) or len(w_state) != len(self.context):
            raise DistributionError("state length mismatch")
        for s, (n, c) in zip(v_state, self.variables):
            if not 0 <= s < c:
                raise DistributionError(f"state {s} out of range for {n!r}")
        for s, (n, c) in zip(w_state, self.context):
            if not 0 <= s < c:
                raise DistributionError(f"context state {s} out of range for {n!r}")
        return v_state, w_state

    # --- queries ---------------------------------------------------------------

    def evaluate(self, v_state, w_state=()):
        """Stored log p(v | w); an exact lookup."""
        v_state, w_state = self._check_state(v_state, w_state)
        return float(self.log_table[w_state + v_state])

    def prob(self, v_state, w_state=()):
        return float(np.exp(self.evaluate(v_state, w_state)))

    def probs(self):
        """Linear-domain copy of the table."""
        return np.exp(self.log_table)

    # --- transformations ----------------------------------------------------------

    def marginalize(self, keep):
        """Exact marginal over the kept variables (context unchanged)."""
        keep = set(keep)
        unknown = keep - set(self.var_names)
        if unknown:
            raise DistributionError(f"unknown variables {sorted(unknown)}")
        drop_axes = tuple(self.var_axis(n) for n in self.var_names if n not in keep)
        variables = tuple(v for v in self.variables if v[0] in keep)
        table = logsumexp(self.log_table, axis=drop_axes) if drop_axes else self.log_table
        if not variables:
            # scalar "distribution"; keep context shape
            return _Scalar(self.context, table)
        return TabularDistribution(variables, table, context=self.context,
                                   positive=self.positive)

    def condition_on(self, fix):
        """Exact renormalized conditional given ``fix`` (name -> level)."""
        fix = dict(fix)
        unknown = set(fix) - set(self.var_names)
        if unknown:
            raise DistributionError(f"unknown variables {sorted(unknown)}")
        idx = [slice(None)] * len(self.context)
        for n, c in self.variables:
            if n in fix:
                s = int(fix[n])
                if not 0 <= s < c:
                    raise DistributionError(f"state {s} out of range for {n!r}")
                idx.append(s)
            else:
                idx.append(slice(None))
        numer = self.log_table[tuple(idx)]
        variables = tuple(v for v in self.variables if v[0] not in fix)
        if not variables:
            return _Scalar(self.context, np.zeros(self.ctx_shape))
        axes = tuple(range(len(self.context), numer.ndim))
        denom = logsumexp(numer, axis=axes, keepdims=True)
        return TabularDistribution(variables, numer - denom, context=self.context,
                                   positive=self.positive)

    def to_conditional(self, given):
        """Turn the given variables into context axes: p(rest | given, context)."""
        given = tuple(given)
        unknown = set(given) - set(self.var_names)
        if unknown:
            raise DistributionError(f"unknown variables {sorted(unknown)}")
        given = tuple(n for n in self.var_names if n in set(given))
        rest = tuple(v for v in self.variables if v[0] not in given)
        src = [self.var_axis(n) for n in given]
        dst = list(range(len(self.context), len(self.context) + len(given)))
        table = np.moveaxis(self.log_table, src, dst)
        rest_axes = tuple(range(len(self.context) + len(given), table.ndim))
        denom = logsumexp(table, axis=rest_axes, keepdims=True)
        context = self.context + tuple((n, self.cardinality(n)) for n in given)
        return TabularDistribution(rest, table - denom, context=context,
                                   positive=self.positive)

    def permuted(self, var_order):
        """Reorder the variable axes to the given name order."""
        if set(var_order) != set(self.var_names) or len(var_order) != len(self.variables):
            raise DistributionError("permutation must cover exactly the variables")
        src = [self.var_axis(n) for n in var_order]
        dst = list(range(len(self.context), self.log_table.ndim))
        table = np.moveaxis(self.log_table, src, dst)
        variables = tuple((n, self.cardinality(n)) for n in var_order)
        return TabularDistribution(variables, table, context=self.context,
                                   positive=self.positive)

    # --- conditional independence ------------------------------------------------

    def ci_deviation(self, a, b, c):
        """max over states of |p(a | b, c, w) - p(a | c, w)|, exact arithmetic."""
        a, b, c = tuple(a), tuple(b), tuple(c)
        named = set(a) | set(b) | set(c)
        if len(a) + len(b) + len(c) != len(named):
            raise DistributionError("conditional-independence sets must be disjoint")
        unknown = named - set(self.var_names)
        if unknown:
            raise DistributionError(f"unknown variables {sorted(unknown)}")
        if not a or not b:
            return 0.0
        joint = self.marginalize(named)
        axes_a = tuple(joint.var_axis(n) for n in a)
        axes_b = tuple(joint.var_axis(n) for n in b)
        log_abc = joint.log_table
        log_bc = logsumexp(log_abc, axis=axes_a, keepdims=True)
        log_ac = logsumexp(log_abc, axis=axes_b, keepdims=True)
        log_c = logsumexp(log_ac, axis=axes_a, keepdims=True)
        cond_ab = np.exp(log_abc - log_bc)
        cond_a = np.exp(log_ac - log_c)
        return float(np.max(np.abs(cond_ab - cond_a)))

    def exact_ci_holds(self, a, b, c, tol=None):
        """Whether a _||_ b | c holds in the table up to ``tol``."""
        return self.ci_deviation(a, b, c) <= config.resolve_tol(tol)

    # --- sampling -------------------------------------------------------------

    def sample(self, n, seed):
        """Draw ``n`` rows (context-free distributions only)."""
        if self.context:
            raise DistributionError("sampling requires a context-free distribution")
        rng = np.random.default_rng(seed)
        flat = np.exp(self.log_table).ravel()
        flat = flat / flat.sum()
        picks = rng.choice(len(flat), size=int(n), p=flat)
        rows = np.stack(np.unravel_index(picks, self.var_shape), axis=1)
        return SampleSet(self.var_names, rows)

    def __repr__(self):
        vs = ",".join(f"{n}:{c}" for n, c in self.variables)
        ws = ",".join(f"{n}:{c}" for n, c in self.context)
        return f"TabularDistribution({vs}{' | ' + ws if ws else ''})"


class _Scalar:
    """Degenerate zero-variable marginal: log-mass per context state."""

    def __init__(self, context, log_values):
        self.variables = ()
        self.context = tuple(context)
        self.log_table = np.asarray(log_values, dtype=float)

    def evaluate(self, v_state=(), w_state=()):
        if tuple(v_state):
            raise DistributionError("scalar marginal takes no variable state")
        return float(self.log_table[tuple(int(s) for s in w_state)])


def random_positive(variables, seed, concentration=1.0, context=()):
    """Seeded random positive distribution (symmetric Dirichlet weights).

    Uses numpy's default PCG64 generator; identical seeds give identical
    tables.  Every probability is at least ``RANDOM_FLOOR``.
    """
    if concentration <= 0:
        raise DistributionError("concentration must be positive")
    variables = tuple(variables)
    context = tuple(context)
    rng = np.random.default_rng(seed)
    shape = tuple(c for _, c in context) + tuple(c for _, c in variables)
    raw = rng.gamma(concentration, size=shape)
    axes = tuple(range(len(context), len(shape)))
    probs = raw / raw.sum(axis=axes, keepdims=True)
    n = int(np.prod([c for _, c in variables], initial=1))
    if n * RANDOM_FLOOR >= 0.5:
        raise DistributionError("table too large for the positivity floor")
    probs = (1.0 - n * RANDOM_FLOOR) * probs + RANDOM_FLOOR
    return TabularDistribution.from_probs(variables, probs, context=context)


# --- text formats ----------------------------------------------------------------
#
# Distribution:
#   dist <v1>:<k1> <v2>:<k2> ... [| <w1>:<k1> ...]
#   s1,s2,...[|c1,c2,...] <probability>     (one line per state, any order)
#
# Samples:
#   samples <v1> <v2> ...
#   i1,i2,...                                (one line per row)


def _parse_var_spec(token, lineno):
    if ":" not in token:
        raise DistributionFormatError(f"expected <name>:<cardinality>, got {token!r}", lineno)
    name, _, card = token.partition(":")
    try:
        card = int(card)
    except ValueError:
        raise DistributionFormatError(f"bad cardinality in {token!r}", lineno) from None
    return name, card


def parse_distribution(text):
    variables, context = None, ()
    probs = None
    seen = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if variables is None:
            tokens = line.split()
            if tokens[0] != "dist":
                raise DistributionFormatError("first directive must be 'dist'", lineno)
            spec = tokens[1:]
            if "|" in spec:
                cut = spec.index("|")
                var_spec, ctx_spec = spec[:cut], spec[cut + 1:]
            else:
                var_spec, ctx_spec = spec, []
            variables = tuple(_parse_var_spec(t, lineno) for t in var_spec)
            context = tuple(_parse_var_spec(t, lineno) for t in ctx_spec)
            if not variables:
                raise DistributionFormatError("no variables declared", lineno)
            shape = tuple(c for _, c in context) + tuple(c for _, c in variables)
            probs = np.full(shape, np.nan)
            seen = np.zeros(shape, dtype=bool)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DistributionFormatError("expected '<state> <probability>'", lineno)
        state_part, value_part = parts
        if "|" in state_part:
            v_part, _, c_part = state_part.partition("|")
        else:
            v_part, c_part = state_part, ""
        try:
            v_state = tuple(int(s) for s in v_part.split(",")) if v_part else ()
            c_state = tuple(int(s) for s in c_part.split(",")) if c_part else ()
            value = float(value_part)
        except ValueError:
            raise DistributionFormatError(f"bad state or value in {line!r}", lineno) from None
        if len(v_state) != len(variables) or len(c_state) != len(context):
            raise DistributionFormatError("state arity mismatch", lineno)
        idx = c_state + v_state
        try:
            if seen[idx]:
                raise DistributionFormatError(f"duplicate state {state_part}", lineno)
            probs[idx] = value
            seen[idx] = True
        except IndexError:
            raise DistributionFormatError(f"state {state_part} out of range", lineno) from None
    if variables is None:
        raise DistributionFormatError("empty distribution file")
    if not seen.all():
        missing = np.argwhere(~seen)[0]
        raise DistributionFormatError(f"missing state {tuple(int(i) for i in missing)}")
    try:
        return TabularDistribution.from_probs(variables, probs, context=context)
    except DistributionError as exc:
        raise DistributionFormatError(str(exc)) from None


def format_distribution(p, comments=()):
    lines = [f"# {c}" for c in comments]
    head = " ".join(f"{n}:{c}" for n, c in p.variables)
    if p.context:
        head += " | " + " ".join(f"{n}:{c}" for n, c in p.context)
    lines.append(f"dist {head}")
    for c_state in np.ndindex(p.ctx_shape):
        for v_state in np.ndindex(p.var_shape):
            state = ",".join(str(s) for s in v_state)
            if c_state:
                state += "|" + ",".join(str(s) for s in c_state)
            lines.append(f"{state} {p.prob(v_state, c_state):.17g}")
    return "\n".join(lines) + "\n"


def parse_samples(text):
    variables = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if variables is None:
            tokens = line.split()
            if tokens[0] != "samples" or len(tokens) < 2:
                raise DistributionFormatError("first directive must be 'samples <names...>'", lineno)
            variables = tuple(tokens[1:])
            continue
        try:
            row = tuple(int(s) for s in line.split(","))
        except ValueError:
            raise DistributionFormatError(f"bad sample row {line!r}", lineno) from None
        if len(row) != len(variables):
            raise DistributionFormatError("sample row arity mismatch", lineno)
        rows.append(row)
    if variables is None:
        raise DistributionFormatError("empty samples file")
    return SampleSet(variables, np.asarray(rows, dtype=np.int64).reshape(len(rows), len(variables)))


def format_samples(samples, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append("samples " + " ".join(samples.variables))
    for row in samples.rows:
        lines.append(",".join(str(int(s)) for s in row))
    return "\n".join(lines) + "\n"


def load_distribution(path):
    with open(path, encoding="utf-8") as fh:
        return parse_distribution(fh.read())


def save_distribution(p, path, comments=()):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_distribution(p, comments))


def load_samples(path):
    with open(path, encoding="utf-8") as fh:
        return parse_samples(fh.read())


def save_samples(samples, path, comments=()):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_samples(samples, comments))
