"""Mixed graphs over random and fixed vertices.

Supports undirected graphs, DAGs, chain graphs, and their conditional
variants (fixed vertices with arrows into random ones).  Provides the
combinatorial operations the factorization machinery needs: induced
subgraphs, clique enumeration, chain components (blocks), separation
criteria, and conditional-graph construction.

Graphs are immutable after construction; every operation returns a new
graph or a plain value, so shared instances are safe to use concurrently.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

RANDOM = "random"
FIXED = "fixed"


class GraphError(ValueError):
    """Malformed graph, or an operation applied to the wrong graph class."""


class GraphFormatError(GraphError):
    """Unparseable graph text; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Vertex:
    name: str
    kind: str = RANDOM
    cardinality: int = 2

    def __post_init__(self):
        if self.kind not in (RANDOM, FIXED):
            raise GraphError(f"vertex {self.name!r}: unknown kind {self.kind!r}")
        if self.cardinality < 1:
            raise GraphError(f"vertex {self.name!r}: cardinality must be >= 1")

    @property
    def is_random(self):
        return self.kind == RANDOM


@dataclass(frozen=True)
class CliqueSet:
    """Cliques of a graph's undirected part, as name tuples in vertex order."""

    cliques: tuple
    maximal_only: bool = False

    def __iter__(self):
        return iter(self.cliques)

    def __len__(self):
        return len(self.cliques)

    def __contains__(self, members):
        target = frozenset(members)
        return any(frozenset(c) == target for c in self.cliques)


class Graph:
    """Immutable mixed graph.

    Undirected edges join random vertices only.  Directed edges point into
    random vertices; the source may be random (DAGs, chain graphs) or fixed
    (conditional graphs).  Edges into fixed vertices, and fixed-fixed edges,
    are not representable.  Vertex order is declaration order and is the
    canonical variable order everywhere downstream.
    """

    def __init__(self, vertices, undirected=(), directed=()):
        self._vertices = tuple(vertices)
        names = [v.name for v in self._vertices]
        if len(set(names)) != len(names):
            raise GraphError("duplicate vertex names")
        self._index = {v.name: i for i, v in enumerate(self._vertices)}
        self._by_name = {v.name: v for v in self._vertices}

        und = set()
        for a, b in undirected:
            self._require(a), self._require(b)
            if a == b:
                raise GraphError(f"self loop at {a!r}")
            if not (self._by_name[a].is_random and self._by_name[b].is_random):
                raise GraphError(f"undirected edge {a!r} -- {b!r} touches a fixed vertex")
            und.add(frozenset((a, b)))
        dir_ = set()
        for a, b in directed:
            self._require(a), self._require(b)
            if a == b:
                raise GraphError(f"self loop at {a!r}")
            if not self._by_name[b].is_random:
                raise GraphError(f"directed edge into fixed vertex {b!r}")
            if (b, a) in dir_ or frozenset((a, b)) in und:
                raise GraphError(f"multiple edges between {a!r} and {b!r}")
            dir_.add((a, b))
        for pair in und:
            a, b = tuple(pair)
            if (a, b) in dir_ or (b, a) in dir_:
                raise GraphError(f"multiple edges between {a!r} and {b!r}")
        self._und = frozenset(und)
        self._dir = frozenset(dir_)

        self._nbrs = {n: set() for n in names}
        for pair in self._und:
            a, b = tuple(pair)
            self._nbrs[a].add(b)
            self._nbrs[b].add(a)
        self._parents = {n: set() for n in names}
        self._children = {n: set() for n in names}
        for a, b in self._dir:
            self._parents[b].add(a)
            self._children[a].add(b)

    def _require(self, name):
        if name not in self._index:
            raise GraphError(f"unknown vertex {name!r}")

    # --- basic accessors -------------------------------------------------

    @property
    def vertices(self):
        return self._vertices

    @property
    def names(self):
        return tuple(v.name for v in self._vertices)

    @property
    def random_names(self):
        return tuple(v.name for v in self._vertices if v.is_random)

    @property
    def fixed_names(self):
        return tuple(v.name for v in self._vertices if not v.is_random)

    @property
    def undirected_edges(self):
        return self._und

    @property
    def directed_edges(self):
        return self._dir

    def vertex(self, name):
        self._require(name)
        return self._by_name[name]

    def cardinality(self, name):
        return self.vertex(name).cardinality

    def sort_key(self, name):
        return self._index[name]

    def sorted_names(self, names):
        """Names in canonical (declaration) order."""
        return tuple(sorted(names, key=self._index.__getitem__))

    def adjacent(self, a, b):
        return (
            frozenset((a, b)) in self._und
            or (a, b) in self._dir
            or (b, a) in self._dir
        )

    def neighbors(self, name):
        """Vertices joined to ``name`` by an undirected edge."""
        self._require(name)
        return self.sorted_names(self._nbrs[name])

    def parents(self, name):
        self._require(name)
        return self.sorted_names(self._parents[name])

    def children(self, name):
        self._require(name)
        return self.sorted_names(self._children[name])

    def is_undirected(self):
        return not self._dir

    def is_dag(self):
        if self._und:
            return False
        return self._topological_order(self._dir) is not None

    def is_cug(self):
        """Undirected among random vertices, directed only fixed -> random."""
        return all(not self._by_name[a].is_random for a, b in self._dir)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self._vertices == other._vertices
            and self._und == other._und
            and self._dir == other._dir
        )

    def __hash__(self):
        return hash((self._vertices, self._und, self._dir))

    def __repr__(self):
        return (
            f"Graph({len(self._vertices)} vertices, "
            f"{len(self._und)} undirected, {len(self._dir)} directed)"
        )

    # --- structural operations -------------------------------------------

    def induced_subgraph(self, subset):
        """Subgraph on the given vertices with all edges among them."""
        keep = set(subset)
        for name in keep:
            self._require(name)
        vertices = [v for v in self._vertices if v.name in keep]
        und = [tuple(p) for p in self._und if p <= keep]
        dir_ = [(a, b) for a, b in self._dir if a in keep and b in keep]
        return Graph(vertices, und, dir_)

    def cliques(self, maximal_only=False):
        """Cliques of the undirected part over the random vertices.

        The full listing includes the empty set and all singletons, sorted
        by size then lexicographically; ``maximal_only`` switches to a
        pivoting Bron-Kerbosch enumeration of maximal cliques.
        """
        members = self.random_names
        adj = {n: self._nbrs[n] for n in members}
        if maximal_only:
            found = []
            self._bron_kerbosch(set(), set(members), set(), adj, found)
            if not members:
                found = [frozenset()]
            cliques = [self.sorted_names(c) for c in found]
        else:
            cliques = [()]
            order = {n: i for i, n in enumerate(members)}
            stack = [((n,), [m for m in members if order[m] > order[n] and m in adj[n]])
                     for n in members]
            while stack:
                clique, cands = stack.pop()
                cliques.append(clique)
                for i, m in enumerate(cands):
                    stack.append((clique + (m,), [x for x in cands[i + 1:] if x in adj[m]]))
        cliques.sort(key=lambda c: (len(c), tuple(sorted(c))))
        return CliqueSet(tuple(cliques), maximal_only=maximal_only)

    def _bron_kerbosch(self, r, p, x, adj, out):
        if not p and not x:
            out.append(frozenset(r))
            return
        pivot = max(p | x, key=lambda u: len(adj[u] & p))
        for v in sorted(p - adj[pivot]):
            self._bron_kerbosch(r | {v}, p & adj[v], x & adj[v], adj, out)
            p = p - {v}
            x = x | {v}

    def blocks(self):
        """Partition of the random vertices into undirected components.

        Returned in a topological order of the block quotient graph, ties
        broken by smallest member name; requires a valid chain graph.
        """
        ok, diag = self.validate_chain_graph()
        if not ok:
            raise GraphError(diag)
        return self._chain_components()

    def _undirected_components(self):
        comps, seen = [], set()
        for start in self.random_names:
            if start in seen:
                continue
            comp, queue = {start}, deque([start])
            while queue:
                v = queue.popleft()
                for u in self._nbrs[v]:
                    if u not in comp:
                        comp.add(u)
                        queue.append(u)
            seen |= comp
            comps.append(self.sorted_names(comp))
        return comps

    def _chain_components(self):
        comps = self._undirected_components()
        comp_of = {v: i for i, comp in enumerate(comps) for v in comp}
        succ = {i: set() for i in range(len(comps))}
        indeg = {i: 0 for i in range(len(comps))}
        for a, b in self._dir:
            if a not in comp_of:  # fixed source: never part of a block
                continue
            ia, ib = comp_of[a], comp_of[b]
            if ib not in succ[ia]:
                succ[ia].add(ib)
                indeg[ib] += 1
        ready = sorted((i for i in indeg if indeg[i] == 0),
                       key=lambda i: min(comps[i]))
        out = []
        while ready:
            i = ready.pop(0)
            out.append(comps[i])
            for j in sorted(succ[i], key=lambda j: min(comps[j])):
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
            ready.sort(key=lambda i: min(comps[i]))
        return tuple(out)

    def validate_chain_graph(self):
        """(True, None) if no partially directed cycle exists, else (False, diagnostic).

        Equivalent to acyclicity of the block quotient graph.
        """
        comps = self._undirected_components()
        comp_of = {v: i for i, comp in enumerate(comps) for v in comp}
        succ = {i: set() for i in range(len(comps))}
        witness = {}
        for a, b in sorted(self._dir):
            if a not in comp_of:
                continue
            ia, ib = comp_of[a], comp_of[b]
            if ia == ib:
                return False, (
                    f"partially directed cycle: edge {a} -> {b} lies inside the "
                    f"undirected component {{{', '.join(comps[ia])}}}"
                )
            succ[ia].add(ib)
            witness.setdefault((ia, ib), (a, b))
        cycle = _digraph_cycle(succ)
        if cycle is None:
            return True, None
        arcs = [witness[(cycle[i], cycle[i + 1])] for i in range(len(cycle) - 1)]
        path = " ... ".join(f"{a} -> {b}" for a, b in arcs)
        return False, f"partially directed cycle through blocks: {path}"

    def _topological_order(self, arcs):
        indeg = {n: 0 for n in self.names}
        succ = {n: [] for n in self.names}
        for a, b in arcs:
            succ[a].append(b)
            indeg[b] += 1
        ready = deque(n for n in self.names if indeg[n] == 0)
        order = []
        while ready:
            n = ready.popleft()
            order.append(n)
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        return order if len(order) == len(self.names) else None

    def topological_order(self):
        if self._und:
            raise GraphError("topological order requires a directed graph")
        order = self._topological_order(self._dir)
        if order is None:
            raise GraphError("graph contains a directed cycle")
        return tuple(order)

    # --- separation criteria ----------------------------------------------

    def d_separated(self, a, b, c):
        """d-separation of ``a`` and ``b`` by ``c`` in a DAG (or CDAG).

        Uses the ancestral-subgraph moralization criterion.
        """
        if self._und:
            raise GraphError("d-separation requires a directed graph")
        if self._topological_order(self._dir) is None:
            raise GraphError("d-separation requires an acyclic graph")
        a, b, c = set(a), set(b), set(c)
        for name in a | b | c:
            self._require(name)
        if (a & b) or (a & c) or (b & c):
            raise GraphError("d-separation sets must be disjoint")
        relevant = self._ancestors_closure(a | b | c)
        moral = {n: set() for n in relevant}
        for x, y in self._dir:
            if x in relevant and y in relevant:
                moral[x].add(y)
                moral[y].add(x)
        for y in relevant:
            pars = [x for x in self._parents[y] if x in relevant]
            for p1, p2 in itertools.combinations(pars, 2):
                moral[p1].add(p2)
                moral[p2].add(p1)
        return not _reachable(moral, a - c, b - c, c)

    def _ancestors_closure(self, seeds):
        out = set(seeds)
        queue = deque(seeds)
        while queue:
            v = queue.popleft()
            for p in self._parents[v]:
                if p not in out:
                    out.add(p)
                    queue.append(p)
        return out

    def ug_separated(self, a, b, c):
        """True iff every path from ``a`` to ``b`` passes through ``c``."""
        if self._dir:
            raise GraphError("undirected separation requires an undirected graph")
        a, b, c = set(a), set(b), set(c)
        for name in a | b | c:
            self._require(name)
        if (a & b) or (a & c) or (b & c):
            raise GraphError("separation sets must be disjoint")
        return not _reachable(self._nbrs, a, b, c)

    # --- chain-graph helpers -----------------------------------------------

    def conditional_graph(self, block):
        """Conditional graph for a block: its parents become fixed vertices.

        Keeps undirected edges inside the block and arrows from parents into
        block members; edges among the parents are dropped.
        """
        block = tuple(block)
        blocks = {frozenset(bl) for bl in self.blocks()}
        if frozenset(block) not in blocks:
            raise GraphError(f"{{{', '.join(block)}}} is not a block of the graph")
        block = self.sorted_names(block)
        pars = set()
        for v in block:
            pars |= self._parents[v]
        pars = self.sorted_names(pars - set(block))
        vertices = [Vertex(n, RANDOM, self.cardinality(n)) for n in block]
        vertices += [Vertex(n, FIXED, self.cardinality(n)) for n in pars]
        und = [tuple(p) for p in self._und if p <= set(block)]
        dir_ = [(a, b) for a, b in self._dir if b in block and a in pars]
        return Graph(vertices, und, dir_)

    def undirected_part(self):
        """The random vertices with only the undirected edges."""
        vertices = [v for v in self._vertices if v.is_random]
        return Graph(vertices, [tuple(p) for p in self._und])

    def skeleton(self):
        """Every edge made undirected; meaningful for all-random graphs."""
        und = {tuple(p) for p in self._und}
        und |= {(a, b) for a, b in self._dir}
        return Graph(self._vertices, sorted(und))

    def vstructures(self):
        """Unshielded colliders (a, c, b) with a < b by name, a -> c <- b."""
        out = set()
        for c in self.names:
            for a, b in itertools.combinations(sorted(self._parents[c]), 2):
                if not self.adjacent(a, b):
                    out.add((a, c, b))
        return frozenset(out)

    def with_edges(self, undirected, directed):
        """Same vertices, different edges."""
        return Graph(self._vertices, undirected, directed)


def _digraph_cycle(succ):
    """A cycle [n0, n1, ..., n0] in an adjacency-set digraph, or None."""
    color = {n: 0 for n in succ}
    stack_path = []

    def visit(n):
        color[n] = 1
        stack_path.append(n)
        for m in sorted(succ[n]):
            if color[m] == 1:
                return stack_path[stack_path.index(m):] + [m]
            if color[m] == 0:
                found = visit(m)
                if found:
                    return found
        color[n] = 2
        stack_path.pop()
        return None

    for n in sorted(succ):
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def _reachable(adj, sources, targets, blocked):
    seen = set(sources) - blocked
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        if v in targets:
            return True
        for u in adj[v]:
            if u not in seen and u not in blocked:
                seen.add(u)
                queue.append(u)
    return bool(seen & targets)


# --- text format ------------------------------------------------------------
#
# One directive per line, '#' starts a comment:
#   var <name> <cardinality>
#   fixed <name> <cardinality>
#   edge <a> -- <b>
#   edge <a> -> <b>
# Declaration order of var/fixed lines is the canonical variable order.


def parse_graph(text):
    vertices, und, dir_ = [], [], []
    declared = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            if tokens[0] in ("var", "fixed"):
                if len(tokens) != 3:
                    raise GraphFormatError(f"expected '{tokens[0]} <name> <cardinality>'", lineno)
                kind = RANDOM if tokens[0] == "var" else FIXED
                try:
                    card = int(tokens[2])
                except ValueError:
                    raise GraphFormatError(f"bad cardinality {tokens[2]!r}", lineno) from None
                vertices.append(Vertex(tokens[1], kind, card))
                declared.add(tokens[1])
            elif tokens[0] == "edge":
                if len(tokens) != 4 or tokens[2] not in ("--", "->"):
                    raise GraphFormatError("expected 'edge <a> -- <b>' or 'edge <a> -> <b>'", lineno)
                for name in (tokens[1], tokens[3]):
                    if name not in declared:
                        raise GraphFormatError(f"edge before declaration of {name!r}", lineno)
                (und if tokens[2] == "--" else dir_).append((tokens[1], tokens[3]))
            else:
                raise GraphFormatError(f"unknown directive {tokens[0]!r}", lineno)
        except GraphError as exc:
            if isinstance(exc, GraphFormatError):
                raise
            raise GraphFormatError(str(exc), lineno) from None
    try:
        return Graph(vertices, und, dir_)
    except GraphError as exc:
        raise GraphFormatError(str(exc)) from None


def format_graph(g, comments=()):
    lines = [f"# {c}" for c in comments]
    for v in g.vertices:
        lines.append(f"{'var' if v.is_random else 'fixed'} {v.name} {v.cardinality}")
    order = {n: i for i, n in enumerate(g.names)}
    for pair in sorted(g.undirected_edges, key=lambda p: sorted(p, key=order.__getitem__)):
        a, b = sorted(pair, key=order.__getitem__)
        lines.append(f"edge {a} -- {b}")
    for a, b in sorted(g.directed_edges, key=lambda e: (order[e[0]], order[e[1]])):
        lines.append(f"edge {a} -> {b}")
    return "\n".join(lines) + "\n"


def load_graph(path):
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def save_graph(g, path, comments=()):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(g, comments))
