"""Command-line front end.

Reads graphs, distributions, and samples from the text formats, runs one
operation, and writes a deterministic text report to stdout or ``--out``.
Exit status 0 means success, 1 means a verification check failed, 2 means
the inputs could not be used.  All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
from scipy.special import logsumexp

from . import chaingraph, config, decomp, fitscore, fixtures, markov
from .config import CapExceededError
from .graphs import GraphError, format_graph, load_graph
from .tabular import (
    DistributionError,
    ReferenceAssignment,
    format_distribution,
    format_samples,
    load_distribution,
    load_samples,
    random_positive,
)


class InputError(Exception):
    """Unusable command-line inputs; maps to exit status 2."""


def _parse_ref(spec):
    if not spec:
        return None
    levels = {}
    for part in spec.split(","):
        name, sep, value = part.partition("=")
        if not sep:
            raise InputError(f"bad reference override {part!r}; expected NAME=LEVEL")
        try:
            levels[name.strip()] = int(value)
        except ValueError:
            raise InputError(f"bad reference level in {part!r}") from None
    return ReferenceAssignment(levels)


def _parse_var_list(spec):
    out = []
    for part in spec.split(","):
        name, sep, card = part.partition(":")
        if not sep:
            raise InputError(f"bad variable spec {part!r}; expected NAME:CARDINALITY")
        try:
            out.append((name.strip(), int(card)))
        except ValueError:
            raise InputError(f"bad cardinality in {part!r}") from None
    return tuple(out)


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_graph(path):
    try:
        return load_graph(path)
    except OSError as exc:
        raise InputError(f"cannot read graph file: {exc}") from None


def _load_dist(path):
    try:
        return load_distribution(path)
    except OSError as exc:
        raise InputError(f"cannot read distribution file: {exc}") from None


def _load_samples(path):
    try:
        return load_samples(path)
    except OSError as exc:
        raise InputError(f"cannot read samples file: {exc}") from None


def _factorization_checks(p, g, f, tol):
    """(report lines, all passed) for the shared factorization checks."""
    results = []
    restrictions = decomp.verify_restrictions(f, tol)
    dev = max((line.deviation for line in restrictions.lines), default=0.0)
    results.append(("restrictions", restrictions.passed, dev))

    nonclique_dev = max((d.max_abs_log for d in f.diagnostics), default=0.0)
    results.append(("nonclique_phi", not f.diagnostics, nonclique_dev))

    pw = markov.pairwise_markov_holds(p, g, tol)
    pw_dev = max((v for _, v in pw.violations), default=0.0)
    results.append(("pairwise_markov", pw.passed, pw_dev))

    recon_dev = f.max_deviation(p)
    results.append(("reconstruction", recon_dev <= tol, recon_dev))

    total = f.reconstruct_log_table() + f.log_z.reshape(
        f.log_z.shape + (1,) * len(p.variables))
    axes = tuple(range(len(p.context), total.ndim))
    z_direct = logsumexp(total, axis=axes)
    z_dev = float(np.max(np.abs(z_direct - f.log_z)))
    results.append(("z_closed_form", z_dev <= tol, z_dev))

    lines = [decomp.check_line(*r) for r in results]
    return lines, all(passed for _, passed, _ in results)


def _term_block(f):
    lines = []
    for name in (n for n, _ in f.variables):
        lines.extend(decomp.term_lines(f.univariate_terms[name]))
    for clique in sorted(f.phi_terms, key=lambda c: (len(c), tuple(sorted(c)))):
        lines.extend(decomp.term_lines(f.phi_terms[clique]))
    lines.extend(decomp.z_lines(f.log_z, tuple(c for _, c in f.context)))
    for d in f.diagnostics:
        lines.append(f"# nonclique {{{','.join(d.subset)}}} {d.max_abs_log:.6g}")
    return lines


def _cmd_factorize(args):
    g = _load_graph(args.graph)
    p = _load_dist(args.dist)
    reference = _parse_ref(args.ref)
    tol = config.resolve_tol(args.tol)
    if not g.is_cug():
        return _factorize_chain_graph(args, g, p, reference, tol)
    f = decomp.lc_factorize(p, g, reference, args.tol,
                            max_diagnostic_size=args.max_phi_size)
    lines = _term_block(f)
    check_lines, passed = _factorization_checks(p, g, f, tol)
    lines.extend(check_lines)
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if passed else 1


def _factorize_chain_graph(args, g, p, reference, tol):
    cf = chaingraph.cg_lc_factorize(p, g, reference, args.tol,
                                    max_diagnostic_size=args.max_phi_size)
    lines = []
    checks = []
    for block, f in zip(cf.blocks, cf.per_block):
        lines.append(f"# block {{{','.join(block)}}}")
        lines.extend(_term_block(f))
        restrictions = decomp.verify_restrictions(f, tol)
        dev = max((line.deviation for line in restrictions.lines), default=0.0)
        checks.append((f"restrictions {{{','.join(block)}}}", restrictions.passed, dev))
        nc_dev = max((d.max_abs_log for d in f.diagnostics), default=0.0)
        checks.append((f"nonclique_phi {{{','.join(block)}}}",
                       not f.diagnostics, nc_dev))
    recon_dev = cf.max_deviation(p)
    checks.append(("reconstruction", recon_dev <= tol, recon_dev))
    lines.extend(decomp.check_line(*c) for c in checks)
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if all(ok for _, ok, _ in checks) else 1


def _cmd_chen(args):
    p = _load_dist(args.dist)
    reference = _parse_ref(args.ref)
    order = tuple(args.order.split(",")) if args.order else p.var_names
    dec = decomp.chen_decompose(p, order, reference)
    tol = config.resolve_tol(args.tol)
    lines = [f"# order {','.join(order)}"]
    for name in order:
        lines.extend(decomp.term_lines(dec.univariate_terms[name]))
    for term in dec.or_terms:
        lines.extend(decomp.term_lines(term))
    lines.extend(decomp.z_lines(dec.log_z, p.ctx_shape))
    z_dev = float(np.max(np.abs(dec.log_z - dec.log_z_direct)))
    recon_dev = dec.max_deviation(p)
    passed = z_dev <= tol and recon_dev <= tol
    lines.append(decomp.check_line("z_closed_form", z_dev <= tol, z_dev))
    lines.append(decomp.check_line("reconstruction", recon_dev <= tol, recon_dev))
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if passed else 1


def _cmd_verify(args):
    g = _load_graph(args.graph)
    p = _load_dist(args.dist)
    reference = _parse_ref(args.ref)
    tol = config.resolve_tol(args.tol)
    f = decomp.lc_factorize(p, g, reference, args.tol,
                            max_diagnostic_size=args.max_phi_size)
    lines, passed = _factorization_checks(p, g, f, tol)
    gm = markov.global_markov_holds(p, g, tol,
                                    max_conditioning=args.max_cond,
                                    max_statements=args.max_statements)
    gm_dev = max((v for _, v in gm.violations), default=0.0)
    lines.append(decomp.check_line("global_markov", gm.passed, gm_dev))
    passed = passed and gm.passed
    if g.fixed_names:
        hc = markov.hammersley_clifford_check(p, g, reference, tol,
                                              max_subset_size=args.max_phi_size)
        hc_dev = max((v for _, v in hc.violations), default=0.0)
        lines.append(decomp.check_line("interaction_scopes", hc.passed, hc_dev))
        passed = passed and hc.passed
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if passed else 1


def _cmd_essential(args):
    g = _load_graph(args.graph)
    essential = chaingraph.essential_graph(g)
    _emit(format_graph(essential), args.out)
    return 0


def _cmd_enumerate(args):
    g = _load_graph(args.graph)
    cls = chaingraph.enumerate_equivalence_class(g)
    chunks = []
    for i, member in enumerate(cls.members, start=1):
        chunks.append(format_graph(member, comments=[f"member {i} of {len(cls)}"]))
    _emit("\n".join(chunks), args.out)
    return 0


def _cmd_score(args):
    g = _load_graph(args.graph)
    samples = _load_samples(args.samples)
    result = chaingraph.class_coherent_score(samples, g, penalty=args.penalty)
    lines = [
        f"n {samples.n_rows}",
        f"loglik {result.loglik:.12g}",
        f"dim {result.dimension}",
        f"penalty {args.penalty}",
        f"score {result.score:.12g}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_fit(args):
    g = _load_graph(args.graph)
    samples = _load_samples(args.samples)
    reference = _parse_ref(args.ref)
    family = {"free": fitscore.FREE, "tlor": fitscore.TRANSFORMED_LINEAR}[args.family]
    result = fitscore.fit_mle(g, samples, family=family, reference=reference,
                              tol=args.tol if args.tol is not None else 1e-8,
                              max_iter=args.max_iter, pseudocount=args.pseudocount)
    comments = [
        f"loglik {result.loglik:.12g}",
        f"iterations {result.iterations}",
        f"converged {'yes' if result.converged else 'no'}",
    ]
    _emit(fitscore.format_params(result.params, comments=comments), args.out)
    return 0


def _cmd_gen(args):
    if args.seed < 0:
        raise InputError("--seed must be nonnegative")
    if args.graph and args.vars:
        raise InputError("give either --graph or --vars, not both")
    if args.graph:
        g = _load_graph(args.graph)
        seeds = np.random.SeedSequence(args.seed).spawn(2)
        p = fixtures.random_chain_model(g, seeds[0],
                                        concentration=args.concentration)
        if args.n:
            samples = p.sample(args.n, seeds[1])
            _emit(format_samples(samples, comments=[f"seed {args.seed}"]), args.out)
        else:
            _emit(format_distribution(p, comments=[f"seed {args.seed}"]), args.out)
        return 0
    if not args.vars:
        raise InputError("gen needs --vars or --graph")
    variables = _parse_var_list(args.vars)
    context = _parse_var_list(args.context) if args.context else ()
    if args.n:
        if context:
            raise InputError("sampling needs a context-free distribution")
        seeds = np.random.SeedSequence(args.seed).spawn(2)
        p = random_positive(variables, seeds[0], args.concentration)
        samples = p.sample(args.n, seeds[1])
        _emit(format_samples(samples, comments=[f"seed {args.seed}"]), args.out)
        return 0
    p = random_positive(variables, args.seed, args.concentration, context)
    _emit(format_distribution(p, comments=[f"seed {args.seed}"]), args.out)
    return 0


def _cmd_demo(args):
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    for name, g in fixtures.demo_graphs().items():
        path = os.path.join(args.out_dir, f"{name}.g")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_graph(g, comments=[name]))
        written.append(path)
    for path in written:
        sys.stdout.write(f"wrote {path}\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lcf",
        description="Exact odds-ratio clique factorization and scoring "
                    "for discrete graphical models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, graph=False, dist=False, samples=False, ref=False, tol=False):
        if graph:
            sp.add_argument("--graph", required=True, help="graph file")
        if dist:
            sp.add_argument("--dist", required=True, help="distribution file")
        if samples:
            sp.add_argument("--samples", required=True, help="samples file")
        if ref:
            sp.add_argument("--ref", default="", help="reference overrides, e.g. A=1,B=0")
        if tol:
            sp.add_argument("--tol", type=float, default=None, help="check tolerance")
        sp.add_argument("--out", default=None, help="write the report here instead of stdout")

    sp = sub.add_parser("factorize", help="clique factorization plus all checks")
    add_common(sp, graph=True, dist=True, ref=True, tol=True)
    sp.add_argument("--max-phi-size", type=int, default=None,
                    help="largest non-clique subset size to scan")
    sp.set_defaults(func=_cmd_factorize)

    sp = sub.add_parser("chen", help="order-based decomposition of a distribution")
    add_common(sp, dist=True, ref=True, tol=True)
    sp.add_argument("--order", default=None, help="comma-separated variable order")
    sp.set_defaults(func=_cmd_chen)

    sp = sub.add_parser("verify", help="Markov, restriction, and normalizer checks only")
    add_common(sp, graph=True, dist=True, ref=True, tol=True)
    sp.add_argument("--max-phi-size", type=int, default=None)
    sp.add_argument("--max-cond", type=int, default=None,
                    help="largest conditioning set in the global Markov scan")
    sp.add_argument("--max-statements", type=int, default=None,
                    help="cap on enumerated separation statements")
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("essential", help="essential graph of a DAG")
    add_common(sp, graph=True)
    sp.set_defaults(func=_cmd_essential)

    sp = sub.add_parser("enumerate", help="all DAGs in an essential graph's class")
    add_common(sp, graph=True)
    sp.set_defaults(func=_cmd_enumerate)

    sp = sub.add_parser("score", help="equivalence-class-coherent score of a DAG/CPDAG")
    add_common(sp, graph=True, samples=True)
    sp.add_argument("--penalty", choices=["none", "bic"], default="none")
    sp.set_defaults(func=_cmd_score)

    sp = sub.add_parser("fit", help="maximum-likelihood fit; emits a parameter file")
    add_common(sp, graph=True, samples=True, ref=True, tol=True)
    sp.add_argument("--family", choices=["free", "tlor"], default="free")
    sp.add_argument("--max-iter", type=int, default=20000)
    sp.add_argument("--pseudocount", type=float, default=0.0)
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("gen", help="seeded random distribution or in-model samples")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--vars", default=None, help="e.g. A:2,B:3")
    sp.add_argument("--context", default=None, help="e.g. W:2")
    sp.add_argument("--graph", default=None, help="generate inside this graph's model")
    sp.add_argument("--n", type=int, default=None, help="emit this many sample rows")
    sp.add_argument("--concentration", type=float, default=1.0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_gen)

    sp = sub.add_parser("demo", help="write the bundled example graphs")
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=_cmd_demo)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cap = os.environ.get("LCF_MAX_SUBSETS")
    if cap:
        try:
            config.MAX_SUBSETS = int(cap)
        except ValueError:
            sys.stderr.write(f"lcf: bad LCF_MAX_SUBSETS value {cap!r}\n")
            return 2
    try:
        return args.func(args)
    except (InputError, GraphError, DistributionError, CapExceededError) as exc:
        sys.stderr.write(f"lcf: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
