"""Global numeric tolerances and size caps.

All identity checks in the package compare log-domain quantities against a
single default tolerance.  Subset-lattice operations are exponential in the
number of variables, so they refuse inputs past a hard cap instead of
grinding.  Both knobs are process-global and mutable.
"""

DEFAULT_TOL = 1e-9

# Largest subset lattice (2**n_variables) a decomposition will enumerate.
MAX_SUBSETS = 2**20

# Enumeration limits for global Markov checks.
MAX_CONDITIONING_SET = 5
MAX_STATEMENTS = 100_000

# Equivalence-class enumeration refuses more undirected edges than this.
MAX_FREE_EDGES = 20


class CapExceededError(RuntimeError):
    """An operation would exceed a configured size cap."""


def resolve_tol(tol):
    return DEFAULT_TOL if tol is None else float(tol)


def check_subset_cap(n_variables, cap=None):
    limit = MAX_SUBSETS if cap is None else cap
    if 2**n_variables > limit:
        raise CapExceededError(
            f"subset lattice has 2^{n_variables} members, exceeding the cap of "
            f"{limit}; raise lcf.config.MAX_SUBSETS (or LCF_MAX_SUBSETS) to override"
        )
