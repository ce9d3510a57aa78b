"""Exact analysis of the automaton's Markov chain on the 2^n configuration space.

The kernel mirrors the Monte-Carlo engine: from an independent configuration
the row is the product of the local per-vertex distributions (free vertices
branch, 2^f successors); a configuration with a violated edge maps
deterministically to its surviving vertices.  Absorption probabilities and
expected absorption steps are obtained from the fundamental-matrix linear
system restricted to states reachable from the empty configuration.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import onenormest, splu

from .errors import NumericalError, SizeLimitError
from .graphs import Graph, config_mask, mask_config, mis_size, read_graph

EXACT_LIMIT = 20


@dataclass(frozen=True)
class TransitionRow:
    source: int
    successors: dict  # mask -> probability

    def as_bitstrings(self, n: int) -> dict:
        return {mask_config(s, n): pr for s, pr in self.successors.items()}


@dataclass(frozen=True)
class AbsorptionReport:
    p: float
    absorbers: dict  # bitstring -> absorption probability from the empty config
    p_mis: float
    p_mis_complement: float
    expected_steps: float

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "absorbers": self.absorbers,
            "p_mis": self.p_mis,
            "p_mis_complement": self.p_mis_complement,
            "expected_steps": self.expected_steps,
        }


def local_theta(g: Graph, i: int, neighborhood: dict, own: int, p: float) -> dict:
    """Per-vertex update distribution over {0, 1}.

    `neighborhood` must assign a bit to exactly the neighbors of vertex i.
    """
    nbrs = set(g.neighbors(i))
    if set(neighborhood) != nbrs:
        missing = nbrs - set(neighborhood)
        extra = set(neighborhood) - nbrs
        raise ValueError(
            f"neighborhood keys must equal N({i})={sorted(nbrs)}: "
            f"missing {sorted(missing)}, extra {sorted(extra)}")
    if any(neighborhood[j] for j in nbrs):
        return {0: 1.0}
    if own:
        return {1: 1.0}
    return {1: p, 0: 1.0 - p}


def _check_limit(g: Graph, limit, what: str) -> None:
    lim = EXACT_LIMIT if limit is None else limit
    if g.n > lim:
        raise SizeLimitError(g.n, lim, what)


def transition_row(g: Graph, s, p: float, limit: int | None = None) -> TransitionRow:
    """One-step distribution over successors of configuration s."""
    _check_limit(g, limit, "transition-row construction")
    mask = config_mask(s, g.n)
    nb = g.neighbor_masks
    blocked = 0
    m = mask
    while m:
        blocked |= nb[(m & -m).bit_length() - 1]
        m &= m - 1
    survivors = mask & ~blocked
    if survivors != mask:  # violated edge: deterministic conflict resolution
        return TransitionRow(mask, {survivors: 1.0})
    free = []
    fm = g.full_mask & ~mask & ~blocked
    while fm:
        free.append((fm & -fm).bit_length() - 1)
        fm &= fm - 1
    q = 1.0 - p
    succ: dict[int, float] = {}
    for bits in range(1 << len(free)):
        t = mask
        k = 0
        b = bits
        while b:
            t |= 1 << free[(b & -b).bit_length() - 1]
            k += 1
            b &= b - 1
        pr = p ** k * q ** (len(free) - k)
        succ[t] = succ.get(t, 0.0) + pr
    return TransitionRow(mask, succ)


def _reachable_rows(g: Graph, p: float):
    """Rows for every state reachable from the empty configuration."""
    rows: dict[int, dict[int, float]] = {}
    absorbing: set[int] = set()
    seen = {0}
    queue = deque([0])
    while queue:
        s = queue.popleft()
        row = transition_row(g, s, p, limit=g.n).successors
        if row == {s: 1.0}:
            absorbing.add(s)
            continue
        rows[s] = row
        for t in row:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return rows, absorbing


def absorption_analysis(g: Graph, p: float, limit: int | None = None) -> AbsorptionReport:
    """Absorption probabilities and expected steps from the empty configuration.

    Solves (I-Q)^T x = e_0 once (sparse LU); the absorber probabilities are
    x^T R and the expected step count is sum(x).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(
            f"exact analysis requires p in (0, 1), got {p}: at the endpoints "
            "the chain need not be absorbing")
    _check_limit(g, limit, "absorption analysis")
    rows, absorbing = _reachable_rows(g, p)
    transient = sorted(rows)
    absorbers = sorted(absorbing)
    t_index = {s: k for k, s in enumerate(transient)}
    a_index = {s: k for k, s in enumerate(absorbers)}
    nt = len(transient)
    qd, qr, qc = [], [], []
    r_mat = np.zeros((nt, len(absorbers)))
    for s, row in rows.items():
        si = t_index[s]
        for t, pr in row.items():
            if t in a_index:
                r_mat[si, a_index[t]] += pr
            else:
                qr.append(si)
                qc.append(t_index[t])
                qd.append(pr)
    q_mat = sp.csc_matrix((qd, (qr, qc)), shape=(nt, nt))
    a_mat = (sp.identity(nt, format="csc") - q_mat).T.tocsc()
    try:
        lu = splu(a_mat)
    except RuntimeError as exc:
        raise NumericalError(
            f"fundamental-matrix factorization failed for n={g.n}, p={p} "
            f"({nt} transient states, ||I-Q||_1 ~ {onenormest(a_mat):.3e}): {exc}"
        ) from exc
    e0 = np.zeros(nt)
    e0[t_index[0]] = 1.0
    x = lu.solve(e0)
    if not np.all(np.isfinite(x)):
        raise NumericalError(
            f"singular fundamental matrix for n={g.n}, p={p}: "
            f"||I-Q||_1 ~ {onenormest(a_mat):.3e}")
    probs = x @ r_mat
    target = mis_size(g)
    by_bits = {mask_config(a, g.n): float(probs[a_index[a]]) for a in absorbers}
    p_mis = float(sum(probs[a_index[a]] for a in absorbers
                      if a.bit_count() == target))
    p_rest = float(sum(probs[a_index[a]] for a in absorbers
                       if a.bit_count() != target))
    return AbsorptionReport(p, by_bits, p_mis, p_rest, float(x.sum()))


# ---------------------------------------------------------------------------
# bundled instances and their closed-form oracles

def builtin_graph(name: str) -> Graph:
    """Load a bundled instance ("four-node" or "house")."""
    fname = {"four-node": "four_node.edges", "house": "house.edges"}.get(name)
    if fname is None:
        raise ValueError(f"unknown builtin graph {name!r} (have: four-node, house)")
    ref = resources.files("camis.data") / fname
    with resources.as_file(ref) as path:
        return read_graph(path)


def four_node_mis_probability(p: float) -> float:
    """Published closed-form MIS probability for the four-node instance."""
    q = 1.0 - p
    num = p**3 * q + 2 * p**2 * q**2 + 3 * p * q**3
    den = p**3 * q + 2 * p**2 * q**2 + 4 * p * q**3
    return num / den


def house_mis_probability(p: float) -> float:
    """Published closed-form MIS probability for the house instance, as printed.

    Evaluates the documented path-sum expression with its G1, G2, G3 loop
    polynomials verbatim.  See validate_house_fixture: the expression does not
    reproduce the exact absorption probability of any 7-vertex graph (its
    G1 and the q->0 limit do match the bundled instance; the path numerators
    do not), so agreement is reported, not assumed.
    """
    q = 1.0 - p
    # loop denominators 1 - G_i, expanded via (p+q)^deg - G_i to avoid the
    # catastrophic cancellation of the literal 1 - G_i near p = 1
    a = (3 * p**5 * q**2 + 13 * p**4 * q**3 + 22 * p**3 * q**4
         + 11 * p**2 * q**5 + 7 * p * q**6)
    b = p**3 * q + 2 * p**2 * q**2 + 4 * p * q**3
    c = p**2 * q + 3 * p * q**2
    d = 2 * p * q
    big = (p**5 * q**2 + 2 * p**4 * q**3 + 2 * p**3 * q**4 + p * q**6) / a
    mid = (p**4 * q**3 + 2 * p**3 * q**4 + p * q**6) / a
    return (2 * p**3 * q**4 / a
            + 2 * big * (2 * p * q**3 / b)
            + 2 * big * ((p**3 * q + p * q**3) / b) * (2 * p * q / d)
            + 2 * mid * (p**2 * q / c)
            + ((p**4 * q**3 + p**2 * q**5) / a) * (2 * p * q / d)
            + 2 * mid * (2 * p * q**2 / c)
            + 4 * p**2 * q**5 / a)


def house_mis_probability_derived(p: float) -> float:
    """Exact closed-form MIS probability for the bundled house instance.

    Rational function obtained by symbolic solution of the absorption system
    on the 21 independent configurations; independent cross-check for the
    numeric linear-algebra path.  Expands to 2/3 + q/9 - 52 q^2/27 + O(q^3)
    as q -> 0.
    """
    num = (12 * p**7 - 90 * p**6 + 286 * p**5 - 499 * p**4
           + 525 * p**3 - 346 * p**2 + 144 * p - 34)
    den = ((2 * p - 3) * (3 * p**2 - 6 * p + 4)
           * (8 * p**4 - 26 * p**3 + 31 * p**2 - 17 * p + 7))
    return num / den


@dataclass(frozen=True)
class FixtureValidation:
    """Outcome of cross-checking the house fixture against its oracles."""

    p_grid: tuple
    max_diff_printed: float
    max_diff_derived: float
    structure_ok: bool
    printed_matches: bool
    notes: str


HOUSE_VALIDATION_GRID = (0.3, 0.5, 0.7, 0.9, 0.99)


def validate_house_fixture(p_grid=HOUSE_VALIDATION_GRID, tol: float = 1e-8) -> FixtureValidation:
    """Cross-check the bundled house instance against both closed forms.

    The structural signature (10 edges; 8 maximal sets, two of them maximum
    with 3 vertices; 71 configurations annihilating in one sweep) pins the
    instance; any discrepancy with the printed expression is reported rather
    than silently accepted.
    """
    from .graphs import maximal_masks

    g = builtin_graph("house")
    ms = maximal_masks(g)
    cards = sorted(m.bit_count() for m in ms)
    zero_absorbing = sum(
        1 for s in range(1, 1 << g.n)
        if transition_row(g, s, 0.5).successors == {0: 1.0})
    structure_ok = (g.n == 7 and g.m == 10 and cards == [2] * 6 + [3, 3]
                    and zero_absorbing == 71)
    dp = dd = 0.0
    for p in p_grid:
        exact = absorption_analysis(g, p).p_mis
        dp = max(dp, abs(exact - house_mis_probability(p)))
        dd = max(dd, abs(exact - house_mis_probability_derived(p)))
    printed_ok = dp <= tol
    notes = (
        f"printed closed form differs from the exact absorption probability "
        f"by up to {dp:.3e} on the validation grid (derived form: {dd:.3e}); "
        "the fixture is pinned by its structural signature and the q->0 limit"
        if not printed_ok else "printed closed form matches")
    return FixtureValidation(tuple(p_grid), dp, dd, structure_ok, printed_ok, notes)
