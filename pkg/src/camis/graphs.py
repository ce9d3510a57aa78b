"""Graph representation, instance generators, and exact independent-set oracles.

Vertices are 0-based internally; file formats and bitstrings use the display
convention where the leftmost bit is vertex 1.  Configurations are handled as
Python ints (bit i = vertex i) internally and as bitstrings at API boundaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import InstanceError, SizeLimitError

ENUM_LIMIT = 26          # largest n for which exhaustive 2^n scans are allowed
_NUMPY_SCAN_MIN = 17     # below this a plain Python scan is faster than chunking
_CHUNK = 1 << 22


class IndependenceClass(Enum):
    """Exhaustive classification of a configuration w.r.t. a graph."""

    NOT_INDEPENDENT = "not_independent"
    INDEPENDENT_NON_MAXIMAL = "independent_non_maximal"
    MAXIMAL_NON_MAXIMUM = "maximal_non_maximum"
    MAXIMUM = "maximum"


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with precomputed neighbor bitmasks.

    `edges` is canonical: sorted tuples (i, j) with i < j, no duplicates,
    no self-loops.  Instances are hashable and safe to share across threads.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"vertex count must be >= 1, got {self.n}")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))

    @staticmethod
    def from_edges(n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        canon = sorted({(min(i, j), max(i, j)) for i, j in edges})
        return Graph(n, tuple(canon))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def average_degree(self) -> float:
        return 2.0 * self.m / self.n

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    @property
    def neighbor_masks(self) -> tuple[int, ...]:
        try:
            return self._nb  # type: ignore[attr-defined]
        except AttributeError:
            nb = [0] * self.n
            for i, j in self.edges:
                nb[i] |= 1 << j
                nb[j] |= 1 << i
            object.__setattr__(self, "_nb", tuple(nb))
            return self._nb  # type: ignore[attr-defined]

    def neighbors(self, i: int) -> tuple[int, ...]:
        m = self.neighbor_masks[i]
        return tuple(j for j in range(self.n) if (m >> j) & 1)

    def degree(self, i: int) -> int:
        return self.neighbor_masks[i].bit_count()


# ---------------------------------------------------------------------------
# configuration conversions

def config_mask(c, n: int) -> int:
    """Normalize a configuration (bitstring, 0/1 sequence, or int) to a mask.

    Bitstrings follow the display convention: leftmost character = vertex 1.
    """
    if isinstance(c, str):
        if len(c) != n:
            raise InstanceError(f"config length {len(c)} != vertex count {n}")
        if set(c) - {"0", "1"}:
            raise InstanceError(f"config {c!r} is not a bitstring")
        return sum(1 << i for i, ch in enumerate(c) if ch == "1")
    if isinstance(c, (int, np.integer)):
        if not 0 <= c < (1 << n):
            raise InstanceError(f"mask {c} out of range for n={n}")
        return int(c)
    bits = list(c)
    if len(bits) != n:
        raise InstanceError(f"config length {len(bits)} != vertex count {n}")
    return sum(1 << i for i, b in enumerate(bits) if b)


def mask_config(mask: int, n: int) -> str:
    """Render a mask as a bitstring (leftmost bit = vertex 1)."""
    return "".join("1" if (mask >> i) & 1 else "0" for i in range(n))


# ---------------------------------------------------------------------------
# independence oracles

def is_independent(g: Graph, c) -> bool:
    """True iff no edge has both endpoints active."""
    mask = config_mask(c, g.n)
    nb = g.neighbor_masks
    m = mask
    while m:
        i = (m & -m).bit_length() - 1
        if mask & nb[i]:
            return False
        m &= m - 1
    return True


def _free_mask(g: Graph, mask: int) -> int:
    """Vertices that are inactive and whose whole neighborhood is inactive."""
    blocked = 0
    m = mask
    nb = g.neighbor_masks
    while m:
        i = (m & -m).bit_length() - 1
        blocked |= nb[i]
        m &= m - 1
    return g.full_mask & ~mask & ~blocked


def classify(g: Graph, c) -> IndependenceClass:
    """Place a configuration in one of the four independence classes."""
    mask = config_mask(c, g.n)
    if not is_independent(g, mask):
        return IndependenceClass.NOT_INDEPENDENT
    if _free_mask(g, mask):
        return IndependenceClass.INDEPENDENT_NON_MAXIMAL
    if mask.bit_count() == mis_size(g):
        return IndependenceClass.MAXIMUM
    return IndependenceClass.MAXIMAL_NON_MAXIMUM


def _check_enum_limit(g: Graph, limit, what: str) -> None:
    lim = ENUM_LIMIT if limit is None else limit
    if g.n > lim:
        raise SizeLimitError(g.n, lim, what)


def maximal_masks(g: Graph, limit: int | None = None) -> list[int]:
    """All maximal independent sets as masks, by exhaustive scan."""
    _check_enum_limit(g, limit, "maximal-set enumeration")
    if g.n >= _NUMPY_SCAN_MIN:
        return _scan_numpy(g, want_maximal=True)[1]
    nb = g.neighbor_masks
    full = g.full_mask
    out = []
    for s in range(1 << g.n):
        blocked = 0
        ok = True
        m = s
        while m:
            i = (m & -m).bit_length() - 1
            if s & nb[i]:
                ok = False
                break
            blocked |= nb[i]
            m &= m - 1
        if ok and (full & ~s & ~blocked) == 0:
            out.append(s)
    return out


def enumerate_maximal_sets(g: Graph, limit: int | None = None) -> list[str]:
    """All maximal independent sets as bitstrings (ascending mask order)."""
    return [mask_config(s, g.n) for s in maximal_masks(g, limit)]


def maximal_masks_pivot(g: Graph) -> list[int]:
    """Maximal independent sets via Bron-Kerbosch with pivoting.

    Independent route used to cross-check the exhaustive scan: maximal
    independent sets of G are the maximal cliques of its complement.
    """
    full = g.full_mask
    comp = tuple(full & ~nb & ~(1 << i) for i, nb in enumerate(g.neighbor_masks))
    out: list[int] = []

    def bk(r: int, p: int, x: int) -> None:
        if p == 0 and x == 0:
            out.append(r)
            return
        px = p | x
        best, best_cnt = -1, -1
        m = px
        while m:
            u = (m & -m).bit_length() - 1
            c = (p & comp[u]).bit_count()
            if c > best_cnt:
                best, best_cnt = u, c
            m &= m - 1
        cand = p & ~comp[best]
        while cand:
            v = (cand & -cand).bit_length() - 1
            vb = 1 << v
            bk(r | vb, p & comp[v], x & comp[v])
            p &= ~vb
            x |= vb
            cand &= cand - 1

    bk(0, full, 0)
    return sorted(out)


@lru_cache(maxsize=1024)
def _mis_size_cached(g: Graph, limit) -> int:
    _check_enum_limit(g, limit, "maximum-set search")
    if g.n >= _NUMPY_SCAN_MIN:
        return _scan_numpy(g, want_maximal=False)[0]
    nb = g.neighbor_masks
    best = 0
    for s in range(1 << g.n):
        if s.bit_count() <= best:
            continue
        ok = True
        m = s
        while m:
            i = (m & -m).bit_length() - 1
            if s & nb[i]:
                ok = False
                break
            m &= m - 1
        if ok:
            best = s.bit_count()
    return best


def mis_size(g: Graph, limit: int | None = None) -> int:
    """Cardinality of a maximum independent set, by exhaustive search."""
    return _mis_size_cached(g, limit)


def _scan_numpy(g: Graph, want_maximal: bool):
    """Chunked vectorized scan over all 2^n configurations."""
    n = g.n
    nb = g.neighbor_masks
    best = 0
    maximal: list[int] = []
    total = 1 << n
    for lo in range(0, total, _CHUNK):
        hi = min(lo + _CHUNK, total)
        idx = np.arange(lo, hi, dtype=np.uint32)
        ind = np.ones(hi - lo, dtype=bool)
        for i, j in g.edges:
            ind &= ((idx >> i) & (idx >> j) & 1) == 0
        if want_maximal:
            cov = ind.copy()
            for i in range(n):
                cov &= (((idx >> i) & 1) == 1) | ((idx & np.uint32(nb[i])) != 0)
            maximal.extend(int(s) for s in idx[cov])
        sel = idx[ind]
        if sel.size:
            best = max(best, int(np.bitwise_count(sel).max()))
    return best, maximal


def mis_energy(g: Graph, c, u: float) -> float:
    """Cost function -sum_i s_i + u * sum_{(i,j) in E} s_i s_j."""
    if u <= 0:
        raise ValueError(f"penalty weight must be positive, got {u}")
    mask = config_mask(c, g.n)
    violated = sum(1 for i, j in g.edges if (mask >> i) & (mask >> j) & 1)
    return -mask.bit_count() + u * violated


# ---------------------------------------------------------------------------
# generators

def gen_random_graph(n: int, k_target: float, seed) -> Graph:
    """Uniform G(n, M) with exactly M = round(k_target * n / 2) edges."""
    if not 0 <= k_target <= n - 1:
        raise ValueError(f"k_target must lie in [0, n-1], got {k_target}")
    m = round(k_target * n / 2)
    max_m = n * (n - 1) // 2
    if m > max_m:
        raise ValueError(f"{m} edges infeasible for n={n} (max {max_m})")
    rng = np.random.default_rng(seed)
    pairs = list(combinations(range(n), 2))
    chosen = rng.choice(len(pairs), size=m, replace=False) if m else []
    return Graph.from_edges(n, [pairs[i] for i in sorted(chosen)])


def gen_open_chain(n: int) -> Graph:
    """Path graph with edges (i, i+1)."""
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def gen_unit_disk(n: int, radius: float, box: float, seed) -> Graph:
    """n points uniform in [0, box]^2, edge iff Euclidean distance <= radius."""
    if radius <= 0 or box <= 0:
        raise ValueError("radius and box must be positive")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, box, size=(n, 2))
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if float(np.hypot(*(pts[i] - pts[j]))) <= radius
    ]
    return Graph.from_edges(n, edges)


# ---------------------------------------------------------------------------
# file formats

def write_edge_list(g: Graph, path) -> None:
    """Plain-text edge list: first line "N M", then M lines "i j" (1-based)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n} {g.m}\n")
        for i, j in g.edges:
            fh.write(f"{i + 1} {j + 1}\n")


def _parse_edge_list(text: str) -> Graph:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines())
             if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"expected header 'N M', got {lines[0]!r}")
    n, m = int(head[0]), int(head[1])
    if len(lines) - 1 != m:
        raise ValueError(f"header promises {m} edges, file has {len(lines) - 1}")
    edges = []
    for ln in lines[1:]:
        i, j = (int(tok) for tok in ln.split())
        edges.append((i - 1, j - 1))
    return Graph.from_edges(n, edges)


def read_graph(path) -> Graph:
    """Read a graph file in edge-list or JSON form (1-based vertices)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        return Graph.from_edges(doc["n"], [(i - 1, j - 1) for i, j in doc["edges"]])
    return _parse_edge_list(text)


def graph_to_json(g: Graph) -> str:
    return json.dumps({"n": g.n, "edges": [[i + 1, j + 1] for i, j in g.edges]})
