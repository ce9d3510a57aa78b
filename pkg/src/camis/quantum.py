"""Open-system simulation of the dissipative-unitary automaton protocol.

The dissipative generator is built from constraint-projected jump operators:
for each vertex an activation operator (fires only when the whole neighborhood
is unoccupied) and one deactivation operator per nonempty neighborhood
pattern.  Their steady states are exactly the maximal independent sets.  The
coherent part is a neighborhood-projected single-site flip Hamiltonian that
reduces to the standard PXP chain on an open chain and never leaves the
independent-set subspace.

Density operators are vectorized column-major (vec[i + d*j] = rho[i, j]), so
A rho B maps to kron(B^T, A) on vectors.  Propagation applies the sparse
vectorized generator with scipy's error-controlled expm_multiply in windows of
dt-spaced checkpoints; stationarity is detected from the overlap of
consecutive checkpoints, required to hold at three in a row (a single
checkpoint can dip below tolerance where the state purity turns around).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import expm_multiply, splu

from .errors import InstanceError, IntegrationError, SizeLimitError
from .graphs import Graph, config_mask, mask_config, maximal_masks, mis_size

DENSE_LIMIT = 10        # full 4^n density-operator evolution
SPARSE_LIMIT = 14       # operator construction and diagonal (classical) evolution
PROTOCOL_DIM_LIMIT = 1600   # independent-configuration basis size for protocols
DT_DEFAULT = 0.01
TOL_DEFAULT = 1e-5
T_MAX_DEFAULT = 500.0
_STREAK = 3
_TRACE_DRIFT_LIMIT = 1e-6


# ---------------------------------------------------------------------------
# density operators

@dataclass
class DensityVec:
    """Vectorized density operator: complex vector of length 4^n."""

    vec: np.ndarray
    n: int

    def __post_init__(self):
        d = 1 << self.n
        if self.vec.shape != (d * d,):
            raise InstanceError(
                f"vector length {self.vec.shape} does not match 4^{self.n}")

    @staticmethod
    def from_basis_state(n: int, c) -> "DensityVec":
        d = 1 << n
        mask = config_mask(c, n)
        vec = np.zeros(d * d, dtype=complex)
        vec[mask + d * mask] = 1.0
        return DensityVec(vec, n)

    @staticmethod
    def from_matrix(n: int, rho: np.ndarray) -> "DensityVec":
        return DensityVec(np.asarray(rho, dtype=complex).reshape(-1, order="F"), n)

    def matrix(self) -> np.ndarray:
        d = 1 << self.n
        return self.vec.reshape((d, d), order="F")

    def trace(self) -> complex:
        d = 1 << self.n
        return self.vec[:: d + 1].sum()

    def herm_defect(self) -> float:
        m = self.matrix()
        return float(np.abs(m - m.conj().T).max())

    def population(self, c) -> float:
        d = 1 << self.n
        mask = config_mask(c, self.n)
        return float(self.vec[mask + d * mask].real)

    def diagonal(self) -> np.ndarray:
        d = 1 << self.n
        return self.vec[:: d + 1].real.copy()

    def off_diagonal_mass(self) -> float:
        m = self.matrix()
        return float(np.abs(m).sum() - np.abs(np.diag(m)).sum())

    def save(self, path) -> None:
        """Raw little-endian complex doubles behind a one-line JSON header."""
        header = json.dumps({"format": "camis-densityvec", "version": 1, "n": self.n})
        with open(path, "wb") as fh:
            fh.write(header.encode() + b"\n")
            fh.write(self.vec.astype("<c16").tobytes())

    @staticmethod
    def load(path) -> "DensityVec":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            if header.get("format") != "camis-densityvec":
                raise ValueError(f"{path} is not a density-vector dump")
            vec = np.frombuffer(fh.read(), dtype="<c16").astype(complex)
        return DensityVec(vec, header["n"])


def overlap(a: DensityVec, b: DensityVec) -> complex:
    """Generalized scalar product Tr[rho^dagger mu]."""
    if a.n != b.n:
        raise InstanceError(f"dimension mismatch: n={a.n} vs n={b.n}")
    return complex(np.vdot(a.vec, b.vec))


# ---------------------------------------------------------------------------
# operator construction

@dataclass(frozen=True)
class JumpOperatorSet:
    """Constraint-projected activation/deactivation jump operators.

    Each operator is a 0/1 sparse matrix on the 2^n computational space with
    at most one nonzero per column (an injective partial map between basis
    states).  Tags carry (vertex, kind, neighborhood pattern); the pattern is
    a tuple of bits aligned with the sorted neighbor list, None for "on" ops.
    """

    n: int
    ops: tuple
    tags: tuple

    def __len__(self) -> int:
        return len(self.ops)

    def exit_rates(self) -> np.ndarray:
        """Diagonal of sum_l L^dag L: number of operators applicable per state."""
        d = 1 << self.n
        out = np.zeros(d)
        for op in self.ops:
            out += np.asarray((op.T @ op).diagonal()).ravel()
        return out


def _op_from_pairs(pairs, dim) -> sp.csr_matrix:
    rows = np.array([t for t, _ in pairs], dtype=np.int64)
    cols = np.array([s for _, s in pairs], dtype=np.int64)
    return sp.csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(dim, dim))


def build_jump_operators(g: Graph, limit: int | None = None) -> JumpOperatorSet:
    """One activation operator per vertex plus one deactivation operator per
    nonempty neighborhood pattern (2^deg - 1 patterns per vertex)."""
    lim = SPARSE_LIMIT if limit is None else limit
    if g.n > lim:
        raise SizeLimitError(g.n, lim, "jump-operator construction")
    d = 1 << g.n
    nb = g.neighbor_masks
    ops, tags = [], []
    for i in range(g.n):
        bit = 1 << i
        nbrs = sorted(g.neighbors(i))
        pairs = [(s | bit, s) for s in range(d)
                 if not s & bit and not s & nb[i]]
        ops.append(_op_from_pairs(pairs, d))
        tags.append((i, "on", None))
        for pat in range(1, 1 << len(nbrs)):
            cmask = sum(1 << v for k, v in enumerate(nbrs) if (pat >> k) & 1)
            pairs = [(s & ~bit, s) for s in range(d)
                     if s & bit and (s & nb[i]) == cmask]
            ops.append(_op_from_pairs(pairs, d))
            tags.append((i, "off", tuple((pat >> k) & 1 for k in range(len(nbrs)))))
    return JumpOperatorSet(g.n, tuple(ops), tuple(tags))


@dataclass(frozen=True)
class PxpHamiltonian:
    """Neighborhood-projected flip Hamiltonian, one term per vertex."""

    n: int
    matrix: sp.csr_matrix
    vertices: tuple

    def eig(self):
        try:
            return self._eig  # type: ignore[attr-defined]
        except AttributeError:
            w, v = eigh(self.matrix.toarray())
            object.__setattr__(self, "_eig", (w, v))
            return w, v


def build_pxp(g: Graph, limit: int | None = None) -> PxpHamiltonian:
    lim = SPARSE_LIMIT if limit is None else limit
    if g.n > lim:
        raise SizeLimitError(g.n, lim, "flip-Hamiltonian construction")
    d = 1 << g.n
    nb = g.neighbor_masks
    rows, cols = [], []
    for i in range(g.n):
        for s in range(d):
            if not s & nb[i]:
                rows.append(s ^ (1 << i))
                cols.append(s)
    h = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(d, d))
    return PxpHamiltonian(g.n, h, tuple(range(g.n)))


# ---------------------------------------------------------------------------
# propagation machinery

def _vectorized_dissipator(ops, dim: int) -> sp.csr_matrix:
    """kron form of sum_l L.L^dag - 1/2 {L^dag L, .} for column-major vecs."""
    m = sp.csr_matrix((dim * dim, dim * dim))
    rates = np.zeros(dim)
    eye = sp.identity(dim, format="csr")
    for op in ops:
        m = m + sp.kron(op.conj(), op, format="csr")
        rates += np.asarray((op.T @ op).diagonal()).ravel()
    dd = sp.diags(rates)
    m = m - 0.5 * (sp.kron(dd, eye, format="csr") + sp.kron(eye, dd, format="csr"))
    return m.tocsr()


class _CriterionLoop:
    """Windowed propagation with the consecutive-checkpoint stopping rule."""

    def __init__(self, gen: sp.csr_matrix, dt: float, trace_of=None):
        self.gen = gen
        self.dt = dt
        self.trace_of = trace_of
        self.window_steps = 128

    def run(self, v0: np.ndarray, tol: float, t_max: float):
        t = 0.0
        cur = v0.astype(complex)
        tr0 = abs(self.trace_of(cur)) if self.trace_of else None
        streak = 0
        first_state, first_t = None, None
        w = self.window_steps * self.dt
        while t < t_max - 1e-12:
            steps = min(self.window_steps, max(1, int(round((t_max - t) / self.dt))))
            stop = steps * self.dt
            traj = expm_multiply(self.gen, cur, start=0.0, stop=stop,
                                 num=steps + 1, endpoint=True)
            prev = cur
            for k in range(1, steps + 1):
                nxt = traj[k]
                denom = np.vdot(prev, prev).real
                c = abs(1.0 - abs(np.vdot(prev, nxt)) / denom)
                if c < tol:
                    streak += 1
                    if streak == 1:
                        first_state, first_t = nxt, t + k * self.dt
                    if streak >= _STREAK:
                        return first_state, first_t, True
                else:
                    streak = 0
                    first_state = None
                prev = nxt
            cur = traj[-1]
            t += stop
            if self.trace_of is not None:
                drift = abs(abs(self.trace_of(cur)) - tr0)
                if drift > _TRACE_DRIFT_LIMIT:
                    raise IntegrationError(
                        f"trace drifted by {drift:.2e} during dissipative "
                        f"propagation (limit {_TRACE_DRIFT_LIMIT:g})")
        return cur, t_max, False

    def run_fixed(self, v0: np.ndarray, t: float) -> np.ndarray:
        if t <= 0:
            return v0.astype(complex)
        return expm_multiply(self.gen, v0.astype(complex), start=0.0, stop=t,
                             num=2, endpoint=True)[-1]


class _AsymptoticMap:
    """x -> lim_{t->inf} exp(Gen t) x via the absorbing-block linear solve."""

    def __init__(self, gen: sp.csr_matrix, dark: np.ndarray):
        dim = gen.shape[0]
        self.dim = dim
        self.t_idx = np.where(~dark)[0]
        self.a_idx = np.where(dark)[0]
        gc = gen.tocsc()
        self.g_at = gc[self.a_idx][:, self.t_idx].tocsr()
        self.lu = splu(gc[self.t_idx][:, self.t_idx].tocsc()) if self.t_idx.size else None

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        if self.lu is None:
            out[self.a_idx] = x[self.a_idx]
            return out
        xt = x[self.t_idx]
        y = self.lu.solve(xt.real) + 1j * self.lu.solve(xt.imag)
        out[self.a_idx] = x[self.a_idx] - self.g_at @ y
        return out


class _Basis:
    """Evolution backend on an explicit list of basis configurations."""

    def __init__(self, masks: list, n: int, ops_matrices: list):
        self.masks = masks
        self.n = n
        self.index = {s: k for k, s in enumerate(masks)}
        self.d = len(masks)
        self.ops = list(ops_matrices)
        self.rates = np.zeros(self.d)
        for op in self.ops:
            self.rates += np.asarray((op.T @ op).diagonal()).ravel()
        self.liouvillian = _vectorized_dissipator(self.ops, self.d)
        self._asym = None

    def vec_trace(self, v: np.ndarray) -> complex:
        return v[:: self.d + 1].sum()

    def loop(self, dt: float) -> _CriterionLoop:
        return _CriterionLoop(self.liouvillian, dt, trace_of=self.vec_trace)

    def asymptotic(self) -> _AsymptoticMap:
        if self._asym is None:
            dark_state = self.rates == 0
            dark_pair = np.kron(dark_state, dark_state)
            self._asym = _AsymptoticMap(self.liouvillian, dark_pair)
        return self._asym


def _independent_basis(g: Graph) -> _Basis:
    """Basis restricted to independent configurations.

    Valid for any evolution started inside the independent subspace: the flip
    Hamiltonian preserves it and deactivation operators vanish on it (their
    domain requires an occupied vertex with an occupied neighbor), so only
    activation operators remain.
    """
    if g.n > SPARSE_LIMIT:
        raise SizeLimitError(g.n, SPARSE_LIMIT, "protocol simulation")
    nb = g.neighbor_masks
    masks = [s for s in range(1 << g.n)
             if all(not s & nb[i] for i in range(g.n) if (s >> i) & 1)]
    if len(masks) > PROTOCOL_DIM_LIMIT:
        raise SizeLimitError(
            len(masks), PROTOCOL_DIM_LIMIT,
            "protocol basis (independent configurations)")
    index = {s: k for k, s in enumerate(masks)}
    d = len(masks)
    mats = []
    for i in range(g.n):
        bit = 1 << i
        pairs = [(index[s | bit], index[s]) for s in masks
                 if not s & bit and not s & nb[i]]
        if pairs:
            mats.append(_op_from_pairs(pairs, d))
    return _Basis(masks, g.n, mats)


def _engine_for(ops: JumpOperatorSet) -> _Basis:
    """Full-basis engine, cached on the operator set."""
    try:
        return ops._engine  # type: ignore[attr-defined]
    except AttributeError:
        eng = _Basis(list(range(1 << ops.n)), ops.n, list(ops.ops))
        object.__setattr__(ops, "_engine", eng)
        return eng


# ---------------------------------------------------------------------------
# public evolution operations

class DissipationResult(NamedTuple):
    state: DensityVec
    elapsed: float
    converged: bool


class DiagonalResult(NamedTuple):
    populations: np.ndarray
    elapsed: float
    converged: bool


def _check_density(rho: DensityVec, where: str) -> None:
    tr = abs(rho.trace())
    if abs(tr - 1.0) > _TRACE_DRIFT_LIMIT:
        raise IntegrationError(f"{where}: trace deviates from 1 by {abs(tr - 1):.2e}")


def dissipative_evolve(rho: DensityVec, ops: JumpOperatorSet,
                       t_max: float = T_MAX_DEFAULT, tol: float = TOL_DEFAULT,
                       dt: float = DT_DEFAULT) -> DissipationResult:
    """Relax under the jump operators until the stationarity criterion fires.

    The criterion compares consecutive dt-spaced checkpoints,
    |1 - |<<rho(t)|rho(t+dt)>>| / <<rho(t)|rho(t)>>| < tol, and must hold at
    three checkpoints in a row; the reported time T is the first of them.
    Budget exhaustion is reported via converged=False.  Diagonal inputs are
    automatically routed to the classical fast path.
    """
    if rho.n != ops.n:
        raise InstanceError(f"state has n={rho.n}, operators have n={ops.n}")
    if rho.n > DENSE_LIMIT:
        raise SizeLimitError(rho.n, DENSE_LIMIT, "full density-operator evolution")
    _check_density(rho, "dissipative_evolve input")
    if rho.off_diagonal_mass() < 1e-12:
        pops, elapsed, conv = dissipative_evolve_diagonal(
            rho.diagonal(), ops, t_max=t_max, tol=tol, dt=dt)
        d = 1 << rho.n
        vec = np.zeros(d * d, dtype=complex)
        vec[:: d + 1] = pops
        out = DensityVec(vec, rho.n)
        _check_density(out, "dissipative_evolve output")
        return DissipationResult(out, elapsed, conv)
    eng = _engine_for(ops)
    vec, elapsed, conv = eng.loop(dt).run(rho.vec, tol, t_max)
    out = DensityVec(vec, rho.n)
    _check_density(out, "dissipative_evolve output")
    return DissipationResult(out, elapsed, conv)


def classical_generator(ops: JumpOperatorSet) -> sp.csr_matrix:
    """Rate matrix of the embedded classical jump process on populations."""
    d = 1 << ops.n
    acc = sp.csr_matrix((d, d))
    for op in ops.ops:
        acc = acc + op
    return (acc - sp.diags(ops.exit_rates())).tocsr()


def dissipative_evolve_diagonal(pop: np.ndarray, ops: JumpOperatorSet,
                                t_max: float = T_MAX_DEFAULT,
                                tol: float = TOL_DEFAULT,
                                dt: float = DT_DEFAULT) -> DiagonalResult:
    """Classical master equation on populations; agrees with the full
    evolution on diagonal inputs (populations decouple from coherences)."""
    if ops.n > SPARSE_LIMIT:
        raise SizeLimitError(ops.n, SPARSE_LIMIT, "diagonal evolution")
    pop = np.asarray(pop, dtype=float)
    if pop.shape != (1 << ops.n,):
        raise InstanceError(f"population vector must have length 2^{ops.n}")
    if abs(pop.sum() - 1.0) > _TRACE_DRIFT_LIMIT:
        raise IntegrationError("input populations do not sum to 1")
    gen = classical_generator(ops)
    loop = _CriterionLoop(gen, dt, trace_of=lambda v: v.sum())
    vec, elapsed, conv = loop.run(pop.astype(complex), tol, t_max)
    return DiagonalResult(vec.real, elapsed, conv)


def unitary_step(rho: DensityVec, h: PxpHamiltonian, theta: float) -> DensityVec:
    """Conjugate by exp(-i theta H) via the cached eigendecomposition."""
    if rho.n != h.n:
        raise InstanceError(f"state has n={rho.n}, Hamiltonian has n={h.n}")
    w, v = h.eig()
    u = (v * np.exp(-1j * theta * w)) @ v.conj().T
    mat = u @ rho.matrix() @ u.conj().T
    out = DensityVec.from_matrix(rho.n, mat)
    if abs(abs(out.trace()) - 1.0) > 1e-8 or out.herm_defect() > 1e-8:
        raise IntegrationError("unitary step failed to preserve trace/hermiticity")
    return out


# ---------------------------------------------------------------------------
# the alternating protocol

@dataclass(frozen=True)
class ProtocolParams:
    theta: float
    t: float = 10.0
    r_max: int = 100
    target: float = 0.7
    tol: float = TOL_DEFAULT
    dt: float = DT_DEFAULT
    t_policy: str = "asymptotic"   # asymptotic | criterion | fixed
    t_max: float = T_MAX_DEFAULT

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if not 0.0 < self.target < 1.0:
            raise ValueError("target must lie in (0, 1)")
        if self.t_policy not in ("asymptotic", "criterion", "fixed"):
            raise ValueError(f"unknown t_policy {self.t_policy!r}")
        if self.t_policy == "fixed" and self.t <= 0:
            raise ValueError("fixed policy needs t > 0")


@dataclass(frozen=True)
class CycleRecord:
    r: int
    p_mis: float
    p_maximal_total: float
    populations: dict  # bitstring -> population, maximal configurations only


@dataclass(frozen=True)
class CycleTrace:
    records: tuple
    r_hit: int | None

    def p_mis_series(self) -> np.ndarray:
        return np.array([rec.p_mis for rec in self.records])


def run_protocol(g: Graph, params: ProtocolParams) -> CycleTrace:
    """Initial relaxation from the vacuum, then alternate flip-unitary and
    dissipative stages, recording MIS population after every dissipative
    stage (cycle 0 is the initial relaxation).  Stops once p_mis exceeds
    params.target or after r_max cycles.

    The whole trajectory lives in the independent-configuration subspace, so
    the evolution runs on that restricted basis; t_policy selects how each
    dissipative stage ends ("asymptotic" = exact t -> infinity limit via the
    absorbing-block solve, "criterion" = stationarity detection, "fixed" =
    duration params.t).
    """
    eng = _independent_basis(g)
    d = eng.d
    nb = g.neighbor_masks
    maximal = [s for s in eng.masks
               if all(((s >> i) & 1) or (s & nb[i]) for i in range(g.n))]
    target_card = mis_size(g)
    mis_states = [s for s in maximal if s.bit_count() == target_card]

    rows, cols = [], []
    for s in eng.masks:
        for i in range(g.n):
            if not s & nb[i]:
                rows.append(eng.index[s ^ (1 << i)])
                cols.append(eng.index[s])
    h = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(d, d)).toarray()
    w, v = eigh(h)
    u = (v * np.exp(-1j * params.theta * w)) @ v.conj().T

    def relax(vec):
        if params.t_policy == "asymptotic":
            return eng.asymptotic().apply(vec)
        loop = eng.loop(params.dt)
        if params.t_policy == "fixed":
            return loop.run_fixed(vec, params.t)
        out, _, _ = loop.run(vec, params.tol, params.t_max)
        return out

    def record(r, vec) -> CycleRecord:
        mat = vec.reshape((d, d), order="F")
        pops = {mask_config(s, g.n): float(mat[eng.index[s], eng.index[s]].real)
                for s in maximal}
        p_mis = float(sum(mat[eng.index[s], eng.index[s]].real for s in mis_states))
        return CycleRecord(r, p_mis, float(sum(pops.values())), pops)

    vec = np.zeros(d * d, dtype=complex)
    vec[eng.index[0] * (d + 1)] = 1.0
    vec = relax(vec)
    records = [record(0, vec)]
    r_hit = 0 if records[0].p_mis > params.target else None
    r = 0
    while r_hit is None and r < params.r_max:
        r += 1
        mat = vec.reshape((d, d), order="F")
        vec = (u @ mat @ u.conj().T).reshape(-1, order="F")
        vec = relax(vec)
        rec = record(r, vec)
        records.append(rec)
        if rec.p_mis > params.target:
            r_hit = r
    return CycleTrace(tuple(records), r_hit)


def trace_records(graph_id: str, g: Graph, params: ProtocolParams,
                  trace: CycleTrace, top: int = 8) -> list:
    """JSON-lines records for a protocol trace."""
    out = []
    for rec in trace.records:
        ranked = sorted(rec.populations.items(), key=lambda kv: -kv[1])[:top]
        out.append({
            "graph_id": graph_id,
            "n": g.n,
            "k": g.average_degree,
            "theta": params.theta,
            "t_policy": params.t_policy,
            "r": rec.r,
            "p_mis": rec.p_mis,
            "top_populations": dict(ranked),
        })
    return out


# ---------------------------------------------------------------------------
# 3-site-chain analytics

def open_chain_recursion(theta: float, r: int) -> float:
    """MIS population of the 3-site chain after r cycles, from the per-cycle
    population-transfer recursion truncated at fourth order in theta:
    P -> P (1 - theta^4/3) + (1 - P) (2 theta^2/3 - theta^4/6), P0 = 2/3."""
    if r < 0:
        raise ValueError("cycle count must be nonnegative")
    p = 2.0 / 3.0
    a = 1.0 - theta**4 / 3.0
    b = 2.0 * theta**2 / 3.0 - theta**4 / 6.0
    for _ in range(r):
        p = p * a + (1.0 - p) * b
    return p


def open_chain_fixed_point(theta: float) -> float:
    """r -> infinity limit of the recursion: (4 - theta^2) / (4 + theta^2)."""
    return (4.0 - theta**2) / (4.0 + theta**2)


class ThresholdAngle(NamedTuple):
    theta: float
    theta_alt: float


def threshold_angle(target: float) -> ThresholdAngle:
    """Angle whose recursion fixed point equals `target`, by bisection to
    1e-10; `theta_alt` is the alternative documented expression
    sqrt(4(1-T)/(4+3T)), reported for side-by-side comparison only."""
    if not 2.0 / 3.0 <= target < 1.0:
        raise ValueError(f"target must lie in [2/3, 1), got {target}")
    lo, hi = 0.0, 2.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if open_chain_fixed_point(mid) > target:
            lo = mid
        else:
            hi = mid
    alt = math.sqrt(4.0 * (1.0 - target) / (4.0 + 3.0 * target))
    return ThresholdAngle(0.5 * (lo + hi), alt)


def plateau_alt_chain3(theta: float) -> float:
    """Alternative documented plateau expression for the 3-site chain; kept
    for comparison with open_chain_fixed_point (they differ at O(theta^2))."""
    return 1.0 - theta**2 / (0.75 * theta**2 + 1.0)


def plateau_alt_chain5(theta: float) -> float:
    """Documented plateau expression for the 5-site chain (comparison only)."""
    return 1.0 - theta**2 / (5.0 / 16.0 + 147.0 / 160.0 * theta**2)
