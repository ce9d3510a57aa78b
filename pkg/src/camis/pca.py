"""Monte-Carlo simulation of the synchronous stochastic automaton.

One synchronous sweep works on the old configuration: every vertex with an
occupied neighbor turns (or stays) off.  While any edge constraint is violated
the sweep is purely dissipative; once the configuration is a valid independent
set, each free vertex (unoccupied, with fully unoccupied neighborhood) turns
on independently with probability p.  Absorbing states are exactly the maximal
independent sets.

Runs are reproducible: run index r of an ensemble uses a Philox stream keyed
by base_seed + r, and each activation sweep consumes one length-n uniform
block indexed by vertex, so outcomes do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, IndependenceClass, classify, config_mask, mask_config

MAX_STEPS_DEFAULT = 1_000_000


@dataclass(frozen=True)
class PcaParams:
    p: float
    seed: int = 0
    max_steps: int = MAX_STEPS_DEFAULT

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"activation probability must be in [0, 1], got {self.p}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class RunResult:
    final: str
    steps: int
    absorbed: bool
    cls: IndependenceClass | None  # None when n exceeds the enumeration limit


@dataclass(frozen=True)
class EnsembleStats:
    p_mis_hat: float
    mean_steps: float
    var_steps: float
    runs: int
    unabsorbed: int

    @property
    def absorbed(self) -> int:
        return self.runs - self.unabsorbed


def _classify_guarded(g: Graph, mask: int):
    from .errors import SizeLimitError

    try:
        return classify(g, mask)
    except SizeLimitError:
        return None


def _rng_for_seed(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _blocked_mask(nb, mask: int) -> int:
    out = 0
    m = mask
    while m:
        out |= nb[(m & -m).bit_length() - 1]
        m &= m - 1
    return out


def step_mask(g: Graph, mask: int, p: float, rng: np.random.Generator) -> int:
    """One synchronous sweep on a mask configuration."""
    nb = g.neighbor_masks
    blocked = _blocked_mask(nb, mask)
    survivors = mask & ~blocked
    if survivors != mask:
        return survivors
    free = g.full_mask & ~mask & ~blocked
    if free == 0:
        return mask
    u = rng.random(g.n)
    new = mask
    m = free
    while m:
        i = (m & -m).bit_length() - 1
        if u[i] < p:
            new |= 1 << i
        m &= m - 1
    return new


def pca_step(g: Graph, c, params: PcaParams, rng_state: np.random.Generator):
    """Public single-step update; returns the same representation it was given."""
    mask = config_mask(c, g.n)
    new = step_mask(g, mask, params.p, rng_state)
    return mask_config(new, g.n) if isinstance(c, str) else new


def run_to_absorption(g: Graph, params: PcaParams, start=None) -> RunResult:
    """Iterate sweeps from the empty configuration until a maximal set or budget.

    `start` overrides the initial configuration for diagnostics only.  Steps
    count applied sweeps; absorption is checked after each sweep and a
    pre-absorbed start counts as 0.  Budget exhaustion is reported via
    absorbed=False, never an exception.
    """
    rng = _rng_for_seed(params.seed)
    nb = g.neighbor_masks
    full = g.full_mask
    n = g.n
    p = params.p
    mask = 0 if start is None else config_mask(start, n)
    steps = 0
    while True:
        blocked = _blocked_mask(nb, mask)
        survivors = mask & ~blocked
        if survivors == mask:  # independent
            free = full & ~mask & ~blocked
            if free == 0:
                return RunResult(mask_config(mask, n), steps, True,
                                 _classify_guarded(g, mask))
            if steps >= params.max_steps:
                break
            u = rng.random(n)
            m = free
            new = mask
            while m:
                i = (m & -m).bit_length() - 1
                if u[i] < p:
                    new |= 1 << i
                m &= m - 1
            mask = new
        else:
            if steps >= params.max_steps:
                break
            mask = survivors
        steps += 1
    return RunResult(mask_config(mask, n), steps, False, _classify_guarded(g, mask))


def _aggregate(finals, steps, absorbed, g: Graph, runs: int) -> EnsembleStats:
    from .errors import SizeLimitError
    from .graphs import mis_size

    try:
        target = mis_size(g)
    except SizeLimitError:
        target = None  # maximum class unknowable; p_mis_hat stays NaN
    n_abs = int(np.count_nonzero(absorbed))
    if n_abs:
        if target is not None:
            pop = np.array([int(f).bit_count() for f in finals[absorbed]])
            p_mis = float(np.count_nonzero(pop == target) / n_abs)
        else:
            p_mis = math.nan
        st = steps[absorbed].astype(float)
        mean = float(st.mean())
        var = float(st.var(ddof=1)) if n_abs > 1 else 0.0
    else:
        p_mis, mean, var = math.nan, math.nan, math.nan
    return EnsembleStats(p_mis, mean, var, runs, runs - n_abs)


def _estimate_replay(g, p, runs, base_seed, max_steps) -> EnsembleStats:
    finals = np.zeros(runs, dtype=np.uint64)
    steps = np.zeros(runs, dtype=np.int64)
    absorbed = np.zeros(runs, dtype=bool)
    for r in range(runs):
        res = run_to_absorption(g, PcaParams(p, seed=base_seed + r, max_steps=max_steps))
        finals[r] = config_mask(res.final, g.n)
        steps[r] = res.steps
        absorbed[r] = res.absorbed
    return _aggregate(finals, steps, absorbed, g, runs)


def _byte_or_tables(g: Graph):
    nbytes = (g.n + 7) // 8
    nb = g.neighbor_masks
    tables = np.zeros((nbytes, 256), dtype=np.uint32)
    for b in range(nbytes):
        for v in range(256):
            acc = 0
            for bit in range(8):
                i = 8 * b + bit
                if (v >> bit) & 1 and i < g.n:
                    acc |= nb[i]
            tables[b, v] = acc
    return tables


def _estimate_batched(g, p, runs, base_seed, max_steps) -> EnsembleStats:
    """Vectorized ensemble: all runs advance in lockstep on one Philox stream.

    Statistically identical to the replay path but with a different random
    number layout, so individual runs are not seed-addressable; deterministic
    per (graph, p, runs, base_seed).
    """
    if g.n > 32:
        raise ValueError("batched ensembles support n <= 32")
    rng = _rng_for_seed([0xBA7C4ED, base_seed])
    tables = _byte_or_tables(g)
    full = np.uint32(g.full_mask)
    n = g.n
    states = np.zeros(runs, dtype=np.uint32)
    steps_done = np.zeros(runs, dtype=np.int64)
    finals = np.zeros(runs, dtype=np.uint64)
    absorbed = np.zeros(runs, dtype=bool)
    alive = np.arange(runs)
    step = 0
    while alive.size and step <= max_steps:
        s = states[alive]
        blocked = tables[0, s & np.uint32(255)]
        for b in range(1, tables.shape[0]):
            blocked |= tables[b, (s >> np.uint32(8 * b)) & np.uint32(255)]
        survivors = s & ~blocked
        independent = survivors == s
        free = full & ~s & ~blocked
        done = independent & (free == 0)
        if done.any():
            idx = alive[done]
            finals[idx] = states[idx]
            steps_done[idx] = step
            absorbed[idx] = True
            keep = ~done
            alive = alive[keep]
            s, survivors, independent, free = (
                s[keep], survivors[keep], independent[keep], free[keep])
        if not alive.size or step == max_steps:
            break
        act = survivors.copy()
        rows = np.where(independent)[0]
        if rows.size:
            u = rng.random((rows.size, n))
            add = np.zeros(rows.size, dtype=np.uint32)
            fr = free[rows]
            for i in range(n):
                hit = (u[:, i] < p) & (((fr >> np.uint32(i)) & np.uint32(1)) != 0)
                add |= hit.astype(np.uint32) << np.uint32(i)
            act[rows] = s[rows] | add
        states[alive] = act
        step += 1
    if alive.size:
        steps_done[alive] = max_steps
    return _aggregate(finals, steps_done, absorbed, g, runs)


def estimate_ensemble(g: Graph, p: float, runs: int, base_seed: int,
                      max_steps: int = MAX_STEPS_DEFAULT,
                      method: str = "replay") -> EnsembleStats:
    """Aggregate `runs` independent runs with seeds base_seed..base_seed+runs-1.

    p_mis_hat is the Maximum-class fraction among absorbed runs; it is NaN
    when no run absorbed or when the graph exceeds the exact-enumeration limit
    (the maximum cardinality is then unknown).  Step moments are over absorbed
    runs.  method="batched" selects the vectorized engine (see
    _estimate_batched) for campaign-scale ensembles.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"activation probability must be in [0, 1], got {p}")
    if method == "replay":
        return _estimate_replay(g, p, runs, base_seed, max_steps)
    if method == "batched":
        return _estimate_batched(g, p, runs, base_seed, max_steps)
    raise ValueError(f"unknown method {method!r}")


def sweep_p(g: Graph, p_grid, runs: int, base_seed: int,
            max_steps: int = MAX_STEPS_DEFAULT,
            method: str = "replay") -> list[tuple[float, EnsembleStats]]:
    """One ensemble per grid point, with disjoint seed ranges per point."""
    out = []
    for k, p in enumerate(p_grid):
        stats = estimate_ensemble(g, p, runs, base_seed + k * runs,
                                  max_steps=max_steps, method=method)
        out.append((float(p), stats))
    return out


def stats_record(graph_id: str, p: float, stats: EnsembleStats, seed: int) -> dict:
    """JSON-lines record for one ensemble."""
    return {
        "graph_id": graph_id,
        "p": p,
        "runs": stats.runs,
        "p_mis_hat": stats.p_mis_hat,
        "mean_steps": stats.mean_steps,
        "var_steps": stats.var_steps,
        "unabsorbed": stats.unabsorbed,
        "seed": seed,
    }
