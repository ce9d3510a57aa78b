"""Ensemble orchestration, statistics, and scaling-law fits.

Campaigns are declared in INI files (key = value with sections), executed
cell by cell with seeds derived from (campaign seed, cell index, instance
index), and written as one CSV row per cell plus a manifest.  Completed cells
are cached as JSON files, so an interrupted campaign resumes where it
stopped and a finished one is byte-stable under re-runs.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .graphs import Graph, gen_open_chain, gen_random_graph, gen_unit_disk
from .pca import estimate_ensemble
from .quantum import (DensityVec, ProtocolParams, build_jump_operators,
                      dissipative_evolve_diagonal, run_protocol)

MODES = (
    "classical_heatmap",
    "classical_p_sweep",
    "classical_scaling_N",
    "classical_scaling_k",
    "quantum_relaxation",
    "quantum_cycles",
)


# ---------------------------------------------------------------------------
# scaling-law fits

@dataclass(frozen=True)
class FitResult:
    """Least-squares fit in the space where the model is linear.

    params maps parameter name -> (value, standard error); rmse is the
    root-mean-square residual in the linearizing (log) space, rmse_data the
    same in data space; fitted holds model predictions at the input points.
    """

    model: str
    label: str
    params: dict
    rmse: float
    rmse_data: float
    n_points: int
    fitted: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "label": self.label,
            "params": {k: {"value": v, "stderr": s} for k, (v, s) in self.params.items()},
            "rmse": self.rmse,
            "rmse_data": self.rmse_data,
            "n_points": self.n_points,
        }


def _linear_fit(x: np.ndarray, y: np.ndarray):
    """Plain least squares y ~ a + b x with standard errors.

    Two points give an exact line with infinite standard errors (warned);
    fewer than two are rejected.
    """
    n = len(x)
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    if np.ptp(x) == 0:
        raise ValueError("inputs have no spread; the fit is degenerate")
    design = np.column_stack([np.ones(n), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    if n == 2:
        warnings.warn("two-point fit: standard errors are infinite", stacklevel=3)
        return beta, np.array([math.inf, math.inf]), 0.0
    sigma2 = float(resid @ resid) / (n - 2)
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return beta, np.sqrt(np.diag(cov)), float(np.sqrt(np.mean(resid**2)))


def _positive(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.size and arr.min() <= 0:
        raise ValueError(f"{name} must be strictly positive for a log-space fit")
    return arr


def fit_power(xs, ys, label: str = "power", names=("gamma", "delta")) -> FitResult:
    """y = gamma * x^delta via regression of log y on log x."""
    x = _positive(xs, "xs")
    y = _positive(ys, "ys")
    beta, se, rmse_log = _linear_fit(np.log(x), np.log(y))
    gamma, delta = math.exp(beta[0]), beta[1]
    fitted = gamma * x**delta
    params = {names[0]: (gamma, gamma * se[0]), names[1]: (delta, se[1])}
    return FitResult("power_xy", label, params, rmse_log,
                     float(np.sqrt(np.mean((y - fitted) ** 2))), len(x), fitted)


def fit_exponential(xs, ys, label: str = "exponential") -> FitResult:
    """y = exp(Gamma + Delta x) via regression of log y on x."""
    x = np.asarray(xs, dtype=float)
    y = _positive(ys, "ys")
    beta, se, rmse_log = _linear_fit(x, np.log(y))
    fitted = np.exp(beta[0] + beta[1] * x)
    params = {"Gamma": (beta[0], se[0]), "Delta": (beta[1], se[1])}
    return FitResult("exponential", label, params, rmse_log,
                     float(np.sqrt(np.mean((y - fitted) ** 2))), len(x), fitted)


def fit_power_ratio(ns, ks, ts, label: str = "relaxation") -> FitResult:
    """T = alpha * (N/k)^beta; `fitted` doubles as parity-plot data."""
    n = _positive(ns, "ns")
    k = _positive(ks, "ks")
    res = fit_power(n / k, ts, label=label, names=("alpha", "beta"))
    return FitResult("power_ratio", label, res.params, res.rmse,
                     res.rmse_data, res.n_points, res.fitted)


def fit_cycles(ns, rs, label: str = "cycles") -> FitResult:
    """r = a * N^b, same machinery as fit_power."""
    return fit_power(ns, rs, label=label, names=("a", "b"))


# ---------------------------------------------------------------------------
# campaign specification

@dataclass(frozen=True)
class CampaignSpec:
    mode: str
    n_grid: tuple = ()
    k_grid: tuple = ()
    p_grid: tuple = ()
    theta_grid: tuple = ()
    instances: int = 1
    runs: int = 1
    seed: int = 0
    generator: str = "gnm"        # gnm | unit_disk | chain
    radius: float = 0.35
    box: float = 1.0
    max_steps: int = 1_000_000
    method: str = "batched"       # ensemble engine for classical modes
    target: float = 0.7
    r_max: int = 500
    t_policy: str = "asymptotic"
    tol: float = 1e-5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r} (have {', '.join(MODES)})")
        if self.instances < 1 or self.runs < 1:
            raise ValueError("instances and runs must be >= 1")

    def cells(self) -> list:
        """Grid cells in deterministic order."""
        if self.mode in ("classical_heatmap", "classical_p_sweep"):
            return [{"n": n, "k": k, "p": p}
                    for n in self.n_grid for k in self.k_grid for p in self.p_grid]
        if self.mode == "classical_scaling_N":
            k = self.k_grid[0] if self.k_grid else 3.0
            p = self.p_grid[0] if self.p_grid else 0.9
            return [{"n": n, "k": k, "p": p} for n in self.n_grid]
        if self.mode == "classical_scaling_k":
            n = self.n_grid[0]
            p = self.p_grid[0] if self.p_grid else 0.9
            return [{"n": n, "k": k, "p": p} for k in self.k_grid]
        if self.mode == "quantum_relaxation":
            return [{"n": n, "k": k} for n in self.n_grid for k in self.k_grid]
        # quantum_cycles
        if self.generator == "chain":
            return [{"n": n, "theta": th}
                    for n in self.n_grid for th in self.theta_grid]
        return [{"n": n, "k": k, "theta": th}
                for n in self.n_grid for k in self.k_grid for th in self.theta_grid]

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_values(raw: str) -> tuple:
    vals = []
    for tok in raw.replace(",", " ").split():
        vals.append(float(tok) if ("." in tok or "e" in tok.lower()) else int(tok))
    return tuple(vals)


def load_campaign_spec(path) -> CampaignSpec:
    """Parse an INI campaign file; see data/presets for examples."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ValueError(f"cannot read campaign spec {path}")
    try:
        camp = cp["campaign"]
    except KeyError:
        raise ValueError(f"{path}: missing [campaign] section") from None
    grid = cp["grid"] if cp.has_section("grid") else {}
    quantum = cp["quantum"] if cp.has_section("quantum") else {}
    kw = dict(
        mode=camp.get("mode", ""),
        seed=camp.getint("seed", fallback=0),
        instances=camp.getint("instances", fallback=1),
        runs=camp.getint("runs", fallback=1),
        generator=camp.get("generator", "gnm"),
        method=camp.get("method", "batched"),
        max_steps=camp.getint("max_steps", fallback=1_000_000),
        radius=camp.getfloat("radius", fallback=0.35),
        box=camp.getfloat("box", fallback=1.0),
    )
    if "n" in grid:
        kw["n_grid"] = tuple(int(v) for v in _parse_values(grid["n"]))
    if "k" in grid:
        kw["k_grid"] = tuple(float(v) for v in _parse_values(grid["k"]))
    if "p" in grid:
        kw["p_grid"] = tuple(float(v) for v in _parse_values(grid["p"]))
    if "theta" in grid:
        kw["theta_grid"] = tuple(float(v) for v in _parse_values(grid["theta"]))
    if quantum:
        kw["target"] = float(quantum.get("target", 0.7))
        kw["r_max"] = int(quantum.get("r_max", 500))
        kw["t_policy"] = quantum.get("t_policy", "asymptotic")
        kw["tol"] = float(quantum.get("tol", 1e-5))
    return CampaignSpec(**kw)


# ---------------------------------------------------------------------------
# campaign execution

def _instance_seed(spec: CampaignSpec, cell_idx: int, inst: int) -> int:
    ss = np.random.SeedSequence([spec.seed, cell_idx, inst])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _make_graph(spec: CampaignSpec, cell: dict, cell_idx: int, inst: int) -> Graph:
    n = cell["n"]
    seed = _instance_seed(spec, cell_idx, inst)
    if spec.generator == "chain":
        return gen_open_chain(n)
    if spec.generator == "unit_disk":
        return gen_unit_disk(n, spec.radius, spec.box, seed)
    return gen_random_graph(n, cell["k"], seed)


def _run_classical_cell(spec: CampaignSpec, cell: dict, cell_idx: int) -> dict:
    per_instance_runs = spec.runs
    p = cell["p"]
    pmis, steps = [], []
    unabsorbed = 0
    for inst in range(spec.instances):
        g = _make_graph(spec, cell, cell_idx, inst)
        stats = estimate_ensemble(
            g, p, per_instance_runs,
            base_seed=_instance_seed(spec, cell_idx, 10_000 + inst),
            max_steps=spec.max_steps, method=spec.method)
        if stats.absorbed:
            pmis.append(stats.p_mis_hat)
            steps.append(stats.mean_steps)
        unabsorbed += stats.unabsorbed
    out = dict(cell)
    out.update(
        instances=spec.instances, runs=per_instance_runs, unabsorbed=unabsorbed,
        p_mis_mean=float(np.mean(pmis)) if pmis else math.nan,
        p_mis_std=float(np.std(pmis, ddof=1)) if len(pmis) > 1 else 0.0,
        steps_mean=float(np.mean(steps)) if steps else math.nan,
        steps_var=float(np.var(steps, ddof=1)) if len(steps) > 1 else 0.0,
    )
    return out


def _run_scaling_cell(spec: CampaignSpec, cell: dict, cell_idx: int) -> dict:
    """One absorption run per fresh instance, as in the step-scaling studies."""
    steps = []
    unabsorbed = 0
    for inst in range(spec.runs):
        g = _make_graph(spec, cell, cell_idx, inst)
        stats = estimate_ensemble(
            g, cell["p"], 1, base_seed=_instance_seed(spec, cell_idx, 10_000 + inst),
            max_steps=spec.max_steps, method="replay")
        if stats.absorbed:
            steps.append(stats.mean_steps)
        else:
            unabsorbed += 1
    out = dict(cell)
    out.update(
        runs=spec.runs, unabsorbed=unabsorbed,
        steps_mean=float(np.mean(steps)) if steps else math.nan,
        steps_var=float(np.var(steps, ddof=1)) if len(steps) > 1 else 0.0,
    )
    return out


def _run_relaxation_cell(spec: CampaignSpec, cell: dict, cell_idx: int) -> dict:
    times = []
    for inst in range(spec.instances):
        g = _make_graph(spec, cell, cell_idx, inst)
        ops = build_jump_operators(g)
        pop = np.zeros(1 << g.n)
        pop[0] = 1.0
        res = dissipative_evolve_diagonal(pop, ops, tol=spec.tol)
        times.append(res.elapsed)
    out = dict(cell)
    out.update(
        instances=spec.instances,
        t_mean=float(np.mean(times)),
        t_var=float(np.var(times, ddof=1)) if len(times) > 1 else 0.0,
    )
    return out


def _run_cycles_cell(spec: CampaignSpec, cell: dict, cell_idx: int) -> dict:
    hits, finals = [], []
    n_inst = 1 if spec.generator == "chain" else spec.instances
    for inst in range(n_inst):
        g = _make_graph(spec, cell, cell_idx, inst)
        params = ProtocolParams(theta=cell["theta"], r_max=spec.r_max,
                                target=spec.target, t_policy=spec.t_policy,
                                tol=spec.tol)
        trace = run_protocol(g, params)
        finals.append(trace.records[-1].p_mis)
        if trace.r_hit is not None:
            hits.append(trace.r_hit)
    out = dict(cell)
    out.update(
        instances=n_inst,
        r_hit_mean=float(np.mean(hits)) if hits else math.nan,
        r_hit_var=float(np.var(hits, ddof=1)) if len(hits) > 1 else 0.0,
        missed=n_inst - len(hits),
        p_mis_final_mean=float(np.mean(finals)),
    )
    return out


_CELL_RUNNERS = {
    "classical_heatmap": _run_classical_cell,
    "classical_p_sweep": _run_classical_cell,
    "classical_scaling_N": _run_scaling_cell,
    "classical_scaling_k": _run_scaling_cell,
    "quantum_relaxation": _run_relaxation_cell,
    "quantum_cycles": _run_cycles_cell,
}


def _cell_key(cell: dict) -> str:
    return "_".join(f"{k}={cell[k]}" for k in sorted(cell))


def _spec_hash(spec: CampaignSpec) -> str:
    return hashlib.sha256(
        json.dumps(spec.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _campaign_fits(spec: CampaignSpec, rows: list) -> dict:
    """Scaling fits attached to the campaign output where they apply."""
    good = [r for r in rows if r.get("status") == "ok"]
    try:
        if spec.mode == "classical_scaling_N":
            fit = fit_power([r["n"] for r in good], [r["steps_mean"] for r in good],
                            label="steps_vs_n")
        elif spec.mode == "classical_scaling_k":
            fit = fit_exponential([r["k"] for r in good],
                                  [r["steps_mean"] for r in good],
                                  label="steps_vs_k")
        elif spec.mode == "quantum_relaxation":
            fit = fit_power_ratio([r["n"] for r in good], [r["k"] for r in good],
                                  [r["t_mean"] for r in good])
        elif spec.mode == "quantum_cycles":
            pts = [r for r in good if not math.isnan(r["r_hit_mean"])
                   and r["r_hit_mean"] > 0]
            fit = fit_cycles([r["n"] for r in pts], [r["r_hit_mean"] for r in pts])
        else:
            return {}
    except ValueError as exc:
        return {"error": str(exc)}
    return fit.to_json_dict()


def run_campaign(spec: CampaignSpec, out_dir, resume: bool = True) -> list:
    """Execute all cells, write <out_dir>/results.csv, cells/*.json, fits.json
    (scaling modes) and manifest.json.  Per-cell failures are recorded and the
    campaign continues; completed cells on disk are skipped when resuming."""
    out = Path(out_dir)
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    runner = _CELL_RUNNERS[spec.mode]
    rows = []
    for idx, cell in enumerate(spec.cells()):
        cache = cells_dir / f"{_cell_key(cell)}.json"
        if resume and cache.exists():
            rows.append(json.loads(cache.read_text()))
            continue
        try:
            row = runner(spec, cell, idx)
            row["status"] = "ok"
            row["error"] = ""
        except Exception as exc:  # cell failures must not kill the campaign
            row = dict(cell)
            row["status"] = "failed"
            row["error"] = f"{type(exc).__name__}: {exc}"
        cache.write_text(json.dumps(row, sort_keys=True) + "\n")
        rows.append(row)
    fields = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, restval="")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    (out / "results.csv").write_text(buf.getvalue())
    fits = _campaign_fits(spec, rows)
    if fits:
        (out / "fits.json").write_text(json.dumps(fits, indent=2, sort_keys=True) + "\n")
    manifest = {
        "spec": spec.to_dict(),
        "spec_hash": _spec_hash(spec),
        "version": __version__,
        "cells": len(rows),
        "failed": sum(1 for r in rows if r["status"] != "ok"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows
