"""Command-line interface.

Machine-readable output (JSON-lines or CSV) goes to stdout or --out; human
summaries go to stderr.  Every run emits a manifest (command, arguments, seed,
tool version): as a sidecar <out>.manifest.json when --out is given, else as
the first JSON line on stdout.  Exit codes: 0 success, 2 usage/validation,
3 runtime or numerical failure.
"""

from __future__ import annotations

import configparser
import contextlib
import functools
import json
import sys
from importlib import resources
from pathlib import Path

import click

from . import __version__
from .errors import InstanceError, IntegrationError, NumericalError, SizeLimitError
from .graphs import Graph, gen_open_chain, gen_random_graph, gen_unit_disk, read_graph, write_edge_list
from .markov import (absorption_analysis, builtin_graph, four_node_mis_probability,
                     house_mis_probability, house_mis_probability_derived)
from .pca import estimate_ensemble, stats_record
from .quantum import ProtocolParams, run_protocol, trace_records
from .experiments import load_campaign_spec, run_campaign

_VALIDATION_ERRORS = (ValueError, InstanceError, SizeLimitError, KeyError)
_RUNTIME_ERRORS = (NumericalError, IntegrationError, ArithmeticError)


def _fail(code: int, msg: str):
    click.echo(f"camis: error: {msg}", err=True)
    sys.exit(code)


def command_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except _VALIDATION_ERRORS as exc:
            _fail(2, str(exc))
        except _RUNTIME_ERRORS as exc:
            _fail(3, str(exc))
        except OSError as exc:
            _fail(2, str(exc))
    return wrapper


@contextlib.contextmanager
def _thread_bound(threads):
    if threads is None:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # bound is best-effort without threadpoolctl
        yield
        return
    with threadpool_limits(limits=threads):
        yield


def _resolve_graph(ref: str) -> tuple[Graph, str]:
    """Resolve --graph: a file path, builtin:NAME, or chain:N."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        return builtin_graph(name), name
    if ref.startswith("chain:"):
        n = int(ref.split(":", 1)[1])
        return gen_open_chain(n), f"chain-{n}"
    return read_graph(ref), Path(ref).name


def _manifest(command: str, arguments: dict) -> dict:
    return {
        "record": "manifest",
        "tool": "camis",
        "version": __version__,
        "command": command,
        "arguments": arguments,
    }


def _emit_lines(records: list, out, manifest: dict) -> None:
    if out is None:
        click.echo(json.dumps(manifest, sort_keys=True))
        for rec in records:
            click.echo(json.dumps(rec, sort_keys=True))
    else:
        path = Path(out)
        with path.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        Path(str(path) + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        click.echo(f"wrote {len(records)} records to {path}", err=True)


@click.group()
@click.version_option(__version__, prog_name="camis")
def main():
    """Maximum-independent-set solvers built on cellular-automaton dynamics."""


# ---------------------------------------------------------------------------
# gen

@main.group()
def gen():
    """Generate problem instances (edge-list files)."""


def _finish_gen(g: Graph, out, seed, kind: str, extra: dict):
    if out:
        write_edge_list(g, out)
        args = {"kind": kind, "n": g.n, "seed": seed, **extra, "out": str(out)}
        Path(str(out) + ".manifest.json").write_text(
            json.dumps(_manifest("gen", args), indent=2, sort_keys=True) + "\n")
    else:
        click.echo(f"{g.n} {g.m}")
        for i, j in g.edges:
            click.echo(f"{i + 1} {j + 1}")
    click.echo(f"n={g.n} m={g.m} realized average degree {g.average_degree:.6g}",
               err=True)


@gen.command("chain")
@click.argument("n", type=int)
@click.option("--out", type=click.Path(), default=None)
@command_errors
def gen_chain(n, out):
    """Open chain with N vertices."""
    _finish_gen(gen_open_chain(n), out, None, "chain", {})


@gen.command("random")
@click.argument("n", type=int)
@click.argument("k", type=float)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@command_errors
def gen_random(n, k, seed, out):
    """Uniform random graph with round(k*n/2) edges."""
    _finish_gen(gen_random_graph(n, k, seed), out, seed, "random", {"k": k})


@gen.command("disk")
@click.argument("n", type=int)
@click.argument("radius", type=float)
@click.option("--box", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@command_errors
def gen_disk(n, radius, box, seed, out):
    """Random unit-disk graph in a box."""
    _finish_gen(gen_unit_disk(n, radius, box, seed), out, seed, "disk",
                {"radius": radius, "box": box})


# ---------------------------------------------------------------------------
# pca

@main.command("pca")
@click.option("--graph", "graph_ref", required=True)
@click.option("--p", type=float, required=True)
@click.option("--runs", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--method", type=click.Choice(["replay", "batched"]), default="replay",
              show_default=True)
@click.option("--max-steps", type=int, default=1_000_000, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@command_errors
def cmd_pca(graph_ref, p, runs, seed, method, max_steps, threads, out):
    """Monte-Carlo ensemble of automaton runs (JSON-lines stats)."""
    if runs < 1:
        raise ValueError("--runs must be >= 1")
    g, gid = _resolve_graph(graph_ref)
    with _thread_bound(threads):
        stats = estimate_ensemble(g, p, runs, seed, max_steps=max_steps,
                                  method=method)
    rec = stats_record(gid, p, stats, seed)
    manifest = _manifest("pca", {
        "graph": graph_ref, "p": p, "runs": runs, "seed": seed,
        "method": method, "max_steps": max_steps})
    _emit_lines([rec], out, manifest)
    if stats.unabsorbed:
        click.echo(f"{stats.unabsorbed}/{runs} runs hit the step budget",
                   err=True)


# ---------------------------------------------------------------------------
# exact

_FIXTURE_FORMS = {
    "four-node": {"closed_form": four_node_mis_probability},
    "house": {"closed_form": house_mis_probability,
              "closed_form_derived": house_mis_probability_derived},
}


def _fixture_name(g: Graph):
    for name in _FIXTURE_FORMS:
        if builtin_graph(name) == g:
            return name
    return None


@main.command("exact")
@click.option("--graph", "graph_ref", required=True)
@click.option("--p", "p_grid", type=float, multiple=True, required=True,
              help="may be repeated for a grid")
@click.option("--limit", type=int, default=None,
              help="override the exact-analysis size limit")
@click.option("--threads", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@command_errors
def cmd_exact(graph_ref, p_grid, limit, threads, out):
    """Exact absorption analysis over a p grid (JSON report)."""
    g, gid = _resolve_graph(graph_ref)
    fixture = _fixture_name(g)
    reports = []
    with _thread_bound(threads):
        for p in p_grid:
            rep = absorption_analysis(g, p, limit=limit).to_json_dict()
            if fixture:
                for label, fn in _FIXTURE_FORMS[fixture].items():
                    val = fn(p)
                    rep[label] = val
                    rep[f"{label}_diff"] = abs(rep["p_mis"] - val)
            reports.append(rep)
    doc = {"graph_id": gid, "n": g.n, "m": g.m, "fixture": fixture,
           "reports": reports}
    manifest = _manifest("exact", {"graph": graph_ref, "p_grid": list(p_grid),
                                   "limit": limit})
    if out is None:
        click.echo(json.dumps(manifest, sort_keys=True))
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        Path(str(out) + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        click.echo(f"wrote report to {out}", err=True)


# ---------------------------------------------------------------------------
# qca

@main.command("qca")
@click.option("--graph", "graph_ref", required=True)
@click.option("--theta", type=float, required=True)
@click.option("--target", type=float, default=0.7, show_default=True)
@click.option("--rmax", type=int, default=100, show_default=True)
@click.option("--t-policy", type=click.Choice(["asymptotic", "criterion", "fixed"]),
              default="asymptotic", show_default=True)
@click.option("--t", type=float, default=10.0, show_default=True,
              help="stage duration for the fixed policy")
@click.option("--tol", type=float, default=1e-5, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@command_errors
def cmd_qca(graph_ref, theta, target, rmax, t_policy, t, tol, threads, out):
    """Alternating dissipative-unitary protocol (JSON-lines cycle trace)."""
    g, gid = _resolve_graph(graph_ref)
    params = ProtocolParams(theta=theta, t=t, r_max=rmax, target=target,
                            tol=tol, t_policy=t_policy)
    with _thread_bound(threads):
        trace = run_protocol(g, params)
    records = trace_records(gid, g, params, trace)
    manifest = _manifest("qca", {
        "graph": graph_ref, "theta": theta, "target": target, "rmax": rmax,
        "t_policy": t_policy, "t": t, "tol": tol})
    _emit_lines(records, out, manifest)
    final = trace.records[-1].p_mis
    hit = "none" if trace.r_hit is None else trace.r_hit
    click.echo(f"r_hit={hit} final p_mis={final:.6f}", err=True)


# ---------------------------------------------------------------------------
# campaign

def _resolve_spec(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    preset = resources.files("camis.data") / "presets" / f"{ref}.cfg"
    with resources.as_file(preset) as path:
        if path.exists():
            return path
    raise ValueError(f"no campaign spec file or preset named {ref!r}")


@main.command("campaign")
@click.argument("spec_ref")
@click.option("--out", type=click.Path(), required=True,
              help="campaign output directory")
@click.option("--resume/--no-resume", default=True, show_default=True)
@click.option("--threads", type=int, default=None)
@command_errors
def cmd_campaign(spec_ref, out, resume, threads):
    """Run a campaign from an INI spec file or a bundled preset name."""
    path = _resolve_spec(spec_ref)
    try:
        spec = load_campaign_spec(path)
    except configparser.Error as exc:
        raise ValueError(f"{path}: {exc}") from exc
    with _thread_bound(threads):
        rows = run_campaign(spec, out, resume=resume)
    failed = sum(1 for r in rows if r["status"] != "ok")
    click.echo(f"{len(rows)} cells -> {out}/results.csv"
               + (f" ({failed} failed)" if failed else ""), err=True)
    if failed:
        for r in rows:
            if r["status"] != "ok":
                click.echo(f"  failed cell {r}", err=True)


if __name__ == "__main__":
    main()
