"""Command-line front end.

Commands mirror the library workflow: generate a benchmark bundle, build a
reduced bundle from an interpolation plan, evaluate transfer functions,
simulate, and compare. Every report path writes delimited output and, by
default, a rendered figure next to it (disable with --no-plot).

Exit codes: 0 success, 1 numerical failure, 2 usage error. The environment
variable STRMOR_THREADS bounds the worker count of parameter sweeps.
"""

from __future__ import annotations

import dataclasses
import json
import sys as _sys
from pathlib import Path

import click
import numpy as np

from . import bench as benchmod
from . import reports
from .bundleio import BundleError, load_plan, load_system, save_system
from .model import ModelError, ReducedSystem, parse_family
from .reduction import ReductionError, build_rom
from .signals import Signal, SignalError
from .simulate import SimulationError, TimeGrid, error_metrics, simulate, \
    sweep_error
from .transfer import SolveError, family_arity, tf_family

_NUMERICAL_ERRORS = (SolveError, ReductionError, SimulationError, BundleError,
                     ModelError)


def _fail(exc) -> "_sys.NoReturn":
    click.echo(f"error: {exc}", err=True)
    raise SystemExit(1)


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise click.UsageError(f"cannot parse complex number {text!r}")


def _parse_params(text: str):
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"cannot parse parameter vector {text!r}")


def _load_full(path):
    sys = load_system(path)
    if isinstance(sys, ReducedSystem):
        return sys.system
    return sys


@click.group()
def main():
    """Structure-preserving interpolatory reduction of polynomial systems."""


@main.group()
def bench():
    """Benchmark model generators."""


@bench.command("gen")
@click.option("--name", required=True,
              type=click.Choice(["chafee", "msd", "delay-rod", "planted"]))
@click.option("--size", required=True, type=int)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def bench_gen(name, size, seed, out_dir):
    """Write a deterministic benchmark bundle."""
    try:
        system = benchmod.generate(name, size, seed)
        path = save_system(system, out_dir)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    except _NUMERICAL_ERRORS as exc:
        _fail(exc)
    click.echo(f"wrote {path}")


@main.group()
def rom():
    """Reduced-order model construction."""


@rom.command("build")
@click.argument("system_dir", type=click.Path(exists=True))
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
@click.option("--order", default=None, type=int,
              help="Explicit reduced order (default: rank estimate).")
@click.option("--tol", default=1e-10, type=float, show_default=True,
              help="Relative rank tolerance for the order estimate.")
@click.option("--galerkin", is_flag=True, help="Force one-sided projection.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--plot/--no-plot", default=True, show_default=True)
def rom_build(system_dir, plan_path, order, tol, galerkin, out_dir, plot):
    """Run the dominant-subspace reduction for a plan."""
    try:
        system = _load_full(system_dir)
        plan = load_plan(plan_path, m=system.m, p_out=system.p_out)
        if galerkin and not plan.galerkin:
            plan = dataclasses.replace(plan, galerkin=True)
        reduced, report = build_rom(system, plan, order=order, tol=tol)
        out = Path(out_dir)
        save_system(reduced, out)
        reports.write_singular_values(report, out / "singular_values.csv")
        (out / "provenance.json").write_text(
            json.dumps(reduced.provenance, indent=2)
        )
        if plot:
            from . import plots
            plots.singular_value_figure(report, out / "singular_values.png")
    except _NUMERICAL_ERRORS as exc:
        _fail(exc)
    click.echo(f"reduced order {reduced.order} bundle in {out_dir}")


@main.group()
def tf():
    """Transfer function evaluation."""


@tf.command("eval")
@click.argument("bundle", type=click.Path(exists=True))
@click.option("--family", default="L", show_default=True,
              help="Kernel family label: L, N<eta>, or H<xi>.")
@click.option("--s", "s_args", multiple=True,
              help="Frequency argument (repeat for higher kernels).")
@click.option("--grid", "grid_spec", default=None,
              help="log:A:B:N sweep on the imaginary axis (all arguments equal).")
@click.option("--p", "p_text", default="", help="Comma-separated parameters.")
@click.option("--compare", "rom_dir", default=None, type=click.Path(exists=True),
              help="Reduced bundle evaluated alongside.")
@click.option("--out", "out_path", default="tf.csv", show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def tf_eval(bundle, family, s_args, grid_spec, p_text, rom_dir, out_path, plot):
    """Evaluate a kernel at points or over a frequency sweep."""
    try:
        kind, order = parse_family(family)
    except ModelError as exc:
        raise click.UsageError(str(exc))
    arity = family_arity(kind, order)
    p = _parse_params(p_text)
    try:
        system = _load_full(bundle)
        rom_sys = _load_full(rom_dir) if rom_dir else None
        if grid_spec:
            head, *rest = grid_spec.split(":")
            if head != "log" or len(rest) != 3:
                raise click.UsageError(f"bad grid spec {grid_spec!r}")
            freqs = np.logspace(
                np.log10(float(rest[0])), np.log10(float(rest[1])), int(rest[2])
            )
            points = [[1j * w] * arity for w in freqs]
        else:
            if len(s_args) != arity:
                raise click.UsageError(
                    f"family {family} needs {arity} --s arguments"
                )
            points = [[_parse_complex(s) for s in s_args]]
            freqs = None
        header = None
        rows = []
        fom_vals, rom_vals = [], []
        for s_list in points:
            try:
                value = tf_family(system, family, s_list, p)
                rom_value = (
                    tf_family(rom_sys, family, s_list, p)
                    if rom_sys is not None else None
                )
            except SolveError as exc:
                click.echo(f"skipping point {s_list}: {exc}", err=True)
                continue
            if header is None:
                header = reports.tf_header(
                    family, arity, len(p), np.atleast_2d(value).shape,
                    compare=rom_sys is not None,
                )
            rows.append(reports.tf_row(family, s_list, p, value, rom_value))
            fom_vals.append(value)
            rom_vals.append(rom_value)
        if not rows:
            _fail("no evaluable points")
        reports.write_tf_rows(header, rows, out_path)
        if plot and freqs is not None and len(rows) > 1:
            from . import plots
            series = {"full": fom_vals}
            if rom_sys is not None:
                series["reduced"] = rom_vals
            plots.tf_sweep_figure(
                freqs[: len(fom_vals)], series, Path(out_path).with_suffix(".png")
            )
    except _NUMERICAL_ERRORS as exc:
        _fail(exc)
    click.echo(f"wrote {out_path}")


def _grid_from_options(t0, t_end, dt):
    try:
        return TimeGrid(t0=t0, t_end=t_end, dt=dt)
    except SimulationError as exc:
        raise click.UsageError(str(exc))


@main.command("sim")
@click.argument("bundle", type=click.Path(exists=True))
@click.option("--input", "input_spec", required=True,
              help="Per-channel signal expressions, ';'-separated.")
@click.option("--t0", default=0.0, type=float, show_default=True)
@click.option("--t-end", required=True, type=float)
@click.option("--dt", required=True, type=float)
@click.option("--p", "p_text", default="", help="Comma-separated parameters.")
@click.option("--out", "out_path", default="trajectory.csv", show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def sim(bundle, input_spec, t0, t_end, dt, p_text, out_path, plot):
    """Integrate a bundle with explicit Euler and write the output samples."""
    grid = _grid_from_options(t0, t_end, dt)
    p = _parse_params(p_text)
    try:
        system = load_system(bundle)
        u = Signal(input_spec)
        traj = simulate(system, p, u, grid)
        reports.write_trajectory(traj, out_path)
        if plot:
            from . import plots
            plots.trajectory_figure(traj, Path(out_path).with_suffix(".png"))
    except SignalError as exc:
        raise click.UsageError(str(exc))
    except _NUMERICAL_ERRORS as exc:
        _fail(exc)
    click.echo(f"wrote {out_path}")


@main.command("compare")
@click.argument("fom_dir", type=click.Path(exists=True))
@click.argument("rom_dir", type=click.Path(exists=True))
@click.option("--input", "input_spec", required=True)
@click.option("--t0", default=0.0, type=float, show_default=True)
@click.option("--t-end", required=True, type=float)
@click.option("--dt", required=True, type=float)
@click.option("--p", "p_texts", multiple=True,
              help="Parameter vector (repeat for a sweep).")
@click.option("--out", "out_dir", default="compare_out", show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def compare(fom_dir, rom_dir, input_spec, t0, t_end, dt, p_texts, out_dir, plot):
    """Simulate full and reduced bundles and write error tables."""
    grid = _grid_from_options(t0, t_end, dt)
    params = [_parse_params(t) for t in (p_texts or ("",))]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        fom = load_system(fom_dir)
        reduced = load_system(rom_dir)
        u = Signal(input_spec)
        metrics = {}
        if len(params) == 1:
            a = simulate(fom, params[0], u, grid)
            b = simulate(reduced, params[0], u, grid)
            m = error_metrics(a, b)
            metrics.update({"l2": m["l2"], "linf": m["linf"]})
            if plot:
                from . import plots
                plots.compare_figure(a.t, a.y, b.y, out / "compare.png")
        else:
            sweep = sweep_error(fom, reduced, params, u, grid)
            reports.write_sweep(sweep, out / "sweep.csv")
            metrics["e_max"] = sweep.e_max
            for pv, msg in sweep.failures:
                click.echo(f"failed at p={pv}: {msg}", err=True)
            if plot:
                from . import plots
                plots.sweep_figure(sweep, out / "sweep.png")
        reports.write_metrics(metrics, out / "metrics.csv")
    except SignalError as exc:
        raise click.UsageError(str(exc))
    except _NUMERICAL_ERRORS as exc:
        _fail(exc)
    click.echo(f"wrote {out / 'metrics.csv'}")


if __name__ == "__main__":
    main()
