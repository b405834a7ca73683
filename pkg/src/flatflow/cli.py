"""Command line front end: ``flatflow run | verify | diagnose``.

Exit codes: 0 finished, 2 singular early stop, 1 solver error or failed
verification, 64 bad config / unknown suite / malformed input, 74 I/O error.
"""
from __future__ import annotations

import json
import logging
import os
import sys

import click

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_SINGULAR = 2
EXIT_CONFIG = 64
EXIT_IO = 74

log = logging.getLogger("flatflow")


def apply_thread_cap(env=None) -> int | None:
    """Honor ``FLATFLOW_THREADS`` for numba's parallel layer; returns the cap."""
    env = os.environ if env is None else env
    raw = env.get("FLATFLOW_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise click.UsageError(f"FLATFLOW_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise click.UsageError(f"FLATFLOW_THREADS must be a positive integer, got {raw!r}")
    import numba
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Minimizing-movements simulator for volume-preserving curvature flow."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        apply_thread_cap()
    except click.UsageError as exc:
        _fail(EXIT_CONFIG, exc.message)


@cli.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
def run(config, out_dir):
    """Run the scheme from CONFIG and write trace, series and frames."""
    from .exceptions import ConfigError, FlatFlowError, NonConvergenceError
    from .flow import run_checks, run_flow
    from .io import ensure_writable, load_config, write_outputs

    try:
        cfg = load_config(config)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"config key {exc.key!r}: {exc}")
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read config: {exc}")
    try:
        ensure_writable(out_dir)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write to {out_dir}: {exc}")
    try:
        trace = run_flow(cfg.flow)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"config key {exc.key!r}: {exc}")
    except NonConvergenceError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            try:
                write_outputs(trace, out_dir, cfg.export)
            except OSError:
                pass
        _fail(EXIT_SOLVER, f"solver failed: {exc}")
    except FlatFlowError as exc:
        _fail(EXIT_SOLVER, f"{type(exc).__name__}: {exc}")
    verdicts = run_checks(trace)
    try:
        paths = write_outputs(trace, out_dir, cfg.export)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write outputs: {exc}")
    n_pass = sum(bool(v.get("pass")) for v in verdicts.values())
    t_final = trace.states[-1].t
    line = (f"{cfg.flow.name}: t_final={t_final:.6g} steps={len(trace.states) - 1} "
            f"frames={paths['frames']} verdicts={n_pass}/{len(verdicts)} passed")
    if trace.singular_flag:
        click.echo(f"{line} singular_time={trace.singular_time:.6g} ({trace.singular_reason})")
        sys.exit(EXIT_SINGULAR)
    click.echo(line)
    sys.exit(EXIT_OK)


@cli.command()
@click.argument("suite")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
def verify(suite, out_dir):
    """Run verification SUITE and write verdicts.json (exit 0 iff it passes)."""
    from .exceptions import FlatFlowError
    from .io import ensure_writable, write_json
    from .suites import SUITES, run_suite

    if suite not in SUITES:
        _fail(EXIT_CONFIG, f"unknown suite {suite!r}; expected one of {', '.join(sorted(SUITES))}")
    try:
        out = ensure_writable(out_dir)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write to {out_dir}: {exc}")
    try:
        verdict = run_suite(suite)
    except FlatFlowError as exc:
        verdict = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
    try:
        write_json({"suite": suite, **verdict}, out / "verdicts.json")
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write verdicts: {exc}")
    status = "PASS" if verdict["pass"] else "FAIL"
    click.echo(f"{suite}: {status}")
    sys.exit(EXIT_OK if verdict["pass"] else EXIT_SOLVER)


def diagnose_points(pts) -> dict:
    """Two-point report, rolling ball and critical-pair residuals of one loop."""
    from .contour import _check_simple, contour_from_points
    from .oracles import rolling_ball
    from .two_point import critical_pair_check, two_point_report

    _check_simple([pts])
    c = contour_from_points(pts)
    tp = two_point_report([c])
    crit = critical_pair_check([c], tp)
    return {"n_vertices": len(c), "perimeter": c.length, "area": abs(c.area),
            "s_norm": tp.s_norm, "ubc_radius": tp.ubc_radius, "rolling_ball": rolling_ball([c]),
            "normal_lip": tp.normal_lip, "argmax_pair": list(tp.argmax_pair),
            "critical_pair": crit.to_dict()}


@cli.command()
@click.argument("contour_csv", type=click.Path(dir_okay=False))
def diagnose(contour_csv):
    """Print a JSON geometry report for a closed polyline in CONTOUR_CSV (x,y)."""
    from .exceptions import FlatFlowError
    from .io import _clean, read_contour_csv

    try:
        pts = read_contour_csv(contour_csv)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read {contour_csv}: {exc}")
    except ValueError as exc:
        _fail(EXIT_CONFIG, f"malformed contour CSV: {exc}")
    try:
        report = diagnose_points(pts)
    except (FlatFlowError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"{type(exc).__name__}: {exc}")
    click.echo(json.dumps(_clean(report), indent=1, sort_keys=True))
    sys.exit(EXIT_OK)


def main(argv=None):
    """Console entry point. Usage errors exit 64 so that 2 always means singular."""
    try:
        cli.main(args=argv, prog_name="flatflow", standalone_mode=False)
    except click.UsageError as exc:
        if type(exc).__name__ == "NoArgsIsHelpError":
            click.echo(exc.ctx.get_help() if exc.ctx else "")
            sys.exit(EXIT_OK)
        exc.show()
        sys.exit(EXIT_CONFIG)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_CONFIG)
    except click.exceptions.Abort:
        sys.exit(EXIT_SOLVER)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
