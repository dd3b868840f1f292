"""Command line entry point: ``riccilab <subcommand> --config <path>``."""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .config import load_config
from .errors import ConfigError, DomainError, HorizonError, NumericalError, ParameterError
from .plotting import PlotInputError, emit_plots
from .report import write_json

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("riccilab")


def _parse_stages(_ctx, _param, value):
    if value is None:
        return None
    try:
        stages = [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter("expected a comma separated list of integers") from None
    if not stages or min(stages) < 0:
        raise click.BadParameter("stage indices must be non-negative")
    return stages


def _guarded(fn):
    """Map library errors to exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except (ConfigError, HorizonError, ParameterError, DomainError) as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except PlotInputError as exc:
            click.echo(f"missing input: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericalError as exc:
            click.echo(f"numerical failure ({type(exc).__name__}): {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        sys.exit(code or EXIT_OK)

    return wrapper


def _common(fn):
    fn = click.option("--no-plots", is_flag=True, help="Skip figure output.")(fn)
    fn = click.option("--stages", callback=_parse_stages, default=None,
                      help="Blow-down stages, e.g. 5,10,20 (overrides the config).")(fn)
    fn = click.option("--out", type=click.Path(path_type=Path), default=None,
                      help="Output directory (default: output.dir of the config).")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(path_type=Path), help="Scenario YAML file.")(fn)
    return fn


def _setup(config_path, out, stages):
    from .scenario import Scenario

    cfg = load_config(config_path)
    out = Path(out) if out is not None else cfg.output.dir
    out.mkdir(parents=True, exist_ok=True)
    scen = Scenario(cfg, stages)
    resolved = cfg.resolved()
    if stages:
        resolved["blowdown"]["stages"] = list(scen.stages)
    write_json(out / "config.json", resolved)
    return scen, out


def _plots(scen, out, no_plots, which):
    if no_plots or not scen.cfg.output.plots:
        return
    for path in emit_plots(out, which):
        log.info("wrote %s", path)


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
@click.version_option(version=__version__, prog_name="riccilab")
def main(verbose):
    """Reduced geometry laboratory for symmetric backward Ricci flows."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
@_guarded
def model(config_path, out, stages, no_plots):
    """Write the initial metric and its curvature (curvature.csv)."""
    scen, out = _setup(config_path, out, stages)
    scen.write_model(out)
    click.echo(f"wrote {out / 'curvature.csv'}")


@main.command()
@_common
@_guarded
def evolve(config_path, out, stages, no_plots):
    """Evolve the model backward to model.horizon (history.csv, flowres.csv)."""
    scen, out = _setup(config_path, out, stages)
    scen.write_evolve(out)
    click.echo(f"wrote {out / 'history.csv'}")


@main.command("splice")
@_common
@_guarded
def splice_cmd(config_path, out, stages, no_plots):
    """Splice the breather (junctions.csv, lbound.csv)."""
    scen, out = _setup(config_path, out, stages)
    scen.write_splice(out)
    b = scen.breather
    rep = scen.junction_report
    click.echo(f"breather residual {b.residual:.3e} (tol {b.tolerance:.1e}); "
               f"max junction gap {rep.max_gap:.3e} (tol {rep.tol:.1e})")
    return EXIT_OK if (b.certified and rep.passed) else EXIT_FAIL


@main.command()
@_common
@_guarded
def lgeo(config_path, out, stages, no_plots):
    """Reduced distance on the lattice (lfield.csv, residuals.csv)."""
    scen, out = _setup(config_path, out, stages)
    scen.write_lgeo(out)
    _plots(scen, out, no_plots, ["lfield.png"])
    click.echo(f"wrote {out / 'lfield.csv'}")


@main.command()
@_common
@_guarded
def rvol(config_path, out, stages, no_plots):
    """Reduced volume series of the spliced flow (rvol.csv)."""
    from .monitor import monotonicity_certificate

    scen, out = _setup(config_path, out, stages)
    scen.write_rvol(out, stages=False)
    t = scen.cfg.tolerances
    rep = monotonicity_certificate(scen.base_series, t.monotone, t.rvol_bound)
    _plots(scen, out, no_plots, ["rvol.png"])
    click.echo(f"max V {rep.max_V:.10f}; max uphill step {rep.max_uphill:.3e}")
    return EXIT_OK if (rep.passed and rep.le_one) else EXIT_FAIL


@main.command("blowdown")
@_common
@_guarded
def blowdown_cmd(config_path, out, stages, no_plots):
    """Blow-down stages and their residual fields (stages.csv, residuals_i.csv, rvol.csv)."""
    scen, out = _setup(config_path, out, stages)
    scen.write_blowdown(out)
    scen.write_rvol(out, stages=True)
    _plots(scen, out, no_plots, ["rvol.png", "residual_trend.png"])
    click.echo(f"wrote {len(scen.stage_list)} stages to {out}")


@main.command()
@_common
@_guarded
def verify(config_path, out, stages, no_plots):
    """Run every certificate and write verdict.json."""
    scen, out = _setup(config_path, out, stages)
    certs = scen.certificates()
    scen.write_verdict(out, certs)
    for writer in (scen.write_splice, scen.write_lgeo, scen.write_blowdown):
        try:
            writer(out)
        except (NumericalError, ParameterError, DomainError) as exc:
            log.warning("%s skipped: %s", writer.__name__, exc)
    try:
        scen.write_rvol(out, stages=True)
        _plots(scen, out, no_plots, None)
    except (NumericalError, ParameterError, DomainError, PlotInputError) as exc:
        log.warning("artifacts incomplete: %s", exc)
    failed = numerical = 0
    for key, c in certs.items():
        status = "PASS" if c.passed else ("ERROR" if c.error else "FAIL")
        extra = f" ({c.error})" if c.error else f" value={c.value:.6g} tol={c.tol:.3g}"
        click.echo(f"{status:5s} {key}{extra}")
        if not c.passed:
            if c.numerical:
                numerical += 1
            else:
                failed += 1
    click.echo(f"verdict written to {out / 'verdict.json'}")
    if failed:
        return EXIT_FAIL
    return EXIT_NUMERICAL if numerical else EXIT_OK


@main.command()
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Run directory holding the CSV artifacts.")
@_guarded
def plot(out):
    """Redraw every figure from the CSVs in a run directory."""
    for path in emit_plots(out):
        click.echo(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    main()
