"""Command-line entry point for batch figure rendering.

`render` draws one figure from a JSON spec file; `render-all` draws the
full set from a standard analysis directory. Usage and validation errors
exit with code 2, unexpected faults with 1.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .csvio import CSVContractError
from .render import KINDS, FigureSpec, render, render_all


def _spec_from_json(path) -> FigureSpec:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise click.UsageError(f"cannot read spec {path}: {e}")
    if not isinstance(payload, dict):
        raise click.UsageError(f"spec {path} must hold a JSON object")
    csvs = payload.pop("csvs", None)
    if csvs is None and "csv" in payload:
        csvs = [payload.pop("csv")]
    known = {"kind", "output", "title", "bins", "dpi", "formats"}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise click.UsageError(f"unknown spec keys: {', '.join(unknown)}")
    try:
        return FigureSpec(csvs=tuple(csvs or ()),
                          **{k: tuple(v) if k == "formats" else v
                             for k, v in payload.items()})
    except (TypeError, ValueError) as e:
        raise click.UsageError(f"invalid spec {path}: {e}")


@click.group()
def cli():
    """Render analysis CSV exports as publication-style figures."""


@cli.command("render")
@click.option("--spec", "spec_path", required=True,
              type=click.Path(exists=True),
              help=f"JSON spec: kind (one of {', '.join(KINDS)}), "
                   "csv, output, and optional title/bins/dpi/formats.")
def render_cmd(spec_path):
    """Render a single figure from a spec file."""
    spec = _spec_from_json(spec_path)
    try:
        for path in render(spec):
            click.echo(f"wrote {path}")
    except CSVContractError as e:
        raise click.UsageError(str(e))


@cli.command("render-all")
@click.option("--analysis-dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory holding the standard analysis CSV exports.")
@click.option("--out", "out_dir", default=None,
              type=click.Path(file_okay=False),
              help="Figure directory (default: <analysis-dir>/../figures).")
def render_all_cmd(analysis_dir, out_dir):
    """Render the full figure set from an analysis directory."""
    try:
        for path in render_all(analysis_dir, out_dir):
            click.echo(f"wrote {path}")
    except CSVContractError as e:
        raise click.UsageError(str(e))


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 130
    except Exception as e:
        click.echo(f"error: {e}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
