"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 missing dependency
artifact, 4 provider/network failure.
"""

from __future__ import annotations

import sys

import click

from erd.config import ConfigError, load_config
from erd.pipeline import STAGES, MissingArtifact, ProviderFailure, run_stage

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_PROVIDER = 4


@click.group()
@click.version_option(package_name="erd")
def main():
    """Educational-resource discovery pipeline."""


def _run(stage, config, domain, groups, force, seed):
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    try:
        cfg = load_config(config, overrides)
        parsed_groups = tuple(groups.split(",")) if groups else None
        result = run_stage(
            stage, cfg, domain=domain, groups=parsed_groups, force=force
        )
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except MissingArtifact as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_MISSING)
    except ProviderFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PROVIDER)
    state = "done" if result.ran else "up to date"
    click.echo(f"{stage}: {state} ({len(result.outputs)} artifacts)")


def _make_command(stage: str):
    @click.command(name=stage, help=f"Run the {stage} stage.")
    @click.option(
        "--config", "-c", required=True, type=click.Path(), help="Workspace config."
    )
    @click.option("--domain", default=None, help="Restrict to one domain.")
    @click.option(
        "--groups",
        default=None,
        help="Comma-separated feature groups (g1,g2,g3).",
    )
    @click.option("--force", is_flag=True, help="Overwrite despite config change.")
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    def command(config, domain, groups, force, seed):
        _run(stage, config, domain, groups, force, seed)

    return command


for _stage in STAGES:
    main.add_command(_make_command(_stage))


if __name__ == "__main__":
    main()
