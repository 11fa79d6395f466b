"""
Application Entrypoint.

    atoms gen-data --config configs/gen_fourier_low.cfg --out runs/data
    atoms run --config configs/pretrain_signal.cfg --out runs/pretrain --seed 1
    atoms analyze cost --out runs/cost

Exit codes: 0 success, 2 config error, 3 runtime or numeric error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path

import structlog
from pydantic import ValidationError

from adapters.reports import write_manifest
from app.core.config_file import resolve_config
from app.core.logging import configure_logging
from app.core.settings import settings
from app.dependencies import get_command_registry
from atoms.errors import AtomsError, ConfigError
from commands.base import CommandContext, CommandRegistry

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

ANALYZE_PREFIX = "analyze."


def build_parser(registry: CommandRegistry) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="KEY=value config file")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    parser = argparse.ArgumentParser(
        prog="atoms", description="Sparse dictionary fine-tuning experiments."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    analyze = None
    for definition in registry.definitions():
        if definition.name.startswith(ANALYZE_PREFIX):
            if analyze is None:
                group = commands.add_parser("analyze", help="post-hoc analyses")
                analyze = group.add_subparsers(dest="analysis", required=True)
            analyze.add_parser(
                definition.name[len(ANALYZE_PREFIX):],
                parents=[common],
                help=definition.description,
            )
        else:
            commands.add_parser(definition.name, parents=[common], help=definition.description)
    return parser


def _command_name(args: argparse.Namespace) -> str:
    if args.command == "analyze":
        return f"{ANALYZE_PREFIX}{args.analysis}"
    return str(args.command)


def run_command(
    registry: CommandRegistry,
    name: str,
    config_path: Path | None,
    out_dir: Path | None,
    seed: int | None,
) -> int:
    try:
        definition, handler = registry.get(name)
        values = resolve_config(config_path, seed, settings.DEFAULT_SEED)
        config = definition.config_model.model_validate(values)
        handler.check_paths(config)
    except (ValidationError, ConfigError) as exc:
        logger.error("config_invalid", command=name, error=str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("input_unavailable", command=name, error=str(exc))
        return EXIT_IO

    seed_value = int(getattr(config, "seed"))
    target = out_dir or settings.OUTPUT_DIR.joinpath(*name.split("."))
    with structlog.contextvars.bound_contextvars(
        command=name,
        seed=seed_value,
        out_dir=str(target),
        environment=settings.ENVIRONMENT,
    ):
        try:
            target.mkdir(parents=True, exist_ok=True)
            result = handler.execute(config, CommandContext(name, target, seed_value))
            write_manifest(
                target,
                name,
                seed_value,
                result.config or config.model_dump(mode="json"),
                result.outputs,
            )
        except (ValidationError, ConfigError) as exc:
            logger.error("config_invalid", error=str(exc))
            return EXIT_CONFIG
        except AtomsError as exc:
            logger.error("command_failed", error=str(exc), error_type=type(exc).__name__)
            return EXIT_RUNTIME
        except OSError as exc:
            logger.error("io_failed", error=str(exc))
            return EXIT_IO

        print(json.dumps({"command": name, "out_dir": str(target), **result.summary},
                         sort_keys=True, default=str))
        if result.failed:
            logger.error("command_incomplete", summary=dict(result.summary))
            return EXIT_RUNTIME
        logger.info("command_completed", outputs=len(result.outputs))
        return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    registry = get_command_registry()
    args = build_parser(registry).parse_args(argv)
    return run_command(registry, _command_name(args), args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
