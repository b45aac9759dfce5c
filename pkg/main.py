"""Entry point for riskbench.

Usage:
    riskbench run --config config/demo_run.yaml
    riskbench tune --config run.yaml --paper-grid gbt --plan-only
    riskbench explain --output-dir out/ --max-rows 200

Exit codes: 0 on success, 1 on a validation or usage error, 2 on any other failure.
"""

import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from cli.commands import StageContext, run_command
from cli.parser import parse_args
from utils.config import (
    RunConfig,
    config_hash,
    get_env,
    load_config,
    load_run_config,
    resolve_threads,
    validate_run_config,
)
from utils.errors import ConfigError, ValidationError
from utils.logger import RiskLogger

PATH_FIELDS = ("feature_spec", "generator", "grace_table", "long_format")


def resolve_config(args) -> RunConfig:
    """Run config from --config (or RISKBENCH_CONFIG) with command-line overrides applied."""
    config_path = args.config or get_env("RISKBENCH_CONFIG")
    if config_path:
        config = load_run_config(Path(config_path))
    elif args.output_dir:
        config = RunConfig(output_dir=args.output_dir)
    else:
        raise ConfigError("Pass --config or --output-dir", field="config")

    if args.output_dir:
        config.output_dir = str(Path(args.output_dir).resolve())
    if args.seed is not None:
        for seed_field in fields(config.seeds):
            setattr(config.seeds, seed_field.name, args.seed)
    if args.strict:
        config.strict_preprocessing = True
    require = tuple(name for name in PATH_FIELDS if getattr(config, name))
    return validate_run_config(config, require=require)


def _options(args) -> dict:
    return {
        name: getattr(args, name, None)
        for name in ("paper_grid", "grid", "clinical_sets", "plan_only", "n_boot", "max_rows")
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run the command and map failures to exit codes."""
    load_config()
    try:
        args = parse_args(argv)
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    except ValidationError as e:
        RiskLogger.log_operation("cli", "error", {"stage": "parse"}, error=e)
        return 1

    RiskLogger.configure(json_mode=args.json)
    command = args.command
    try:
        config = resolve_config(args)
        RiskLogger.configure(json_mode=args.json, log_dir=config.output_path / "logs")
        threads = resolve_threads(args.threads, config.threads)
        ctx = StageContext.create(config, config_hash(config), threads=threads, **_options(args))
        run_command(command, ctx)
    except ValidationError as e:
        RiskLogger.log_operation(command, "error", {"kind": type(e).__name__}, error=e)
        return 1
    except Exception as e:
        RiskLogger.log_operation(command, "error", {"kind": type(e).__name__}, error=e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
