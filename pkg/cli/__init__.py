"""Command-line interface: argument parsing and the pipeline stages."""

from cli.commands import STAGE_COMMANDS, StageContext, feature_spec_for, run_command, run_stage
from cli.parser import COMMANDS, UsageError, build_parser, parse_args

__all__ = [
    "COMMANDS",
    "STAGE_COMMANDS",
    "StageContext",
    "UsageError",
    "build_parser",
    "feature_spec_for",
    "parse_args",
    "run_command",
    "run_stage",
]
