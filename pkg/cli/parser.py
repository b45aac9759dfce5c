"""Command-line surface of riskbench."""

import argparse
import sys

from utils.artifacts import TOOL_NAME, TOOL_VERSION
from utils.errors import ValidationError

COMMANDS = ("synth", "train", "tune", "evaluate", "explain", "compare", "run")


class UsageError(ValidationError):
    """Unknown flag, missing argument or bad value on the command line."""
    pass


class RiskbenchArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None, help="Run config (JSON or YAML)")
    parser.add_argument("--output-dir", type=str, default=None, help="Override the config's output_dir")
    parser.add_argument("--seed", type=int, default=None, help="Use this seed for every random sub-stream")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: RISKBENCH_THREADS or 1)")
    parser.add_argument("--json", action="store_true", help="Log bare JSON lines (for CI)")
    parser.add_argument(
        "--strict",
        action="store_true",
        help="Fit imputation and standardization on training episodes only",
    )


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per pipeline stage plus ``run``."""
    parser = RiskbenchArgumentParser(
        prog=TOOL_NAME,
        description="Interpretable clinical risk modeling: train, tune, evaluate, explain, compare",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=RiskbenchArgumentParser)
    sub.required = True

    synth = sub.add_parser("synth", help="Generate a synthetic cohort and its ground-truth sidecar")
    _add_common(synth)

    train = sub.add_parser("train", help="Fit the configured model on the training split")
    _add_common(train)
    train.add_argument(
        "--paper-grid",
        action="store_true",
        help="Reject model settings outside the study's grid (n_trees=250 allowed as an override)",
    )

    tune = sub.add_parser("tune", help="Cross-validated grid search (ranked report)")
    _add_common(tune)
    tune.add_argument(
        "--paper-grid",
        type=str.lower,
        choices=["lr", "svm", "rf", "gbt"],
        default=None,
        help="Use the study's grid for this learner instead of the config's grid",
    )
    tune.add_argument("--grid", type=str, default=None, help="Grid file (JSON or YAML)")
    tune.add_argument(
        "--clinical-set",
        action="append",
        dest="clinical_sets",
        default=None,
        help="Restrict features to a clinical set (repeatable; default: combined)",
    )
    tune.add_argument(
        "--plan-only",
        action="store_true",
        help="Write the enumerated configurations without fitting",
    )

    evaluate = sub.add_parser("evaluate", help="ROC, AUC with CI, paired tests against GRACE")
    _add_common(evaluate)
    evaluate.add_argument("--n-boot", type=int, default=None, help="Bootstrap resamples (default from config)")

    explain = sub.add_parser("explain", help="Shapley attributions and explanation artifacts")
    _add_common(explain)
    explain.add_argument("--max-rows", type=int, default=None, help="Explain at most this many test rows")

    compare = sub.add_parser("compare", help="SHAP importance against Cox significance per subgroup")
    _add_common(compare)

    run = sub.add_parser("run", help="Every enabled stage in order")
    _add_common(run)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
