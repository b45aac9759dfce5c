#!/usr/bin/env python3
"""Run the full pipeline on the demo synthetic cohort and print what it produced."""

import sys
from pathlib import Path

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from cli.parser import parse_args  # noqa: E402
from main import main as riskbench_main, resolve_config  # noqa: E402
from state.pipeline import PipelineState  # noqa: E402
from utils.artifacts import read_json  # noqa: E402

load_dotenv()

DEMO_CONFIG = PROJECT_ROOT / "config" / "demo_run.yaml"


def main():
    """Run the demo and report the headline numbers."""
    argv = ["run", "--config", str(DEMO_CONFIG), *sys.argv[1:]]

    print("=" * 60)
    print("riskbench demo")
    print("=" * 60)
    print()

    code = riskbench_main(argv)
    if code != 0:
        print(f"❌ run failed with exit code {code}; see the log under the output directory")
        sys.exit(code)

    config = resolve_config(parse_args(argv))
    state = PipelineState.from_config(config)
    for artifact, status in state.status().items():
        icon = "✅" if status["present"] else "·"
        print(f"{icon} {artifact}: {status['path']}")
    print()

    report = read_json(state.path("eval_report"))
    model = report["model"]
    print(f"Model ({report.get('model_source', 'model')}): AUC={model['auc']:.2f} "
          f"(95% CI:{model['ci']['lower']:.2f}-{model['ci']['upper']:.2f})")
    if report.get("grace"):
        print(f"GRACE: AUC={report['grace']['auc']:.2f} on {report.get('grace_rows')} episodes")
    for comparison in model["comparisons"]:
        delong = comparison["delong"]
        delong_text = f"{delong['p_value']:.3g}" if delong else comparison["delong_error"]
        print(f"  vs {comparison['name']}: DeLong p={delong_text}, "
              f"McNemar p={comparison['mcnemar']['p_value']:.3g}")

    if state.exists("markers_markdown"):
        print()
        print(state.path("markers_markdown").read_text())


if __name__ == "__main__":
    main()
