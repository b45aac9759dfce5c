"""Pipeline state utilities."""

from state.pipeline import ARTIFACTS, CORE_ARTIFACTS, PipelineState

__all__ = ["ARTIFACTS", "CORE_ARTIFACTS", "PipelineState"]
