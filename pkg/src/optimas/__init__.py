"""Profile-guided LLM code optimization with evidence-aligned scoring."""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config
from .errors import OptimasError
from .pipeline import reprofile_run, run_pipeline

__all__ = [
    "OptimasError",
    "PipelineConfig",
    "__version__",
    "load_config",
    "reprofile_run",
    "run_pipeline",
]
