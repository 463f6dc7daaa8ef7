from .config import ExperimentConfig, load_config
from .presets import PRESETS, get_preset
from .report import CSV_HEADER, MetricsWriter, emit_reports, read_metrics, render_svg
from .runner import RunResult, load_run, run_cfg_sweep, run_experiment

__all__ = [
    "CSV_HEADER", "ExperimentConfig", "MetricsWriter", "PRESETS", "RunResult", "emit_reports",
    "get_preset", "load_config", "load_run", "read_metrics", "render_svg", "run_cfg_sweep",
    "run_experiment",
]
