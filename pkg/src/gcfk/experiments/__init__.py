"""Config-driven experiment runs with deterministic CSV output."""
from .config import DEFAULTS, ExperimentConfig, default_config, validate_config
from .io import RunManifest, Table, emit_csv, verify_manifest

__all__ = [
    "DEFAULTS",
    "ExperimentConfig",
    "RunManifest",
    "Table",
    "default_config",
    "emit_csv",
    "run_experiment",
    "validate_config",
    "verify_manifest",
]


def __getattr__(name):
    # cli imports the package version, so it is loaded on first use
    if name == "run_experiment":
        from .cli import run_experiment

        return run_experiment
    raise AttributeError(name)
