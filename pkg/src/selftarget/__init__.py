"""Networks that train on targets they define themselves: the k most active
output units, steered by homeostatic thresholds, become the teaching signal.
Supports plain backpropagation and two-phase equilibrium relaxation."""

__version__ = "0.1.0"

from .backend import active_backend, backend_name
from .config import (ConfigError, RunConfig, load_config, load_preset,
                     preset_names, validate_config)
from .data import LabeledDataset, load_container, load_idx, save_container
from .network import Network, init_network, load_checkpoint, save_checkpoint
from .run import (DivergenceError, RunArtifacts, run_config,
                  run_semisupervised, run_unsupervised)
from .target import Homeostasis, kwta, kwta_target, smooth_target

__all__ = [
    "__version__", "active_backend", "backend_name",
    "ConfigError", "RunConfig", "load_config", "load_preset", "preset_names",
    "validate_config",
    "LabeledDataset", "load_container", "load_idx", "save_container",
    "Network", "init_network", "load_checkpoint", "save_checkpoint",
    "DivergenceError", "RunArtifacts", "run_config", "run_semisupervised",
    "run_unsupervised",
    "Homeostasis", "kwta", "kwta_target", "smooth_target",
]
