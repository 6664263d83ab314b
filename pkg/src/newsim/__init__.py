"""newsim: a deterministic multi-agent simulator of a news recommendation
ecosystem, with synthetic population generation, pluggable recommendation
strategies, and a per-round lifecycle metrics battery."""

from .core import RngStream, cosine, pca_project, softmax
from .engine import SimConfig, SimState, load_config, restore, run_round, run_simulation, snapshot

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "SimConfig",
    "SimState",
    "cosine",
    "load_config",
    "pca_project",
    "restore",
    "run_round",
    "run_simulation",
    "snapshot",
    "softmax",
    "__version__",
]
