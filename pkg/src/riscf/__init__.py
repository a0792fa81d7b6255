"""riscf: desk-scale simulator and optimizer for RIS-assisted uplink
user-centric cell-free networks, trained against a digital-twin replay of
stored channel estimates."""

from .config import SystemConfig, desk_config, paper_config
from .orchestrator import METHODS, RunResult, run_experiment, run_sweep

__version__ = "0.1.0"

__all__ = ["SystemConfig", "desk_config", "paper_config", "METHODS",
           "RunResult", "run_experiment", "run_sweep", "__version__"]
