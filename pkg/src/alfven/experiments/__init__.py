"""Config-driven experiment drivers and the verification suite."""
from .config import ConfigError, ContractError, RunConfig, load_config, parse_config
from .runner import RunResult, simulate
from .studies import StudyReport, decay_study, dispersion_study, scatter_study, viscous_compare
from .verify import verify

__all__ = ["ConfigError", "ContractError", "RunConfig", "load_config", "parse_config", "RunResult", "simulate",
           "StudyReport", "decay_study", "dispersion_study", "scatter_study", "viscous_compare", "verify"]
