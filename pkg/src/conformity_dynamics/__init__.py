"""Biased logit population dynamics, inducement mechanisms and passivity certificates."""

from .bias import *  # noqa: F401,F403
from .conjugate import *  # noqa: F401,F403
from .dynamics import *  # noqa: F401,F403
from .mechanisms import *  # noqa: F401,F403
from .monitor import *  # noqa: F401,F403
from .sim import *  # noqa: F401,F403
from .config import ConfigError, ExperimentConfig, load_config, parse_config

__version__ = "0.1.0"
