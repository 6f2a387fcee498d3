"""Cluster households by how regular their evening electricity use is.

Pipeline: raw readings -> 5-minute grid -> working-day 16:00-20:00 window
features -> restarted k-means -> labelled clusters.
"""

from .errors import ConfigError, ContractError, DataError, InvariantError

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "DataError", "InvariantError", "__version__"]
