"""Proximal learning of individualized treatment regimes with a covariate-indexed switch
between treatment-proxy and outcome-proxy based rules."""
from __future__ import annotations

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

from .config import ScenarioConfig, load_scenario  # noqa: E402
from .data import Dataset, TestSet, read_dataset, write_dataset  # noqa: E402

__all__ = ["Dataset", "ScenarioConfig", "TestSet", "load_scenario", "read_dataset", "write_dataset",
           "__version__"]
