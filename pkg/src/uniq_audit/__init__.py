"""Re-identification risk audit for attribute-based ad targeting.

Synthetic populations, an audience-size oracle with a reporting floor, the
censored log-linear uniqueness estimator, risk curves and a campaign
simulator.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DataError,
    DegenerateFitError,
    FitError,
    NonDecayingFitError,
    UnstableEstimateError,
)
