"""Long-run stock yields from a momentum/value model anchored on CAPE.

Modules: market data ingestion, predictive regressions with a persistent
regressor and their bootstrap test, the price/dividend dynamics with closed
forms, calibration, and Monte Carlo scenarios.
"""
__version__ = "0.1.0"

from .errors import CapeError, ConfigError, DataError, NumericalError  # noqa: E402
from .market_data import MarketSeries, YearMonth, load_market  # noqa: E402
from .regression import augmented_regression, ols  # noqa: E402
from .bootstrap import BootstrapConfig, run_bootstrap  # noqa: E402
from .dynamics import LinearForm, ModelParams, published_params  # noqa: E402
from .calibration import calibrate  # noqa: E402
from .scenarios import InitialConditions, band, simulate  # noqa: E402

__all__ = [
    "CapeError", "ConfigError", "DataError", "NumericalError",
    "MarketSeries", "YearMonth", "load_market",
    "augmented_regression", "ols",
    "BootstrapConfig", "run_bootstrap",
    "LinearForm", "ModelParams", "published_params",
    "calibrate",
    "InitialConditions", "band", "simulate",
]
