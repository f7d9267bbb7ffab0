"""Futures-market efficiency diagnostics from lagged two-point correlations."""

__version__ = "0.1.0"

from .correlation import (  # noqa: E402
    CorrelationFunction,
    LagCorrelation,
    correlation_function,
    normalized_correlation,
    raw_correlation,
)
from .diagnostics import (  # noqa: E402
    CbpiReport,
    ConstancyFit,
    LeaderFollowerEntry,
    cbpi,
    cbpi_history,
    fit_constant,
    leader_follower_table,
    windowed_coefficient_history,
)
from .estimators import (  # noqa: E402
    BarAggregator,
    LaggedCorrelation,
    LeaderFollowerDetector,
    PowerLawTail,
    PredictabilityIndex,
    ReturnPanelBuilder,
)
from .marketdata import (  # noqa: E402
    AlignedPanel,
    Bar,
    ReturnObservation,
    Tick,
    aggregate_ticks,
    align_panel,
    build_panel,
    compute_returns,
    volume_profile,
)
from .tails import (  # noqa: E402
    PowerLawFit,
    TailHistogram,
    fit_power_law,
    max_convergent_moment,
    tail_histogram,
)

__all__ = [
    "AlignedPanel", "Bar", "BarAggregator", "CbpiReport", "ConstancyFit",
    "CorrelationFunction", "LagCorrelation", "LaggedCorrelation", "LeaderFollowerDetector",
    "LeaderFollowerEntry", "PowerLawFit", "PowerLawTail", "PredictabilityIndex",
    "ReturnObservation", "ReturnPanelBuilder", "TailHistogram", "Tick", "aggregate_ticks",
    "align_panel", "build_panel", "cbpi", "cbpi_history", "compute_returns",
    "correlation_function", "fit_constant", "fit_power_law", "leader_follower_table",
    "max_convergent_moment", "normalized_correlation", "raw_correlation", "tail_histogram",
    "volume_profile", "windowed_coefficient_history",
]
