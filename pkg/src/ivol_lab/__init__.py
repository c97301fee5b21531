"""Market implied volatility pipeline: index construction, feature
engineering, and walk-forward movement-prediction experiments."""

__version__ = "0.1.0"

from .data_ingest import (  # noqa: F401
    Bar,
    CountObservation,
    DailySeries,
    RawOptionQuote,
    TradingCalendar,
    align_to_calendar,
    load_bars,
    load_counts,
    load_options,
)
from .errors import (  # noqa: F401
    DataError,
    DegenerateChainError,
    FetchError,
    IvolLabError,
    SchemaError,
)
from .feature_factory import FeatureMatrix, build_feature_matrix, make_target  # noqa: F401
from .ivol_engine import (  # noqa: F401
    ExpirySlice,
    IvolPoint,
    VarianceStrip,
    daily_ivol_series,
    forward_level,
    interpolate_constant_maturity,
    select_strip,
    term_variance,
)
from .walkforward_eval import (  # noqa: F401
    ExperimentReport,
    SplitPlan,
    balanced_accuracy,
    make_splits,
    run_ablation,
)
