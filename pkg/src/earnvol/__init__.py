"""Post-earnings realized volatility, training-free PEV/STPEV baselines and diagnostics."""

from .analysis import (
    EmbeddingSet,
    GroupSimilarityReport,
    RandomMode,
    group_cosine_similarity,
    load_embeddings,
    pearson,
    random_embeddings,
    save_embeddings,
)
from .baselines import (
    LinearRegression,
    Mean,
    Median,
    Mlp,
    PredictionSet,
    fit_quarter_model,
    pev_predict,
    run_baseline,
    stpev_predict,
)
from .dataset import (
    EventTable,
    Provenance,
    Split,
    augment_history,
    build_event_table,
    oet,
    rolling_quarter_split,
    same_ticker_history,
)
from .errors import (
    CalendarError,
    DataError,
    DegenerateVariance,
    EarnvolError,
    InsufficientFutureData,
    InsufficientHistory,
    SingularDesign,
)
from .evalharness import EvalReport, mse, run_experiment
from .market_data import (
    PriceSeries,
    ReturnSeries,
    TradingCalendar,
    compute_returns,
    load_price_series,
    trading_day_at_offset,
)
from .regressor import LinearModel, MlpModel, TrainConfig, gradient_check, mlp_train, ridge_fit
from .volatility import (
    TAUS,
    EarningsEvent,
    MarketSession,
    Quarter,
    VolatilityRecord,
    VolConvention,
    event_window_profile,
    first_post_day,
    post_earnings_volatility,
    pre_earnings_volatility_series,
    realized_volatility,
)

__version__ = "0.1.0"
