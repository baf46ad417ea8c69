"""mortrend: mortality trend registration and long-horizon forecasting.

The pipeline, bottom to top: parse mortality surfaces and impute gap years
(mortality_data), extract each country's time index (lee_carter), smooth it
(kernel_smoothing), register trends across countries (curve_registration,
common_trend), read forecasts off the registered reference (forecast) and
band them by residual bootstrap (bootstrap). The cli module wires the
stages together over files.
"""

from .bootstrap import (
    BootstrapConfig,
    BootstrapRun,
    ConditionalModel,
    PredictionBands,
    bootstrap_prediction,
    fit_conditional_model,
    resample_series,
)
from .common_trend import (
    CommonTrendConfig,
    CommonTrendFit,
    PanelOfCurves,
    build_panel,
    fit_common_trend,
    flag_outliers,
    init_reference,
    normalize_params,
    update_reference,
)
from .curve_registration import (
    RegistrationResult,
    ShapeParams,
    fit_shape_params,
    registration_loss,
    scan_initial_shift,
    transform_curve,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    MortrendError,
)
from .forecast import (
    TrendForecast,
    forecast_surface,
    forecast_via_drift,
    forecast_via_reference,
    max_horizon,
)
from .kernel_smoothing import (
    CurveSample,
    SmoothedCurve,
    bandwidth_for_df,
    effective_df,
    local_linear_smooth,
    smooth_to_df,
)
from .lee_carter import (
    DriftModel,
    LCDecomposition,
    fit_drift,
    fit_lee_carter,
    forecast_k_drift,
    reconstruct_mortality,
)
from .mortality_data import (
    LogMortalitySurface,
    MortalitySurface,
    impute_missing_years,
    log_transform,
    parse_mortality_table,
)

__version__ = "0.1.0"
