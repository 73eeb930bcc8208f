"""Statistical detection of stealthy hypervisors from instruction execution times."""
from .calibration import (
    ErrorSide,
    build_threshold_table,
    calibrate_nested,
    bands_from_samples,
    derive_threshold,
    estimate_error_rate,
    select_filtration_level,
    select_level_from_profile,
)
from .core import (
    DetectionVerdict,
    Evidence,
    IetArray,
    NestedBand,
    Side,
    StatisticKind,
    ThresholdEntry,
    ThresholdTable,
    TraceBatch,
    VariationInterval,
    VerdictKind,
    vectorize,
)
from .detector import (
    compare_layer_values,
    count_nested,
    detect,
    detect_blue_chicken,
    evaluate_array,
)
from .estimators import IetStatistics, StealthHypervisorDetector, check_iet_arrays
from .simulator import (
    POC_DISPATCHER,
    SECOND_DISPATCHER,
    ScenarioSpec,
    SimulatorProvider,
    simulate_array,
    simulate_batch,
    simulate_measurement,
)
from .stats import (
    LayerValueSet,
    central_moment,
    column_statistic,
    count_layers,
    detect_jumps,
    frequency_classes,
    layer_value_set,
    length_averaged_stat,
    low_frequency_filter,
    variation_interval,
    vectorized_statistic,
)

__version__ = "0.1.0"
