"""driftmem: continual learning for drifting regression streams.

A fixed-budget replay memory is rebuilt each period by weighted sampling,
mixing kernel-density scores with reservoir-style biased coefficients, and
the regressor trains with representation-hint losses against the previous
period's frozen model.
"""

from .data import (
    DataError,
    FeatureScaler,
    PeriodDataset,
    Sample,
    StreamConfig,
    apply_scaler,
    fit_scaler,
    generate_synthetic_stream,
    load_csv_stream,
    make_windows,
    stream_preset,
)
from .density import (
    DensityModel,
    GmmFit,
    ShiftLevel,
    densities,
    density,
    density_score,
    fit_bandwidth_mlcv,
    fit_density,
    fit_gmm_two,
    shift_level_score,
)
from .harness import (
    MethodSpec,
    MetricsReport,
    PeriodRecord,
    build_eval_sets,
    mse,
    pca_project_2d,
    run_experiment,
)
from .memory import (
    MemoryEntry,
    MemorySet,
    WeightSet,
    sample_weight,
    select_memory,
    update_memory,
    weighted_sample_without_replacement,
)
from .model import (
    LossTerms,
    LossWeights,
    RegressorParams,
    TrainConfig,
    TrainingDivergenceError,
    forward,
    forward_batch,
    gradient,
    init_params,
    load_checkpoint,
    loss_terms,
    save_checkpoint,
    train_period,
)

__version__ = "0.1.0"
