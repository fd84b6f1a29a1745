"""Causal and directional information flow between grouped channels of multivariate time series."""

from .ensemble import (
    PrefixCovariance,
    PrefixCovarianceEstimator,
    RoiGrouping,
    TrialRecording,
    WindowEnsemble,
    estimate_joint_covariance,
    group_into_rois,
    log_det_psd,
    pool_blocks,
    pool_sections,
    slice_windows,
)
from .exceptions import (
    CapacityError,
    CausalFlowError,
    ConfigurationError,
    DataError,
    EstimationError,
    FitError,
    InsufficientResamplesError,
    LayoutError,
    NumericalError,
)
from .gaussian import (
    InformationRateTransformer,
    MeasureKind,
    cbi_rate,
    causal_mi_rate,
    conditional_mi_rate,
    evaluate_measures,
    kamitake_rate,
    massey_rate,
    sum_te_rate,
)
from .oracle import ChannelSpec, JointPmf, build_pmf, oracle_measure, oracle_measure_kl, verify_identities
from .stats import (
    BlockBootstrapAUC,
    auc,
    block_bootstrap,
    connectivity_change_matrix,
    l1_gaussian_fit,
    norm_cdf,
    roc_points,
    significance_test,
    skewness_kurtosis,
)
from .synth import ElectrodeLayout, SynthConfig, default_layout, generate_dataset, generate_trial

__version__ = "0.1.0"
