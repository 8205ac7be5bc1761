"""Random-matrix diagnostics for neural activations.

Submodules:
    laws       Marchenko-Pastur / Wigner / Tracy-Widom baselines and fitting.
    features   22-slot spectral descriptor of an activation window.
    stream     Sliding-window buffering and descriptor time series.
    recurrent  RNN/GRU/LSTM binary head with BPTT training and gating.
    compress   MP-guided projection compression with self-distillation.
    synth      Synthetic activation streams and classification fixtures.
    io         "SPAC"/"SPHD"/"SPKD" containers, socket frames, NDJSON.
    cli        Command-line front end (``rmtkit`` entry point).
"""

from .laws import (
    EigenSpectrum,
    MpParams,
    TwStandardization,
    bbp_threshold,
    estimate_sigma2_mean,
    estimate_sigma2_quantile,
    fit_sigma2,
    mp_cdf,
    mp_density,
    mp_quantile,
    mp_support,
    tw_standardize,
    tw_tail_probability,
    wigner_density,
)
from .features import (
    ActivationWindow,
    FeatureVector,
    FEATURE_COUNT,
    SCHEMA_VERSION,
    SLOT_NAMES,
    descriptor_vector,
    eigenspectrum,
    gap_ratios,
    kl_to_mp,
    leading_sum,
    spectral_entropy,
    spectral_moments,
    wasserstein_to_mp,
)
from .stream import DescriptorSeries, SlidingBuffer, descriptor_series
from .recurrent import (
    RecurrentHeadParams,
    TrainConfig,
    auroc,
    backward,
    bce_loss,
    cell_step,
    gate,
    head_forward,
    init_head,
    train,
)
from .compress import (
    CompressionPlan,
    CompressionReport,
    DenseNet,
    SpikedModelSpec,
    causal_projection,
    collect_activations,
    distill_loss,
    insert_projection,
    quantile_sweep,
    rmtkd_schedule,
    select_outliers,
    spiked_sample,
    stopping_check,
)

__version__ = "0.1.0"
