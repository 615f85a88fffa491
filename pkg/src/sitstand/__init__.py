"""Sit-to-stand assessment chair: simulation, ingestion, scoring, classification."""

from .base import (
    ConflictingResubmission,
    DimensionMismatch,
    EmptyChannel,
    EmptyTestSet,
    EmptyTrainingSet,
    InsufficientSamples,
    ModeMismatch,
    NonPositiveScale,
    NoOverlap,
    OverRange,
    SchemaViolation,
    SitStandError,
    UnknownTrial,
)
from .sensors import (
    CHANNELS,
    Calibration,
    Channel,
    DriftModel,
    GaugeChannel,
    counts_to_kg,
    differential_read,
    quantize,
    simulate_chair,
)
from .acquisition import (
    RawSample,
    SamplerConfig,
    TrialPacket,
    assemble_trial,
    calibrate_scale,
    run_samplers,
    tare_channel,
)
from .pipeline import (
    AlignedTrial,
    ChairGeometry,
    StsScore,
    TransitionDetector,
    TransitionEvent,
    UniformResampler,
    center_of_pressure,
    detect_transitions,
    emit_plot,
    resample_uniform,
    score_trial,
    total_load,
)
from .classify import (
    ClassResult,
    FeatureSeries,
    KnnDtwClassifier,
    dtw_distance,
    evaluate,
    leave_one_out,
    trial_features,
    znorm,
)
from .cohort import (
    CohortManifest,
    MotionProfile,
    generate_cohort,
    generate_profile,
    profile_to_load_curves,
)
from .store import TrialStore
from .wire import parse, serialize

__version__ = "0.1.0"
