"""Multi-source domain generalization lab for multi-agent trajectory prediction."""

from .metrics import ade, fde
from .model import MultiDomainPredictor
from .pipeline import (
    DomainCorpus,
    DomainStats,
    RawTrack,
    build_corpus,
    chronological_split,
    compute_domain_statistics,
    resample_and_normalize,
)
from .scenes import (
    FRAME_DT,
    MASKED,
    OBS_LEN,
    PRED_LEN,
    FeatureBundle,
    HyperParams,
    NeighborTrack,
    TrajectoryScene,
    decode_scene,
    encode_scene,
    validate_scene,
)
from .synth import DomainProfile, generate_synthetic_domain
from .training import TrainOptions, run_training
from .experiment import (
    EvalReport,
    default_profiles,
    evaluate_scenes,
    run_generalization_experiment,
    run_inference,
    run_source_count_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "ade", "fde",
    "MultiDomainPredictor",
    "DomainCorpus", "DomainStats", "RawTrack", "build_corpus",
    "chronological_split", "compute_domain_statistics", "resample_and_normalize",
    "FRAME_DT", "MASKED", "OBS_LEN", "PRED_LEN",
    "FeatureBundle", "HyperParams", "NeighborTrack", "TrajectoryScene",
    "decode_scene", "encode_scene", "validate_scene",
    "DomainProfile", "generate_synthetic_domain",
    "TrainOptions", "run_training",
    "EvalReport", "default_profiles", "evaluate_scenes",
    "run_generalization_experiment", "run_inference", "run_source_count_sweep",
    "__version__",
]
