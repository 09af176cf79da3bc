"""Unsupervised recycled-FPGA detection from ring-oscillator path symmetry."""
__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    NumericError,
    PairingError,
    ParameterError,
    SchemaError,
    SymdetectError,
    ValidationError,
)
from .fingerprint import (
    Dataset,
    DeviceFingerprint,
    PathFingerprint,
    RoGrid,
    load_dataset,
    save_dataset,
    validate,
)
from .simulator import SimConfig, gen_systematic_field, simulate
from .vp import SampleMask, VpEstimate, make_mask, rmse_profile, vp_reconstruct
from .pairing import SymmetryPairing, consensus_pairing, pair_by_rmse, structural_pairing
from .ulsif import AnomalyScore, UlsifConfig, UlsifModel, anomaly_score, fit, select_model
from .detector import (
    CpScoreVector,
    DetectionReport,
    audit_comparisons,
    classify,
    kmeans_pp,
    roc_curve,
    score_device_baseline,
    score_device_symmetric,
)
from .config import PipelineConfig, load_config
from .pipeline import run_experiment
