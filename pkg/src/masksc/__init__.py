"""Sparse dictionary learning with reconstruction and masked objectives."""

from .decode import (
    BatchDecode,
    Mask,
    SparseVector,
    exhaustive_decode,
    omp,
    omp_batch,
    omp_masked,
    omp_masked_batch,
)
from .errors import (
    BudgetError,
    ContractError,
    DatasetFormatError,
    DegenerateColumnError,
    IncoherenceError,
    NumericalError,
    SchemaVersionError,
)
from .linalg import gaussian_matrix, least_squares, normalize_columns
from .metrics import (
    RecoveryReport,
    mutual_coherence,
    recovery_error,
    rip_delta,
    support_recovery_rate,
)
from .model import (
    Dataset,
    GroundTruthModel,
    Sample,
    generate_dataset,
    load_dataset,
    sample_code,
    save_dataset,
)
from .objectives import LossReport, loss_gradient, masked_loss, recon_loss
from .rng import RngStream
from .theory import (
    NetSpec,
    OracleEstimator,
    build_adversarial_dictionary,
    lambda_quantile,
    masked_risk,
    net_cover_audit,
    oracle_predict,
    verify_theorem_masking,
    verify_theorem_overfit,
)
from .train import AdamState, RunResult, TrainConfig, adam_step, init_dictionary, train

__version__ = "0.1.0"
