"""Query-efficient hard-label attack in the patchwise low-frequency DCT domain."""

__version__ = "0.1.0"

from .dct import DctMatrix, block_dct, block_idct, dct_basis, dct_blocks, idct_blocks
from .engine import (
    DOMAIN_DCT,
    DOMAIN_PIXEL,
    REASON_ALREADY_MISCLASSIFIED,
    REASON_BUDGET,
    REASON_DEGENERATE,
    REASON_INIT_FAILURE,
    REASON_OK,
    AttackConfig,
    AttackResult,
    AttackRun,
    Direction,
    TracePoint,
    apply_mask,
    run_attack,
)
from .errors import (
    BudgetExhaustedError,
    DctAttackError,
    DegenerateImageError,
    DirectionFailureError,
    InitializationFailureError,
    OracleConnectionError,
    OracleProtocolError,
    OracleServerError,
    PatchLayoutError,
)
from .image import (
    PatchGrid,
    as_image,
    assemble_patches,
    crop_patches,
    load_png,
    load_raw,
    patch_variances,
    save_png,
    save_raw,
)
from .masking import BinaryMask, WeightMask, lowfreq_mask, normalize_variances, weight_mask
from .metrics import (
    ImageMetrics,
    MetricReport,
    aggregate,
    l2_distortion,
    lower_median,
    psnr,
    ssim,
    success_rate,
)
from .oracle import (
    HardLabelOracle,
    LinearOracle,
    PatchMeanOracle,
    QueryLedger,
    RemoteOracle,
    TinyMlpOracle,
    query,
)

__all__ = [
    "__version__",
    "AttackConfig",
    "AttackResult",
    "AttackRun",
    "BinaryMask",
    "BudgetExhaustedError",
    "DctAttackError",
    "DctMatrix",
    "DegenerateImageError",
    "Direction",
    "DirectionFailureError",
    "DOMAIN_DCT",
    "DOMAIN_PIXEL",
    "HardLabelOracle",
    "ImageMetrics",
    "InitializationFailureError",
    "LinearOracle",
    "MetricReport",
    "OracleConnectionError",
    "OracleProtocolError",
    "OracleServerError",
    "PatchGrid",
    "PatchLayoutError",
    "PatchMeanOracle",
    "QueryLedger",
    "REASON_ALREADY_MISCLASSIFIED",
    "REASON_BUDGET",
    "REASON_DEGENERATE",
    "REASON_INIT_FAILURE",
    "REASON_OK",
    "RemoteOracle",
    "TinyMlpOracle",
    "TracePoint",
    "WeightMask",
    "aggregate",
    "apply_mask",
    "as_image",
    "assemble_patches",
    "block_dct",
    "block_idct",
    "crop_patches",
    "dct_basis",
    "dct_blocks",
    "idct_blocks",
    "l2_distortion",
    "load_png",
    "load_raw",
    "lower_median",
    "lowfreq_mask",
    "normalize_variances",
    "patch_variances",
    "psnr",
    "query",
    "run_attack",
    "save_png",
    "save_raw",
    "ssim",
    "success_rate",
    "weight_mask",
]
