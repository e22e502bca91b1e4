"""potq: power-of-two post-training quantization with a minimal GPT engine."""

__version__ = "0.1.0"

from .checkpoint import GPTConfig, read_checkpoint, write_checkpoint
from .errors import (
    AuditError,
    DataError,
    FormatError,
    PotqError,
    SchemeError,
    ShapeError,
    UncalibratedError,
)
from .evaluate import EvalReport, cross_entropy, evaluate, perplexity, sweep
from .model import GPTWeights, forward, generate, load_checkpoint, parameter_census
from .pipeline import (
    INTEGER,
    SIMULATED,
    QuantSpec,
    QuantizedModel,
    calibrate,
    convert,
    op_report,
    prepare,
    quantize_model,
)
from .quant import (
    Affine,
    Observer,
    PoT,
    PoTConfig,
    PoTWeight,
    QTensor,
    QuantParams,
    Symmetric,
    compute_params,
    dequantize,
    merge_observers,
    observe,
    pot_dequantize,
    pot_quantize,
    pot_storage_bits,
    quantize_affine,
    quantize_symmetric,
)
from .qspec import parse_quant_spec, parse_scheme

__all__ = [
    "__version__",
    "GPTConfig", "GPTWeights", "read_checkpoint", "write_checkpoint",
    "load_checkpoint", "forward", "generate", "parameter_census",
    "QuantSpec", "QuantizedModel", "prepare", "calibrate", "convert",
    "quantize_model", "op_report", "SIMULATED", "INTEGER",
    "Observer", "observe", "merge_observers", "compute_params",
    "Symmetric", "Affine", "PoT", "PoTConfig", "PoTWeight", "QTensor",
    "QuantParams", "quantize_symmetric", "quantize_affine", "dequantize",
    "pot_quantize", "pot_dequantize", "pot_storage_bits",
    "cross_entropy", "perplexity", "evaluate", "sweep", "EvalReport",
    "parse_quant_spec", "parse_scheme",
    "PotqError", "ShapeError", "SchemeError", "UncalibratedError",
    "AuditError", "FormatError", "DataError",
]
