"""gptexport: reference checkpoints, tokens, and fixtures for potq."""

__version__ = "0.1.0"

from .fixtures import emit_fixtures, load_torch_model
from .formats import (
    ModelShape,
    read_fixtures,
    read_pqck_header,
    read_pqtk,
    write_fixtures,
    write_pqck,
    write_pqtk,
)
from .gpt2 import convert_state_dict, export_gpt2
from .manifest import ExportManifest, verify_manifest
from .model import CharGPT, TrainConfig
from .train import train_char_model

__all__ = [
    "__version__",
    "ModelShape", "write_pqck", "read_pqck_header", "write_pqtk", "read_pqtk",
    "write_fixtures", "read_fixtures",
    "CharGPT", "TrainConfig", "train_char_model",
    "emit_fixtures", "load_torch_model",
    "export_gpt2", "convert_state_dict",
    "ExportManifest", "verify_manifest",
]
