"""Hard-label HTTP serving for image classifiers.

Wraps pretrained (or seeded simulated) ImageNet-family models behind the
wire protocol the attack engine's remote oracle speaks: POST /predict with
a base64 float tensor returns {"label": int}, GET /healthz reports the
class count and preprocessing metadata. Labels only; logits never leave.
"""

from .errors import ModelLoadError
from .models import (
    BASE_MODELS,
    MODEL_IDS,
    NUM_CLASSES,
    ServedModel,
    load_model,
    predict_local,
)
from .server import build_server, decode_predict_body, serve

__version__ = "0.1.0"

__all__ = [
    "BASE_MODELS",
    "MODEL_IDS",
    "ModelLoadError",
    "NUM_CLASSES",
    "ServedModel",
    "build_server",
    "decode_predict_body",
    "load_model",
    "predict_local",
    "serve",
    "__version__",
]
