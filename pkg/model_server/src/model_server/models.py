"""Image classifiers behind one loading and prediction interface.

Every entry serves 1000-way ImageNet-family classification. Plain ids
("resnet18") load published pretrained checkpoints and need the weights
available locally or downloadable. Ids with the "-sim" suffix build the
same architecture with seeded random weights instead, so the full serving
stack runs deterministically on machines with no checkpoint access; their
labels are meaningless as image semantics but exercise every code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
from torchvision import models as tv_models
from torchvision.transforms import functional as tv_functional

from .errors import ModelLoadError

BASE_MODELS = ("resnet18", "resnet50", "vgg16", "swin_t")
SIM_SUFFIX = "-sim"
MODEL_IDS = tuple(sorted(BASE_MODELS + tuple(m + SIM_SUFFIX for m in BASE_MODELS)))

NUM_CLASSES = 1000
# classic ImageNet eval recipe, used verbatim for the simulated variants
DEFAULT_RESIZE = 256
DEFAULT_CROP = 224
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

SIM_INIT_SEED = 0
SIM_CALIBRATION_SEED = 1
SIM_CALIBRATION_BATCHES = 8
SIM_CALIBRATION_BATCH_SIZE = 8

_BATCHNORM_TYPES = (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d, torch.nn.BatchNorm3d)


@dataclass(frozen=True)
class ServedModel:
    """A loaded classifier plus the preprocessing it was published with.

    predict() is the only inference surface: it returns the argmax label
    and nothing else, so logits and probabilities never cross the boundary.
    Inference is read-only and deterministic; one instance may serve
    concurrent requests.
    """

    model_id: str
    net: torch.nn.Module
    num_classes: int
    resize_size: int
    crop_size: int
    mean: tuple[float, ...]
    std: tuple[float, ...]
    weight_source: str
    device: str

    def preprocess(self, img: np.ndarray) -> torch.Tensor:
        """Validate an (h, w, c) float tensor and produce the model input.

        Grayscale inputs are replicated to three channels, matching how
        ImageNet eval pipelines promote grayscale files to RGB. Values are
        taken as given in [0, 1] units; resize, center crop, and
        normalization follow the recipe recorded on this instance.
        """
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected an (h, w, c) tensor, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"empty image: shape {arr.shape}")
        if c == 1:
            arr = np.repeat(arr, 3, axis=2)
        elif c != 3:
            raise ValueError(f"expected 1 or 3 channels, got {c}")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite values")
        t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
        t = t.to(dtype=torch.float32).unsqueeze(0)
        t = tv_functional.resize(t, self.resize_size, antialias=True)
        t = tv_functional.center_crop(t, self.crop_size)
        mean = torch.tensor(self.mean, dtype=torch.float32).view(1, 3, 1, 1)
        std = torch.tensor(self.std, dtype=torch.float32).view(1, 3, 1, 1)
        return ((t - mean) / std).to(torch.device(self.device))

    def predict(self, img: np.ndarray) -> int:
        """Top-1 label for one image, hard-label only."""
        batch = self.preprocess(img)
        with torch.inference_mode():
            logits = self.net(batch)
        if logits.shape != (1, self.num_classes):
            raise RuntimeError(f"model emitted logits of shape {tuple(logits.shape)}")
        return int(logits.argmax(dim=1).item())

    def metadata(self) -> dict:
        """Loading and preprocessing facts, published through /healthz."""
        return {
            "model": self.model_id,
            "weights": self.weight_source,
            "device": self.device,
            "preprocessing": {
                "input": "float64 (h, w, c) in [0, 1], grayscale replicated to rgb",
                "resize_size": self.resize_size,
                "crop_size": self.crop_size,
                "interpolation": "bilinear, antialiased",
                "mean": list(self.mean),
                "std": list(self.std),
            },
        }


def _calibrate_norm_stats(net: torch.nn.Module) -> None:
    """Give freshly initialized batchnorm layers usable running statistics.

    At random init the running stats sit at mean 0, variance 1, which bears
    no relation to the actual activation scale; in eval mode that collapses
    the network into a near-constant classifier. Forwarding seeded noise in
    train mode replaces the stats with observed ones. No optimizer runs, so
    the weights themselves never change.
    """
    if not any(isinstance(m, _BATCHNORM_TYPES) for m in net.modules()):
        return
    gen = torch.Generator().manual_seed(SIM_CALIBRATION_SEED)
    net.train()
    with torch.no_grad():
        for _ in range(SIM_CALIBRATION_BATCHES):
            batch = torch.rand(
                (SIM_CALIBRATION_BATCH_SIZE, 3, DEFAULT_CROP, DEFAULT_CROP),
                generator=gen,
            )
            net(batch)
    net.eval()


def load_model(model_id: str, device: str = "cpu") -> ServedModel:
    """Build a ServedModel from a registry id. Each call loads fresh."""
    if model_id not in MODEL_IDS:
        raise ValueError(f"unknown model id {model_id!r}; known: {', '.join(MODEL_IDS)}")
    simulated = model_id.endswith(SIM_SUFFIX)
    base = model_id[: -len(SIM_SUFFIX)] if simulated else model_id
    dev = torch.device(device)
    if simulated:
        torch.manual_seed(SIM_INIT_SEED)
        net = tv_models.get_model(base, weights=None)
        _calibrate_norm_stats(net)
        resize, crop = DEFAULT_RESIZE, DEFAULT_CROP
        mean, std = IMAGENET_MEAN, IMAGENET_STD
        source = "simulated"
    else:
        weights = tv_models.get_model_weights(base).DEFAULT
        try:
            net = tv_models.get_model(base, weights=weights)
        except Exception as exc:
            raise ModelLoadError(
                f"cannot load pretrained weights for {base!r}"
                f" (are they downloadable or cached?): {exc}"
            ) from exc
        preset = weights.transforms()
        resize = int(preset.resize_size[0])
        crop = int(preset.crop_size[0])
        mean, std = tuple(preset.mean), tuple(preset.std)
        source = "pretrained"
    net.eval()
    net.to(dev)
    for p in net.parameters():
        p.requires_grad_(False)
    return ServedModel(
        model_id=model_id,
        net=net,
        num_classes=NUM_CLASSES,
        resize_size=resize,
        crop_size=crop,
        mean=mean,
        std=std,
        weight_source=source,
        device=str(dev),
    )


@lru_cache(maxsize=4)
def _cached_model(model_id: str, device: str) -> ServedModel:
    return load_model(model_id, device)


def predict_local(model_id: str, img: np.ndarray, device: str = "cpu") -> int:
    """Reference inference path: same label the served endpoint returns.

    Models are cached per (id, device) so repeated conformance checks do
    not pay the load cost each call.
    """
    return _cached_model(model_id, device).predict(img)
