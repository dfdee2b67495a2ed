"""Hard-label classifier oracles, query accounting, and the remote client.

An oracle maps an image tensor to a single integer label and reveals nothing
else. Every oracle call made by the attack goes through query(), which clips
to the valid pixel range and charges the ledger first, so a call that fails
downstream still consumes budget.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    BudgetExhaustedError,
    OracleConnectionError,
    OracleProtocolError,
    OracleServerError,
)
from .image import as_image, image_to_blocks


class HardLabelOracle:
    """A deterministic top-1 classifier: image tensor in, integer label out."""

    num_classes: int = 2

    def predict(self, x: np.ndarray) -> int:
        raise NotImplementedError


@dataclass
class QueryLedger:
    """Counts oracle calls against a fixed budget.

    charge() raises once the budget is used up; it increments before the
    prediction happens, so failed calls are not refunded.
    """

    budget: int
    used: int = 0

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if self.used < 0 or self.used > self.budget:
            raise ValueError(f"used={self.used} outside [0, {self.budget}]")

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def charge(self) -> None:
        if self.used >= self.budget:
            raise BudgetExhaustedError(f"query budget of {self.budget} exhausted")
        self.used += 1


def query(oracle: HardLabelOracle, ledger: QueryLedger, x: np.ndarray) -> int:
    """Spend one query: clip x into [0, 1], then ask the oracle for a label."""
    ledger.charge()
    return int(oracle.predict(np.clip(x, 0.0, 1.0)))


class LinearOracle(HardLabelOracle):
    """Halfspace classifier: label 1 iff <w, x> > b, else 0.

    The boundary geometry is known in closed form, which makes this the
    reference oracle for checking search accuracy.
    """

    num_classes = 2

    def __init__(self, w, b: float):
        w = np.asarray(w, dtype=np.float64)
        if not w.any():
            raise ValueError("weight tensor must be non-zero")
        self.w = w
        self.b = float(b)

    def predict(self, x: np.ndarray) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.w.shape:
            raise ValueError(f"input shape {x.shape} != weight shape {self.w.shape}")
        return int(np.vdot(self.w, x) > self.b)

    def boundary_distance_along(self, x0, direction) -> float:
        """Exact distance from x0 to the hyperplane along a given direction.

        Positive when the boundary lies ahead of x0 in that direction; the
        direction is taken as-is (pass a unit vector for an L2 distance).
        """
        x0 = np.asarray(x0, dtype=np.float64)
        direction = np.asarray(direction, dtype=np.float64)
        rate = np.vdot(self.w, direction)
        if rate == 0.0:
            raise ValueError("direction is parallel to the decision boundary")
        return float((self.b - np.vdot(self.w, x0)) / rate)


class PatchMeanOracle(HardLabelOracle):
    """Label depends only on the mean intensity of one d x d patch.

    Label 1 iff the mean over all d*d*C values of the target patch exceeds
    the threshold. Out-of-range patch indices raise IndexError at predict
    time, when the image geometry is known.
    """

    num_classes = 2

    def __init__(self, target_patch: int, threshold: float, d: int = 16):
        if d <= 0:
            raise ValueError(f"patch size must be positive, got {d}")
        if target_patch < 0:
            raise IndexError(f"patch index must be non-negative, got {target_patch}")
        self.target_patch = int(target_patch)
        self.threshold = float(threshold)
        self.d = int(d)

    def predict(self, x: np.ndarray) -> int:
        arr = as_image(x)
        h, w, _ = arr.shape
        if h % self.d or w % self.d:
            raise ValueError(
                f"{w}x{h} image does not divide into {self.d}x{self.d} patches"
            )
        blocks, rows, cols = image_to_blocks(arr, self.d)
        if self.target_patch >= rows * cols:
            raise IndexError(
                f"patch {self.target_patch} out of range for a {rows}x{cols} grid"
            )
        return int(blocks[self.target_patch].mean() > self.threshold)


class TinyMlpOracle(HardLabelOracle):
    """Small fixed-weight two-layer network with an argmax label.

    Weights are drawn once per (seed, input size) from a dedicated generator,
    so the classifier is a deterministic function of the seed. The decision
    surface is mildly non-linear, standing in for a real model without the
    weight files.
    """

    def __init__(self, seed: int, num_classes: int = 2, hidden: int = 32):
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        if hidden <= 0:
            raise ValueError(f"hidden width must be positive, got {hidden}")
        self.seed = int(seed)
        self.num_classes = int(num_classes)
        self.hidden = int(hidden)
        self._weights: dict[int, tuple] = {}

    def _layer_weights(self, dim: int) -> tuple:
        if dim not in self._weights:
            rng = np.random.default_rng([self.seed, dim])
            w1 = rng.standard_normal((self.hidden, dim)) / np.sqrt(dim)
            b1 = 0.1 * rng.standard_normal(self.hidden)
            w2 = rng.standard_normal((self.num_classes, self.hidden)) / np.sqrt(self.hidden)
            b2 = 0.1 * rng.standard_normal(self.num_classes)
            self._weights[dim] = (w1, b1, w2, b2)
        return self._weights[dim]

    def predict(self, x: np.ndarray) -> int:
        v = np.asarray(x, dtype=np.float64).ravel() - 0.5
        w1, b1, w2, b2 = self._layer_weights(v.size)
        hidden = np.tanh(3.0 * (w1 @ v) + b1)
        logits = w2 @ hidden + b2
        return int(np.argmax(logits))


class RemoteOracle(HardLabelOracle):
    """Client for the HTTP hard-label protocol.

    predict() POSTs the tensor to <endpoint>/predict as base64 float64 and
    returns the integer label. The constructor probes <endpoint>/healthz to
    learn the class count and fail fast on a dead server.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, session=None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = float(timeout)
        self._session = session or requests.Session()
        health = self._get_json(self.endpoint + "/healthz")
        try:
            if health["status"] != "ok":
                raise OracleServerError(f"server unhealthy: {health}")
            self.num_classes = int(health["num_classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise OracleProtocolError(f"bad healthz payload: {health!r}") from exc

    def _get_json(self, url: str):
        try:
            resp = self._session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise OracleConnectionError(f"cannot reach {url}: {exc}") from exc
        if resp.status_code != 200:
            raise OracleServerError(f"{url} returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise OracleProtocolError(f"{url} returned non-JSON body") from exc

    def predict(self, x: np.ndarray) -> int:
        arr = as_image(x)
        h, w, c = arr.shape
        payload = {
            "w": w,
            "h": h,
            "c": c,
            "data_b64": base64.b64encode(
                np.ascontiguousarray(arr, dtype="<f8").tobytes()
            ).decode("ascii"),
        }
        try:
            resp = self._session.post(
                self.endpoint + "/predict", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise OracleConnectionError(
                f"cannot reach {self.endpoint}/predict: {exc}"
            ) from exc
        if resp.status_code != 200:
            raise OracleServerError(
                f"/predict returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
            label = body["label"]
            if not isinstance(label, int) or isinstance(label, bool):
                raise TypeError(f"label is {type(label).__name__}")
        except (ValueError, KeyError, TypeError) as exc:
            raise OracleProtocolError(f"bad /predict payload: {exc}") from exc
        return label
