"""Versioned checkpoint container with a bit-exact JSON round-trip.

Parameters are stored as base64 of little-endian float64 bytes, so a
serialize/deserialize cycle reproduces every bit on any platform.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .nn import ModelSpec, param_count

FORMAT = "cldetect-checkpoint"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: np.ndarray
    strategy_meta: dict = field(default_factory=dict)
    seed: int = 0
    trace: dict = field(default_factory=dict)
    task_name: str = ""

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.spec),):
            raise ConfigError("checkpoint params not congruent with its model spec")
        self.params.flags.writeable = False

    def params_sha256(self) -> str:
        return hashlib.sha256(self.params.astype("<f8").tobytes()).hexdigest()

    def to_bytes(self) -> bytes:
        doc = {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "model_spec": {
                "layer_widths": list(self.spec.layer_widths),
                "activation": self.spec.activation,
            },
            "params_b64": base64.b64encode(self.params.astype("<f8").tobytes()).decode("ascii"),
            "strategy": self.strategy_meta,
            "seed": self.seed,
            "trace": self.trace,
            "task_name": self.task_name,
        }
        return json.dumps(doc, sort_keys=True).encode("utf-8")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        try:
            doc = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"corrupt checkpoint: {exc}") from exc
        if doc.get("format") != FORMAT:
            raise ConfigError(f"not a checkpoint container: {doc.get('format')!r}")
        if doc.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")
        try:
            spec = ModelSpec(
                tuple(doc["model_spec"]["layer_widths"]),
                doc["model_spec"].get("activation", "relu"),
            )
            raw = base64.b64decode(doc["params_b64"].encode("ascii"))
            params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            return cls(
                spec=spec,
                params=params,
                strategy_meta=doc.get("strategy", {}),
                seed=int(doc.get("seed", 0)),
                trace=doc.get("trace", {}),
                task_name=doc.get("task_name", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"corrupt checkpoint payload: {exc}") from exc
