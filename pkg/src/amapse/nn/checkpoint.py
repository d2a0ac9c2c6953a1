"""Checkpoint container.

Layout::

    b"AMAPSE-CKPT 1\\n"
    <UTF-8 JSON header, sorted keys>\\n
    weights, adam m, adam v    (little-endian float64, n_weights each)
    SHA-256 of everything above (32 raw bytes)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .network import MaskNetwork, NetworkConfig
from .optim import AdamState

MAGIC = b"AMAPSE-CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    config: NetworkConfig
    weights: np.ndarray
    optimizer_state: AdamState = None
    epoch: int = 0
    rng_seed: int = 0
    best_val_loss: float = float("inf")
    lr: float = 1e-3
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = self.config.n_parameters()
        if self.weights.shape != (n,):
            raise CheckpointError(f"config needs {n} weights, got {self.weights.shape}")
        if self.optimizer_state is None:
            self.optimizer_state = AdamState.zeros(n)

    def network(self) -> MaskNetwork:
        return MaskNetwork(self.config, self.weights)

    @classmethod
    def initial(cls, config: NetworkConfig, seed: int = 0, **kw) -> "ModelCheckpoint":
        return cls(config, MaskNetwork(config, seed=seed).get_flat(), rng_seed=seed, **kw)

    @classmethod
    def constant_heads(cls, config: NetworkConfig, mask_bias: float, logvar_bias: float) -> "ModelCheckpoint":
        """Debug model emitting the same mask and log-variance in every bin.

        ``mask_bias=40`` gives a mask that is exactly 1.0 in float64 (identity).
        """
        net = MaskNetwork(config, np.zeros(config.n_parameters()))
        net.params["mask.b"].values[:] = mask_bias
        net.params["logvar.b"].values[:] = logvar_bias
        return cls(config, net.get_flat(), meta={"debug": f"mask_bias={mask_bias} logvar_bias={logvar_bias}"})

    def with_(self, **kw) -> "ModelCheckpoint":
        return replace(self, **kw)

    def to_bytes(self) -> bytes:
        header = {
            "config": self.config.to_dict(),
            "n_weights": int(self.weights.size),
            "adam_step": int(self.optimizer_state.step),
            "epoch": int(self.epoch),
            "rng_seed": int(self.rng_seed),
            "best_val_loss": float(self.best_val_loss),
            "lr": float(self.lr),
            "meta": self.meta,
        }
        body = b"".join(
            [
                MAGIC + b" %d\n" % VERSION,
                json.dumps(header, sort_keys=True).encode("utf-8") + b"\n",
                self.weights.astype("<f8").tobytes(),
                self.optimizer_state.m.astype("<f8").tobytes(),
                self.optimizer_state.v.astype("<f8").tobytes(),
            ]
        )
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelCheckpoint":
        if len(blob) < 32 or hashlib.sha256(blob[:-32]).digest() != blob[-32:]:
            raise CheckpointError("checkpoint checksum mismatch (truncated or corrupted file)")
        body = blob[:-32]
        first = body.index(b"\n")
        magic, _, version = body[:first].partition(b" ")
        if magic != MAGIC:
            raise CheckpointError("not an amapse checkpoint (bad magic)")
        if int(version) != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {int(version)}")
        second = body.index(b"\n", first + 1)
        header = json.loads(body[first + 1 : second].decode("utf-8"))
        n = header["n_weights"]
        payload = np.frombuffer(body[second + 1 :], dtype="<f8")
        if payload.size != 3 * n:
            raise CheckpointError(f"payload holds {payload.size} values, expected {3 * n}")
        payload = payload.astype(np.float64)
        return cls(
            config=NetworkConfig(**header["config"]),
            weights=payload[:n].copy(),
            optimizer_state=AdamState(payload[n : 2 * n].copy(), payload[2 * n :].copy(), header["adam_step"]),
            epoch=header["epoch"],
            rng_seed=header["rng_seed"],
            best_val_loss=header["best_val_loss"],
            lr=header["lr"],
            meta=header["meta"],
        )

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(blob)
