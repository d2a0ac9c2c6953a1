"""Causal temporal-convolutional masking network with a Wiener head and a
log-variance head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..statmodel import EPS_MAG, MaskPair
from .autograd import Tensor, as_tensor, conv1d_causal, parameter, prelu

FEATURE_STD_FLOOR = 1e-5


@dataclass(frozen=True)
class NetworkConfig:
    n_freq: int = 257
    hidden_channels: int = 64
    n_blocks: int = 3
    kernel: int = 3
    dilation_base: int = 2
    causal: bool = True

    def __post_init__(self):
        for name in ("n_freq", "hidden_channels", "n_blocks", "kernel", "dilation_base"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.causal:
            raise ValueError("only causal networks are supported")

    @property
    def receptive_field(self) -> int:
        return 1 + sum((self.kernel - 1) * self.dilation_base**b for b in range(self.n_blocks))

    def to_dict(self) -> dict:
        return asdict(self)

    def parameter_shapes(self) -> list[tuple[str, tuple]]:
        f, h, k = self.n_freq, self.hidden_channels, self.kernel
        shapes = [("in.w", (h, f, 1)), ("in.b", (h,))]
        for b in range(self.n_blocks):
            shapes += [
                (f"block{b}.dconv.w", (h, h, k)),
                (f"block{b}.dconv.b", (h,)),
                (f"block{b}.prelu", (1,)),
                (f"block{b}.pconv.w", (h, h, 1)),
                (f"block{b}.pconv.b", (h,)),
            ]
        shapes += [
            ("mask.w", (f, h, 1)),
            ("mask.b", (f,)),
            ("logvar.w", (f, h, 1)),
            ("logvar.b", (f,)),
        ]
        return shapes

    def n_parameters(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.parameter_shapes())


class MaskNetwork:
    """Log-magnitude frames in, (Wiener gain, log-variance) per bin out.

    ``input 1x1 conv -> n_blocks x [dilated causal conv, PReLU, 1x1 conv, residual]
    -> two 1x1 heads``. The mask head goes through a sigmoid; the variance head
    is linear and read as ``log lambda``.
    """

    def __init__(self, config: NetworkConfig, weights: np.ndarray | None = None, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        if weights is None:
            weights = self._init_weights(seed)
        self.set_flat(weights)

    def _init_weights(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        chunks = []
        fan_in = None
        for name, shape in self.config.parameter_shapes():
            if name.endswith(".w"):
                fan_in = shape[1] * shape[2]
                bound = np.sqrt(1.0 / fan_in)
                chunks.append(rng.uniform(-bound, bound, size=shape).ravel())
            elif name.endswith("prelu"):
                chunks.append(np.full(shape, 0.25).ravel())
            elif name.startswith(("mask.", "logvar.")):
                chunks.append(np.zeros(shape).ravel())
            else:
                bound = np.sqrt(1.0 / fan_in)
                chunks.append(rng.uniform(-bound, bound, size=shape).ravel())
        return np.concatenate(chunks)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.values.ravel() for p in self.params.values()])

    def set_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        expected = self.config.n_parameters()
        if flat.shape != (expected,):
            raise ValueError(f"expected {expected} weights, got {flat.shape}")
        offset = 0
        for name, shape in self.config.parameter_shapes():
            n = int(np.prod(shape))
            self.params[name] = parameter(flat[offset : offset + n].reshape(shape).copy(), name)
            offset += n

    def flat_grad(self) -> np.ndarray:
        return np.concatenate(
            [np.zeros(p.values.size) if p.grad is None else p.grad.ravel() for p in self.params.values()]
        )

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def forward(self, features) -> MaskPair:
        """Map normalized log-magnitudes (F x T or B x F x T) to a :class:`MaskPair` of tensors."""
        x = as_tensor(features)
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        if x.shape[1] != self.config.n_freq:
            raise ValueError(f"expected {self.config.n_freq} bins, got {x.shape[1]}")
        p = self.params
        h = conv1d_causal(x, p["in.w"], p["in.b"])
        for b in range(self.config.n_blocks):
            d = self.config.dilation_base**b
            y = prelu(conv1d_causal(h, p[f"block{b}.dconv.w"], p[f"block{b}.dconv.b"], d), p[f"block{b}.prelu"])
            h = h + conv1d_causal(y, p[f"block{b}.pconv.w"], p[f"block{b}.pconv.b"])
        wiener = conv1d_causal(h, p["mask.w"], p["mask.b"]).sigmoid()
        log_var = conv1d_causal(h, p["logvar.w"], p["logvar.b"])
        if not (np.all(np.isfinite(wiener.values)) and np.all(np.isfinite(log_var.values))):
            raise FloatingPointError("non-finite activations in network forward pass")
        if squeeze:
            n_f, n_t = wiener.shape[1:]
            wiener, log_var = wiener.reshape(n_f, n_t), log_var.reshape(n_f, n_t)
        return MaskPair(wiener, log_var)

    __call__ = forward


def features(x_mag: np.ndarray) -> np.ndarray:
    """Per-utterance standardized ``log(|X| + eps)``."""
    v = np.log(np.asarray(x_mag) + EPS_MAG)
    return (v - v.mean()) / (v.std() + FEATURE_STD_FLOOR)


def forward(net: MaskNetwork, features_) -> MaskPair:
    return net.forward(features_)
