"""Guidance-conditioned U-Net that predicts the diffusion noise.

Inputs are the low-light grayscale image ``l`` and the noisy state ``h_t``,
stacked as two channels, plus the noise level ``gamma_t``. The encoder
halves resolution ``depth`` times with mean pooling; the guidance map of
``l`` is projected by one convolution per scale (full, 1/2, 1/4, ...) and
added to the matching encoder activations. The decoder upsamples with 2x2
transposed convolutions and concatenates the mirrored pre-pool skip.

Parameters live in an ordered ``name -> Tensor`` dict so checkpoints and
gradient checks can address them by name.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Mapping, Optional

import numpy as np

from .config import dataclass_to_config, fill_dataclass, parse_config
from .errors import ContractError, DataError, DimensionError
from .ops import conv2d, linear, pool2d, transposed_conv2d
from .spectral import DEFAULT_CUTOFF, DEFAULT_LAMBDA, fag_gray
from .tensor import Tensor, add, add_channel, concat, dropout, silu

# The sinusoidal encoder sees 1000 * gamma so its fastest frequency resolves
# the fine noise levels near gamma = 1.
GAMMA_SCALE = 1000.0


@dataclass(frozen=True)
class DenoiserConfig:
    base_channels: int = 16
    depth: int = 3
    time_embed_dim: int = 32
    image_size: int = 32
    fag_enabled: bool = True
    dropout: float = 0.1
    fag_lambda: float = DEFAULT_LAMBDA
    fag_cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self):
        if self.depth < 1:
            raise ContractError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1 or self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ContractError("base_channels >= 1 and an even time_embed_dim >= 2 are required")
        if self.image_size % (1 << self.depth):
            raise ContractError(f"image_size {self.image_size} not divisible by 2^{self.depth}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")

    def channels(self, level: int) -> int:
        return self.base_channels << level

    def to_text(self) -> str:
        return dataclass_to_config(self)

    @classmethod
    def from_text(cls, text: str) -> "DenoiserConfig":
        return fill_dataclass(cls, parse_config(text))


def sinusoidal_embed(value, dim: int) -> np.ndarray:
    """``[sin(v * w_k), cos(v * w_k)]`` with ``w_k`` geometric from 1 to 1e-4.

    ``value`` is a scalar or a length-N vector; the result is ``(dim,)`` or
    ``(N, dim)``.
    """
    if dim < 2 or dim % 2:
        raise ContractError(f"embedding dim must be even and >= 2, got {dim}")
    half = dim // 2
    k = np.arange(half, dtype=np.float64)
    omega = 10000.0 ** (-k / (half - 1)) if half > 1 else np.ones(1)
    v = np.asarray(value, dtype=np.float64)
    arg = v[..., None] * omega
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Denoiser:
    """Noise predictor ``net(l, h_t, gamma_t) -> eps_hat``.

    Parameters
    ----------
    cfg : DenoiserConfig
    params : mapping, optional
        Existing parameter arrays by name (e.g. from a checkpoint). When
        omitted, weights are drawn from ``rng`` (default seed 0).

    Set ``dropout_rng`` to a generator to enable dropout (training); leave
    it None for deterministic inference.
    """

    def __init__(self, cfg: DenoiserConfig, params: Optional[Mapping[str, np.ndarray]] = None,
                 rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.dropout_rng: Optional[np.random.Generator] = None
        shapes = self.parameter_shapes(cfg)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            for name, (shape, fan_in) in shapes.items():
                self.params[name] = Tensor(_uniform(rng, shape, fan_in), requires_grad=True, name=name)
        else:
            missing = set(shapes) - set(params)
            if missing:
                raise DataError(f"checkpoint lacks parameters: {', '.join(sorted(missing))}")
            for name, (shape, _) in shapes.items():
                arr = np.array(params[name], dtype=np.float64)
                if arr.shape != shape:
                    raise DataError(f"parameter {name}: shape {arr.shape}, expected {shape}")
                self.params[name] = Tensor(arr, requires_grad=True, name=name)

    # -- structure ---------------------------------------------------------

    @staticmethod
    def parameter_shapes(cfg: DenoiserConfig) -> "OrderedDict[str, tuple]":
        """``name -> (shape, fan_in)`` in a fixed order."""
        e = cfg.time_embed_dim
        s: "OrderedDict[str, tuple]" = OrderedDict()

        def conv(name, co, ci, k):
            s[f"{name}.w"] = ((co, ci, k, k), ci * k * k)
            s[f"{name}.b"] = ((co,), ci * k * k)

        def block(name, ci, co):
            conv(f"{name}.conv1", co, ci, 3)
            s[f"{name}.time.w"] = ((e, co), e)
            s[f"{name}.time.b"] = ((co,), e)
            conv(f"{name}.conv2", co, co, 3)
            if ci != co:
                conv(f"{name}.skip", co, ci, 1)

        s["time.fc1.w"] = ((e, e), e)
        s["time.fc1.b"] = ((e,), e)
        s["time.fc2.w"] = ((e, e), e)
        s["time.fc2.b"] = ((e,), e)
        c0 = cfg.channels(0)
        conv("inp", c0, 2, 3)
        conv("fag0", c0, 1, 3)
        prev = c0
        for k in range(cfg.depth):
            block(f"enc{k}", prev, cfg.channels(k))
            prev = cfg.channels(k)
            stride = 1 << (k + 1)
            s[f"fag{k + 1}.w"] = ((prev, 1, stride, stride), stride * stride)
            s[f"fag{k + 1}.b"] = ((prev,), stride * stride)
        block("mid", prev, prev)
        for k in reversed(range(cfg.depth)):
            ck = cfg.channels(k)
            s[f"up{k}.w"] = ((prev, ck, 2, 2), prev)
            s[f"up{k}.b"] = ((ck,), prev)
            block(f"dec{k}", 2 * ck, ck)
            prev = ck
        conv("out", 1, prev, 3)
        return s

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward -----------------------------------------------------------

    def guidance(self, l: np.ndarray) -> np.ndarray:
        """Guidance map ``(N, 1, H, W)`` of a grayscale batch ``(N, 1, H, W)``."""
        return fag_gray(l[:, 0], self.cfg.fag_lambda, self.cfg.fag_cutoff)[:, None]

    def time_embedding(self, gamma_t) -> Tensor:
        p = self.params
        s = Tensor(sinusoidal_embed(GAMMA_SCALE * np.asarray(gamma_t, dtype=np.float64), self.cfg.time_embed_dim))
        h = silu(linear(s, p["time.fc1.w"], p["time.fc1.b"]))
        return linear(h, p["time.fc2.w"], p["time.fc2.b"])

    def _conv(self, name, x, stride=1, padding=1):
        return conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], stride=stride, padding=padding)

    def _block(self, name: str, x: Tensor, temb: Tensor) -> Tensor:
        p = self.params
        h = silu(self._conv(f"{name}.conv1", x))
        h = add_channel(h, linear(silu(temb), p[f"{name}.time.w"], p[f"{name}.time.b"]))
        h = dropout(silu(h), self.cfg.dropout, self.dropout_rng)
        h = self._conv(f"{name}.conv2", h)
        short = self._conv(f"{name}.skip", x, padding=0) if f"{name}.skip.w" in p else x
        return add(h, short)

    def check_inputs(self, l: np.ndarray, ht) -> None:
        hs = ht.shape
        if len(hs) != 4 or hs[1] != 1:
            raise DimensionError(f"h_t must be (N, 1, H, W), got {hs}")
        if np.shape(l) != hs:
            raise DimensionError(f"l {np.shape(l)} and h_t {hs} differ")
        m = 1 << self.cfg.depth
        if hs[2] % m or hs[3] % m:
            raise ContractError(f"extent {hs[2]}x{hs[3]} not divisible by 2^{self.cfg.depth}")

    def forward(self, l, ht, gamma_t, guidance: Optional[np.ndarray] = None,
                trace: Optional[Dict[str, Tensor]] = None) -> Tensor:
        """Predict the noise in ``ht``.

        ``l`` is the low-light batch in [0, 1], ``ht`` the signed noisy
        state, both ``(N, 1, H, W)``; ``gamma_t`` is a scalar or ``(N,)``.
        ``guidance`` overrides the map computed from ``l``. If ``trace`` is
        given it receives the intermediate activations by name.
        """
        ht = ht if isinstance(ht, Tensor) else Tensor(ht)
        l = np.asarray(l, dtype=np.float64)
        self.check_inputs(l, ht)
        n = ht.shape[0]
        gamma_t = np.broadcast_to(np.asarray(gamma_t, dtype=np.float64).reshape(-1), (n,))
        cfg = self.cfg
        temb = self.time_embedding(gamma_t)
        rec = trace if trace is not None else {}

        x = self._conv("inp", concat([Tensor(2.0 * l - 1.0), ht], axis=1))
        g = None
        if cfg.fag_enabled:
            g = Tensor(self.guidance(l) if guidance is None else np.asarray(guidance, dtype=np.float64))
            if g.shape != ht.shape:
                raise DimensionError(f"guidance {g.shape} does not match {ht.shape}")
            x = add(x, self._conv("fag0", g))
        skips = []
        for k in range(cfg.depth):
            x = self._block(f"enc{k}", x, temb)
            rec[f"enc{k}"] = x
            skips.append(x)
            x = pool2d(x, 2, "mean")
            if g is not None:
                stride = 1 << (k + 1)
                x = add(x, self._conv(f"fag{k + 1}", g, stride=stride, padding=0))
        x = self._block("mid", x, temb)
        for k in reversed(range(cfg.depth)):
            up = transposed_conv2d(x, self.params[f"up{k}.w"], self.params[f"up{k}.b"], stride=2)
            x = concat([up, skips[k]], axis=1)
            rec[f"cat{k}"] = x
            x = self._block(f"dec{k}", x, temb)
        return self._conv("out", x)

    __call__ = forward

    # -- persistence -------------------------------------------------------

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        out: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for f in fields(self.cfg):
            out[f"meta/{f.name}"] = np.asarray(float(getattr(self.cfg, f.name)))
        for name, t in self.params.items():
            out[name] = t.data.copy()
        return out

    @classmethod
    def from_state_dict(cls, state: Mapping[str, np.ndarray]) -> "Denoiser":
        kwargs = {}
        for f in fields(DenoiserConfig):
            key = f"meta/{f.name}"
            if key not in state:
                raise DataError(f"checkpoint lacks {key}")
            v = float(state[key])
            kwargs[f.name] = bool(v) if f.type in (bool, "bool") else int(v) if f.type in (int, "int") else v
        return cls(DenoiserConfig(**kwargs), params=state)

    def with_config(self, **changes) -> "Denoiser":
        """Same weights under a modified config (e.g. guidance switched off)."""
        cfg = DenoiserConfig(**{**asdict(self.cfg), **changes})
        return Denoiser(cfg, params={k: v.data for k, v in self.params.items()})
