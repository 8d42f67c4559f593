"""Training loop, learning-rate schedule, synthetic paired scenes and evaluation.

The synthetic generator stands in for a real paired dataset: bright shaded
shapes and a gridded panel on a black background form the normal-light
image, and a gain/gamma/noise degradation of it forms the low-light image.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint
from .config import fill_dataclass, parse_config
from .denoiser import Denoiser, DenoiserConfig
from .diffusion import NoiseSchedule, cosine_schedule, loss, sample
from .errors import ContractError, DataError, NumericError
from .imaging import AUGMENT_OPS, ImagePair, augment_array
from .metrics import Scores, format_table, mean_scores, score
from .tensor import Tensor, no_grad

CURVE_COLUMNS = ("epoch", "lr", "train_loss", "val_loss")


# -- learning rate ----------------------------------------------------------

@dataclass(frozen=True)
class LrSchedule:
    warmup_steps: int
    peak_lr: float
    total_steps: int

    def __post_init__(self):
        if not 0 < self.warmup_steps < self.total_steps:
            raise ContractError(
                f"need 0 < warmup_steps < total_steps, got {self.warmup_steps}, {self.total_steps}"
            )
        if self.peak_lr <= 0:
            raise ContractError(f"peak_lr must be positive, got {self.peak_lr}")


def lr_at(step: int, sched: LrSchedule) -> float:
    """Linear warm-up from 0 to the peak, then cosine decay to 0 at ``total_steps``."""
    if step <= 0:
        return 0.0
    if step < sched.warmup_steps:
        return sched.peak_lr * step / sched.warmup_steps
    if step >= sched.total_steps:
        return 0.0
    progress = (step - sched.warmup_steps) / (sched.total_steps - sched.warmup_steps)
    return sched.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# -- optimizers -------------------------------------------------------------

class Adam:
    """Adaptive moment estimation; parameters without a gradient are skipped."""

    def __init__(self, params: Sequence[Tensor], betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params: Sequence[Tensor]):
        self.params = list(params)

    def step(self, lr: float) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= lr * p.grad


def make_optimizer(name: str, params: Sequence[Tensor]):
    if name == "adam":
        return Adam(params)
    if name == "sgd":
        return SGD(params)
    raise ContractError(f"unknown optimizer {name!r} (adam or sgd)")


# -- synthetic scenes -------------------------------------------------------

@dataclass(frozen=True)
class SynthSceneSpec:
    """Recipe for one synthetic pair.

    ``gain``, ``gamma`` and ``sigma`` define the degradation
    ``low = clip(gain * normal**gamma + sigma * z, 0, 1)``.
    """

    seed: int = 0
    shapes: int = 3
    gain: float = 0.125
    gamma: float = 1.2
    sigma: float = 0.01
    size: int = 32
    supersample: int = 4

    def __post_init__(self):
        if not 0.0 <= self.gain <= 1.0:
            raise ContractError(f"gain must lie in [0, 1], got {self.gain}")
        if self.gamma <= 0 or self.sigma < 0 or self.shapes < 0:
            raise ContractError("gamma > 0, sigma >= 0 and shapes >= 0 are required")
        if self.size < 1 or self.supersample < 1:
            raise ContractError("size and supersample must be positive")


def _lambert(xx, yy, normal, light) -> np.ndarray:
    lx, ly, lz = light[0] - xx, light[1] - yy, light[2]
    norm = np.sqrt(lx * lx + ly * ly + lz * lz)
    return np.clip((normal[0] * lx + normal[1] * ly + normal[2] * lz) / norm, 0.05, 1.0)


def _tilted_normal(rng) -> np.ndarray:
    n = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), 1.0])
    return n / np.linalg.norm(n)


def _convex_polygon_mask(xx, yy, rng, size) -> np.ndarray:
    k = int(rng.integers(3, 7))
    cx, cy = rng.uniform(0.15, 0.85, size=2) * size
    radius = rng.uniform(0.08, 0.22) * size
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=k))
    vx, vy = cx + radius * np.cos(angles), cy + radius * np.sin(angles)
    inside = np.ones(xx.shape, dtype=bool)
    for i in range(k):
        j = (i + 1) % k
        cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
        inside &= cross >= 0.0
    return inside


def render_scene(spec: SynthSceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Anti-aliased normal-light scene of shape ``(size, size)`` in [0, 1]."""
    ss, size = spec.supersample, spec.size
    grid = (np.arange(size * ss) + 0.5) / ss
    xx, yy = np.meshgrid(grid, grid)
    light = np.array([rng.uniform(0, size), rng.uniform(0, size), rng.uniform(1.0, 2.0) * size])
    img = np.zeros(xx.shape)

    # panel: rotated rectangle with a darker cell grid
    cx, cy = rng.uniform(0.3, 0.7, size=2) * size
    hw, hh = rng.uniform(0.15, 0.3, size=2) * size
    ang = rng.uniform(0.0, math.pi)
    u = (xx - cx) * math.cos(ang) + (yy - cy) * math.sin(ang)
    v = -(xx - cx) * math.sin(ang) + (yy - cy) * math.cos(ang)
    panel = (np.abs(u) <= hw) & (np.abs(v) <= hh)
    cells = 4
    gu = np.abs(((u + hw) / (2 * hw) * cells + 0.5) % 1.0 - 0.5) < 0.08
    gv = np.abs(((v + hh) / (2 * hh) * cells + 0.5) % 1.0 - 0.5) < 0.08
    albedo = np.where(gu | gv, 0.3, 0.65)
    shade = _lambert(xx, yy, _tilted_normal(rng), light)
    img = np.where(panel, albedo * shade, img)

    for _ in range(spec.shapes):
        mask = _convex_polygon_mask(xx, yy, rng, size)
        shade = _lambert(xx, yy, _tilted_normal(rng), light)
        img = np.where(mask, rng.uniform(0.6, 1.0) * shade, img)

    return img.reshape(size, ss, size, ss).mean(axis=(1, 3))


def degrade(normal: np.ndarray, spec: SynthSceneSpec, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(normal.shape) if spec.sigma > 0 else 0.0
    return np.clip(spec.gain * normal**spec.gamma + spec.sigma * noise, 0.0, 1.0)


def synth_pair(spec: SynthSceneSpec) -> ImagePair:
    rng = np.random.default_rng(spec.seed)
    normal = render_scene(spec, rng)
    return ImagePair(degrade(normal, spec, rng), normal, meta={"seed": spec.seed})


def synth_dataset(n: int, seed: int, **spec) -> List[ImagePair]:
    """``n`` pairs with per-pair seeds ``seed, seed + 1, ...``."""
    return [synth_pair(SynthSceneSpec(seed=seed + i, **spec)) for i in range(n)]


# -- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    peak_lr: float = 1e-4
    warmup_steps: int = 100
    seed: int = 0
    val_fraction: float = 0.1
    augment: bool = True
    optimizer: str = "adam"
    checkpoint_every: int = 0
    diffusion_steps: int = 2000
    schedule_offset: float = 0.008
    sample_batch: int = 20
    clip_denoised: bool = True

    def noise_schedule(self) -> NoiseSchedule:
        return cosine_schedule(self.diffusion_steps, self.schedule_offset)


def load_run_config(text: str) -> Tuple[DenoiserConfig, TrainConfig]:
    """Split one key-value file into network and training settings."""
    return split_run_config(parse_config(text))


def split_run_config(values: Mapping[str, str]) -> Tuple[DenoiserConfig, TrainConfig]:
    net_keys = {f.name for f in fields(DenoiserConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(values) - net_keys - train_keys
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")
    net = fill_dataclass(DenoiserConfig, {k: v for k, v in values.items() if k in net_keys})
    run = fill_dataclass(TrainConfig, {k: v for k, v in values.items() if k in train_keys})
    return net, run


@dataclass
class CurveRow:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    curve: List[CurveRow]
    steps: int
    lr_trace: List[float] = field(default_factory=list)


def stack_pairs(pairs: Sequence[ImagePair]) -> Tuple[np.ndarray, np.ndarray]:
    """``(N, 1, H, W)`` low and high arrays."""
    if not pairs:
        raise ContractError("no image pairs")
    low = np.stack([np.asarray(p.low, dtype=np.float64) for p in pairs])[:, None]
    high = np.stack([np.asarray(p.high, dtype=np.float64) for p in pairs])[:, None]
    return low, high


def split_validation(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded split into sorted (train, validation) index arrays."""
    if not 0.0 <= fraction < 1.0:
        raise ContractError(f"val_fraction must be in [0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _augment_batch(low, high, rng) -> Tuple[np.ndarray, np.ndarray]:
    ops = AUGMENT_OPS if low.shape[2] == low.shape[3] else ("identity", "flip_h", "flip_v", "rot180")
    picks = rng.integers(len(ops), size=low.shape[0])
    lo = np.stack([augment_array(low[i, 0], ops[k]) for i, k in enumerate(picks)])[:, None]
    hi = np.stack([augment_array(high[i, 0], ops[k]) for i, k in enumerate(picks)])[:, None]
    return lo, hi


def _diagnostics(net: Denoiser, lr: float, value: float) -> Dict[str, object]:
    state: Dict[str, object] = {"lr": lr, "loss": value}
    for name, p in net.params.items():
        state[f"param_norm/{name}"] = float(np.linalg.norm(p.data))
        if p.grad is not None:
            state[f"grad_norm/{name}"] = float(np.linalg.norm(p.grad))
    return state


def train_step(net: Denoiser, opt, low, high, noise: NoiseSchedule, rng: np.random.Generator, lr: float) -> float:
    """One loss evaluation, backward pass and optimizer update; returns the loss."""
    for p in net.parameters():
        p.grad = None
    value = loss(net, low, high, noise, rng)
    if not value.is_finite():
        raise NumericError(f"non-finite loss (lr {lr:g})", _diagnostics(net, lr, value.item()))
    value.backward()
    opt.step(lr)
    return value.item()


def validation_loss(net: Denoiser, low, high, t, eps, noise: NoiseSchedule, batch: int) -> float:
    if low.shape[0] == 0:
        return float("nan")
    total = 0.0
    with no_grad():
        for s in range(0, low.shape[0], batch):
            sl = slice(s, s + batch)
            value = loss(net, low[sl], high[sl], noise, None, t=t[sl], eps=eps[sl]).item()
            total += value * low[sl].shape[0]
    return total / low.shape[0]


def train(
    net: Denoiser,
    tcfg: TrainConfig,
    pairs: Sequence[ImagePair],
    noise: Optional[NoiseSchedule] = None,
    log: Optional[Callable[[CurveRow], None]] = None,
    checkpoint_prefix: Optional[str] = None,
) -> TrainResult:
    """Optimise ``net`` in place on ``pairs`` and return the loss curve.

    Randomness (batch order, augmentation, diffusion step and noise,
    dropout, validation draws) comes from independent streams spawned from
    ``tcfg.seed``, so a (seed, config, data) triple fixes every bit.
    """
    noise = noise if noise is not None else tcfg.noise_schedule()
    low, high = stack_pairs(pairs)
    train_idx, val_idx = split_validation(len(pairs), tcfg.val_fraction, tcfg.seed)
    if train_idx.size == 0:
        raise ContractError("validation split leaves no training pairs")
    data_rng, noise_rng, drop_rng, val_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(tcfg.seed).spawn(4)
    )
    val_t = val_rng.integers(1, noise.T + 1, size=val_idx.size)
    val_eps = val_rng.standard_normal((val_idx.size,) + low.shape[1:])

    per_epoch = math.ceil(train_idx.size / tcfg.batch_size)
    lr_sched = LrSchedule(tcfg.warmup_steps, tcfg.peak_lr, tcfg.epochs * per_epoch)
    opt = make_optimizer(tcfg.optimizer, net.parameters())
    result = TrainResult([], 0)
    step = 0
    net.dropout_rng = drop_rng
    try:
        for epoch in range(1, tcfg.epochs + 1):
            order = data_rng.permutation(train_idx)
            losses = []
            lr = 0.0
            for b in range(per_epoch):
                idx = order[b * tcfg.batch_size : (b + 1) * tcfg.batch_size]
                lo, hi = low[idx], high[idx]
                if tcfg.augment:
                    lo, hi = _augment_batch(lo, hi, data_rng)
                lr = lr_at(step, lr_sched)
                try:
                    losses.append(train_step(net, opt, lo, hi, noise, noise_rng, lr))
                except NumericError as exc:
                    exc.state.update(epoch=epoch, step=step)
                    raise NumericError(f"{exc} at epoch {epoch}, step {step}", exc.state) from None
                result.lr_trace.append(lr)
                step += 1
            net.dropout_rng = None
            val = validation_loss(net, low[val_idx], high[val_idx], val_t, val_eps, noise, tcfg.sample_batch)
            net.dropout_rng = drop_rng
            row = CurveRow(epoch, lr, float(np.mean(losses)), val)
            result.curve.append(row)
            if log is not None:
                log(row)
            if checkpoint_prefix and tcfg.checkpoint_every and epoch % tcfg.checkpoint_every == 0:
                checkpoint.save(f"{checkpoint_prefix}.epoch{epoch:03d}", net.state_dict())
    finally:
        net.dropout_rng = None
    result.steps = step
    return result


def write_curve(path, rows: Sequence[CurveRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in rows:
            w.writerow([r.epoch, repr(r.lr), repr(r.train_loss), repr(r.val_loss)])


def read_curve(path) -> List[CurveRow]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CurveRow(int(r["epoch"]), float(r["lr"]), float(r["train_loss"]), float(r["val_loss"])) for r in rows]


# -- evaluation -------------------------------------------------------------

@dataclass
class Evaluation:
    enhanced: np.ndarray
    scores: List[Scores]
    input_scores: List[Scores]

    @property
    def mean(self) -> Scores:
        return mean_scores(self.scores)

    @property
    def input_mean(self) -> Scores:
        return mean_scores(self.input_scores)


def enhance(net: Denoiser, low: np.ndarray, noise: NoiseSchedule, seed: int, batch: int = 20,
            clip_denoised: bool = True) -> np.ndarray:
    """Sample enhanced images for a ``(N, H, W)`` low-light stack."""
    low = np.asarray(low, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = []
    for s in range(0, low.shape[0], batch):
        out.append(sample(low[s : s + batch, None], noise, net, rng, clip_denoised=clip_denoised)[:, 0])
    return np.concatenate(out)


def evaluate(net: Denoiser, pairs: Sequence[ImagePair], noise: NoiseSchedule, seed: int = 0,
             batch: int = 20, clip_denoised: bool = True) -> Evaluation:
    """Enhance every low-light image and score it against its ground truth."""
    low, high = stack_pairs(pairs)
    out = enhance(net, low[:, 0], noise, seed, batch, clip_denoised)
    return Evaluation(out, score_pairs(out, high[:, 0]), score_pairs(low[:, 0], high[:, 0]))


def score_pairs(images: np.ndarray, truths: np.ndarray) -> List[Scores]:
    if len(images) != len(truths):
        raise ContractError(f"{len(images)} images but {len(truths)} references")
    return [score(a, b) for a, b in zip(images, truths)]


def guidance_table(without: Evaluation, with_: Evaluation) -> str:
    """Mean metrics with and without the guidance map, plus the raw input row."""
    return format_table(
        [
            ("low-light input", with_.input_mean),
            ("without guidance", without.mean),
            ("with guidance", with_.mean),
        ]
    )


def load_denoiser(path) -> Denoiser:
    return Denoiser.from_state_dict(checkpoint.load(path))


def save_denoiser(path, net: Denoiser) -> None:
    checkpoint.save(path, net.state_dict())
