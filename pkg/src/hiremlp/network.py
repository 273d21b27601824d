"""Full network assembly: blocks, patch embeddings, four-stage pyramid.

A block is two residual sub-units,
    Y = HireModule(BN(X)) + X
    Z = ChannelMLP(BN(Y)) + Y,
stacked inside four stages whose resolution drops from H/4 to H/32 while
channels grow. Patch embeddings are overlapping-window unfolds followed
by a linear projection, padded in the stage's padding mode so any input
of at least 32x32 pixels flows through (remainders are absorbed by
ceil-division). The classifier head is global average pooling plus one
linear layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .errors import ConfigError, InvalidInputError, ShapeError
from .hire import (
    BottleneckMlpParams,
    HireBranchConfig,
    HireModuleParams,
    bottleneck_widths,
    hire_module,
)
from .rearrange import PADDING_MODES, RegionSpec, ShiftSpec

MIN_INPUT = 32


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageConfig:
    depth: int
    channels: int
    h: int  # region size along height
    w: int  # region size along width
    s: int  # cross-region step
    padding: str = "circular"
    manner: str = "shifted"


@dataclass(frozen=True)
class PatchEmbedSpec:
    kernel: int
    stride: int


@dataclass(frozen=True)
class ModelConfig:
    stages: tuple[StageConfig, ...]
    patch_embed: tuple[PatchEmbedSpec, ...]
    expansion_ratio: tuple[int, ...]  # channel-MLP expansion per stage
    num_classes: int = 1000
    bottleneck_fcs: int = 2  # FC count in the spatial-branch bottleneck
    shift_phase: int = 1  # blocks with index % 2 == shift_phase carry the shift
    meta: dict = field(default_factory=dict, compare=False)

    def validate(self) -> None:
        problems = []
        if len(self.stages) != 4:
            problems.append(f"expected 4 stages, got {len(self.stages)}")
        if len(self.patch_embed) != len(self.stages):
            problems.append(
                f"patch_embed count {len(self.patch_embed)} != stage count {len(self.stages)}"
            )
        if len(self.expansion_ratio) != len(self.stages):
            problems.append(
                f"expansion_ratio count {len(self.expansion_ratio)} != stage count"
            )
        prev_c = 0
        for i, st in enumerate(self.stages):
            if st.depth < 1:
                problems.append(f"stage {i}: depth must be >= 1")
            if st.channels < prev_c:
                problems.append(f"stage {i}: channels must be nondecreasing")
            prev_c = st.channels
            if st.h < 1 or st.w < 1:
                problems.append(f"stage {i}: region sizes must be >= 1")
            if st.s < 0:
                problems.append(f"stage {i}: step must be >= 0")
            if st.padding not in PADDING_MODES:
                problems.append(f"stage {i}: unknown padding '{st.padding}'")
            if st.manner not in ("shifted", "shuffle"):
                problems.append(f"stage {i}: unknown manner '{st.manner}'")
        for i, pe in enumerate(self.patch_embed):
            if pe.stride < 1:
                problems.append(f"patch_embed {i}: stride must be >= 1")
            if pe.kernel < pe.stride:
                problems.append(f"patch_embed {i}: kernel must be >= stride (overlapping)")
        if self.num_classes < 1:
            problems.append("num_classes must be >= 1")
        if self.bottleneck_fcs < 1:
            problems.append("bottleneck_fcs must be >= 1")
        if self.shift_phase not in (0, 1):
            problems.append("shift_phase must be 0 or 1")
        if problems:
            raise ConfigError("invalid model config: " + "; ".join(problems))

    def total_stride(self) -> int:
        return math.prod(pe.stride for pe in self.patch_embed)


def config_to_dict(cfg: ModelConfig) -> dict:
    d = {
        "stages": [
            {
                "depth": st.depth,
                "channels": st.channels,
                "h": st.h,
                "w": st.w,
                "s": st.s,
                "padding": st.padding,
                **({"manner": st.manner} if st.manner != "shifted" else {}),
            }
            for st in cfg.stages
        ],
        "expansion_ratio": list(cfg.expansion_ratio),
        "num_classes": cfg.num_classes,
        "patch_embed": [{"kernel": pe.kernel, "stride": pe.stride} for pe in cfg.patch_embed],
    }
    if cfg.bottleneck_fcs != 2:
        d["bottleneck_fcs"] = cfg.bottleneck_fcs
    if cfg.shift_phase != 1:
        d["shift_phase"] = cfg.shift_phase
    if cfg.meta:
        d["meta"] = cfg.meta
    return d


def config_from_dict(d: dict) -> ModelConfig:
    try:
        stages = tuple(
            StageConfig(
                depth=int(s["depth"]),
                channels=int(s["channels"]),
                h=int(s["h"]),
                w=int(s["w"]),
                s=int(s["s"]),
                padding=s.get("padding", "circular"),
                manner=s.get("manner", "shifted"),
            )
            for s in d["stages"]
        )
        ratio = d["expansion_ratio"]
        if isinstance(ratio, (int, float)):
            ratio = [ratio] * len(stages)
        embeds = tuple(
            PatchEmbedSpec(kernel=int(p["kernel"]), stride=int(p["stride"]))
            for p in d["patch_embed"]
        )
        cfg = ModelConfig(
            stages=stages,
            patch_embed=embeds,
            expansion_ratio=tuple(int(r) for r in ratio),
            num_classes=int(d.get("num_classes", 1000)),
            bottleneck_fcs=int(d.get("bottleneck_fcs", 2)),
            shift_phase=int(d.get("shift_phase", 1)),
            meta=dict(d.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed model config: {e}") from None
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ModelConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: not valid JSON: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: expected a JSON object at top level")
    return config_from_dict(data)


def save_config(cfg: ModelConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass
class ChannelMlpParams:
    """Per-token two-layer MLP with expansion (C -> r*C -> C)."""

    fc1: T.LinearParams
    fc2: T.LinearParams
    activation: str = "gelu"

    def __post_init__(self):
        if self.fc1.out_dim != self.fc2.in_dim or self.fc1.in_dim != self.fc2.out_dim:
            raise ConfigError(
                f"ChannelMlpParams: dims do not chain C->rC->C "
                f"({self.fc1.in_dim}->{self.fc1.out_dim}->{self.fc2.out_dim})"
            )


@dataclass
class BlockParams:
    norm1: T.NormParams
    hire: HireModuleParams
    norm2: T.NormParams
    channel_mlp: ChannelMlpParams


@dataclass
class PatchEmbedParams:
    spec: PatchEmbedSpec
    padding: str
    proj: T.LinearParams  # [k*k*C_in, C_out]


@dataclass
class StageParams:
    embed: PatchEmbedParams
    blocks: list[BlockParams]


@dataclass
class Model:
    config: ModelConfig
    stages: list[StageParams]
    head: T.LinearParams


# ---------------------------------------------------------------------------
# Forward ops
# ---------------------------------------------------------------------------


def channel_mlp(x: T.ArrayLike, p: ChannelMlpParams) -> T.ArrayLike:
    y = T.apply_linear(x, p.fc1)
    y = T.activation(y, p.activation)
    return T.apply_linear(y, p.fc2)


def hire_block(x: T.ArrayLike, p: BlockParams, drop_path: Callable | None = None) -> T.ArrayLike:
    """Two-residual block; drop_path is an inert training hook (identity)."""
    dp = drop_path if drop_path is not None else (lambda v: v)
    y = T.add(dp(hire_module(T.apply_norm(x, p.norm1), p.hire)), x)
    z = T.add(dp(channel_mlp(T.apply_norm(y, p.norm2), p.channel_mlp)), y)
    return z


def _window_index(extent: int, out: int, kernel: int, stride: int) -> np.ndarray:
    # window o covers padded positions [o*stride, o*stride + kernel)
    return (np.arange(out)[:, None] * stride + np.arange(kernel)[None, :]).ravel()


def _pad_for_windows(x: T.ArrayLike, axis: int, need: int, mode: str) -> T.ArrayLike:
    xv = T._value(x)
    extent = xv.shape[axis]
    pad = need - extent
    if pad <= 0:
        return x
    before = pad // 2
    after = pad - before
    if mode == "zero":
        return T.pad_zero(x, axis, before, after)
    if mode == "reflect" and extent == 1:
        raise InvalidInputError("patch_embed: reflect padding undefined for extent 1")
    np_mode = {"circular": "wrap", "reflect": "reflect", "replicate": "edge"}[mode]
    idx = np.pad(np.arange(extent), (before, after), mode=np_mode)
    return T.take(x, idx, axis)


def patch_embed(x: T.ArrayLike, p: PatchEmbedParams) -> T.ArrayLike:
    """Overlapping-window unfold + linear projection.

    Output spatial extents are ceil(extent / stride); windows that overrun
    the input read padded tokens (stage padding mode).
    """
    xv = T._value(x)
    if xv.ndim != 4:
        raise ShapeError(f"patch_embed: expected NHWC input, got {xv.shape}")
    n, h, w, c = xv.shape
    if h < 1 or w < 1:
        raise InvalidInputError("patch_embed: input has no tokens")
    k, st = p.spec.kernel, p.spec.stride
    oh = -(-h // st)
    ow = -(-w // st)
    x = _pad_for_windows(x, 1, (oh - 1) * st + k, p.padding)
    x = _pad_for_windows(x, 2, (ow - 1) * st + k, p.padding)
    x = T.take(x, _window_index(T._value(x).shape[1], oh, k, st), 1)
    x = T.reshape(x, (n, oh, k, T._value(x).shape[2], c))
    x = T.take(x, _window_index(T._value(x).shape[3], ow, k, st), 3)
    x = T.reshape(x, (n, oh, k, ow, k, c))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    x = T.reshape(x, (n, oh, ow, k * k * c))
    return T.apply_linear(x, p.proj)


def stage_forward(x: T.ArrayLike, stage: StageParams) -> T.ArrayLike:
    x = patch_embed(x, stage.embed)
    for block in stage.blocks:
        x = hire_block(x, block)
    return x


def forward_features(model: Model, image: T.ArrayLike) -> list[T.ArrayLike]:
    """Run all stages; returns each stage's output feature map."""
    xv = T._value(image)
    if xv.ndim != 4 or xv.shape[-1] != model.stages[0].embed.proj.in_dim // (
        model.config.patch_embed[0].kernel ** 2
    ):
        raise ShapeError(
            f"forward: expected NHWC input with "
            f"{model.stages[0].embed.proj.in_dim // model.config.patch_embed[0].kernel ** 2} "
            f"channels, got {xv.shape}"
        )
    if xv.shape[1] < MIN_INPUT or xv.shape[2] < MIN_INPUT:
        raise InvalidInputError(
            f"forward: input {xv.shape[1]}x{xv.shape[2]} is smaller than "
            f"{MIN_INPUT}x{MIN_INPUT}"
        )
    feats = []
    x = image
    for stage in model.stages:
        x = stage_forward(x, stage)
        feats.append(x)
    return feats


def forward(model: Model, image: T.ArrayLike) -> T.ArrayLike:
    """Image [N, H, W, 3] -> logits [N, num_classes]."""
    feats = forward_features(model, image)
    pooled = T.mean_axes(feats[-1], (1, 2))
    return T.apply_linear(pooled, model.head)


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32):
    """Normal(0, std) resampled to +/- 2 std."""
    out = rng.standard_normal(shape) * std
    bound = 2.0 * std
    mask = np.abs(out) > bound
    while mask.any():
        out[mask] = rng.standard_normal(int(mask.sum())) * std
        mask = np.abs(out) > bound
    return out.astype(dtype)


def _init_linear(rng, in_dim: int, out_dim: int, dtype=np.float32) -> T.LinearParams:
    return T.LinearParams(
        weight=trunc_normal(rng, (in_dim, out_dim), dtype=dtype),
        bias=np.zeros(out_dim, dtype=dtype),
    )


def _build_bottleneck(rng, region_size: int, channels: int, n_layers: int, dtype) -> BottleneckMlpParams:
    dims = [region_size * channels] + bottleneck_widths(region_size, channels, n_layers) + [
        region_size * channels
    ]
    layers = [_init_linear(rng, a, b, dtype) for a, b in zip(dims, dims[1:])]
    norm = None
    if n_layers >= 2:
        norm = T.identity_norm(dims[1], dtype=dtype)
    return BottleneckMlpParams(layers=layers, norm=norm)


def _build_block(rng, st: StageConfig, ratio: int, n_fcs: int, shifted: bool, dtype) -> BlockParams:
    c = st.channels
    shift_h = ShiftSpec(st.s, st.manner) if shifted else None
    shift_w = ShiftSpec(st.s, st.manner) if shifted else None
    hire = HireModuleParams(
        height=HireBranchConfig(
            region=RegionSpec("height", st.h, st.padding),
            mlp=_build_bottleneck(rng, st.h, c, n_fcs, dtype),
            shift=shift_h,
        ),
        width=HireBranchConfig(
            region=RegionSpec("width", st.w, st.padding),
            mlp=_build_bottleneck(rng, st.w, c, n_fcs, dtype),
            shift=shift_w,
        ),
        channel=_init_linear(rng, c, c, dtype),
    )
    return BlockParams(
        norm1=T.identity_norm(c, dtype=dtype),
        hire=hire,
        norm2=T.identity_norm(c, dtype=dtype),
        channel_mlp=ChannelMlpParams(
            fc1=_init_linear(rng, c, ratio * c, dtype),
            fc2=_init_linear(rng, ratio * c, c, dtype),
        ),
    )


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Instantiate a model with reproducible seeded initialization."""
    config.validate()
    rng = np.random.default_rng(seed)
    stages = []
    in_c = 3
    for i, st in enumerate(config.stages):
        pe = config.patch_embed[i]
        embed = PatchEmbedParams(
            spec=pe,
            padding=st.padding,
            proj=_init_linear(rng, pe.kernel * pe.kernel * in_c, st.channels, dtype),
        )
        blocks = []
        for b in range(st.depth):
            # parity blocks carry the cross-shift even at s=0 (identity), so the
            # s=0 and cross-disabled configurations stay structurally distinct
            shifted = b % 2 == config.shift_phase
            blocks.append(
                _build_block(rng, st, config.expansion_ratio[i], config.bottleneck_fcs, shifted, dtype)
            )
        stages.append(StageParams(embed=embed, blocks=blocks))
        in_c = st.channels
    head = _init_linear(rng, in_c, config.num_classes, dtype)
    return Model(config=config, stages=stages, head=head)


def model_tensors(model: Model) -> dict[str, np.ndarray]:
    """Flat name -> array view of every parameter and buffer."""
    out = {}
    for i, stage in enumerate(model.stages):
        for name, arr in T.iter_arrays(stage, prefix=f"stages.{i}"):
            out[name] = arr
    for name, arr in T.iter_arrays(model.head, prefix="head"):
        out[name] = arr
    return out


def load_model_weights(model: Model, tensors: dict[str, np.ndarray]) -> None:
    """Fill a built model's arrays in place from a name -> array mapping."""
    own = model_tensors(model)
    missing = sorted(set(own) - set(tensors))
    extra = sorted(set(tensors) - set(own))
    if missing or extra:
        raise ConfigError(
            f"weight mismatch: missing {missing[:3]}{'...' if len(missing) > 3 else ''}, "
            f"unexpected {extra[:3]}{'...' if len(extra) > 3 else ''}"
        )
    for name, arr in own.items():
        src = tensors[name]
        if src.shape != arr.shape:
            raise ShapeError(f"weight '{name}': file {src.shape} vs model {arr.shape}")
        arr[...] = src.astype(arr.dtype)


def model_checksum(model: Model) -> str:
    import hashlib

    tensors = model_tensors(model)
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode())
        h.update(np.ascontiguousarray(tensors[name]).tobytes())
    return h.hexdigest()


def cast_model(model: Model, dtype) -> Model:
    """Copy of the model with all arrays in the given dtype."""
    return Model(
        config=model.config,
        stages=T.cast_tree(model.stages, dtype),
        head=T.cast_tree(model.head, dtype),
    )


def _walk_replace(obj, match, fn):
    import dataclasses as dc

    if match(obj):
        return fn(obj)
    if dc.is_dataclass(obj) and not isinstance(obj, type):
        return obj.__class__(**{f.name: _walk_replace(getattr(obj, f.name), match, fn) for f in dc.fields(obj)})
    if isinstance(obj, list):
        return [_walk_replace(v, match, fn) for v in obj]
    if isinstance(obj, tuple):
        return tuple(_walk_replace(v, match, fn) for v in obj)
    return obj


def set_norm_mode(model: Model, mode: str) -> Model:
    """Copy of the model with every NormParams switched to `mode`."""
    import dataclasses as dc

    stages = _walk_replace(
        model.stages, lambda o: isinstance(o, T.NormParams), lambda o: dc.replace(o, mode=mode)
    )
    return Model(config=model.config, stages=stages, head=model.head)


def map_branches(model: Model, fn) -> Model:
    """Copy of the model with fn applied to every HireBranchConfig."""
    stages = _walk_replace(model.stages, lambda o: isinstance(o, HireBranchConfig), fn)
    return Model(config=model.config, stages=stages, head=model.head)


def disable_cross(model: Model) -> Model:
    """Structural ablation: drop cross-region rearrange and restore entirely."""
    import dataclasses as dc

    return map_branches(model, lambda b: dc.replace(b, shift=None))


def disable_cross_restore(model: Model) -> Model:
    """Structural ablation: shift tokens but never restore their positions."""
    import dataclasses as dc

    return map_branches(model, lambda b: dc.replace(b, use_cross_restore=False))
