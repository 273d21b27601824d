"""Hire module: height branch + width branch + channel FC, summed.

Each spatial branch runs
    cross_rearrange -> partition_pad -> inner_rearrange -> bottleneck MLP
    -> inner_restore -> crop -> cross_restore
so its output shape always equals its input shape, divisible extent or
not. The channel branch is a single FC. Component toggles reproduce the
structural ablations (no cross restore, no cross at all, no inner, no
channel branch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .rearrange import (
    AXIS_INDEX,
    RegionSpec,
    ShiftSpec,
    cross_rearrange,
    cross_restore,
    crop_pad,
    inner_rearrange,
    inner_restore,
    partition_pad,
)


@dataclass
class BottleneckMlpParams:
    """FC stack applied to rearranged regions; in/out dims must both equal region_size*C."""

    layers: list[T.LinearParams]
    norm: T.NormParams | None = None  # applied after the first projection
    activation: str = "gelu"  # after every non-final projection

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("BottleneckMlpParams: needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigError(
                    f"BottleneckMlpParams: chained dims mismatch "
                    f"({a.out_dim} -> {b.in_dim})"
                )
        if self.layers[0].in_dim != self.layers[-1].out_dim:
            raise ConfigError(
                "BottleneckMlpParams: first in_dim must equal last out_dim "
                f"({self.layers[0].in_dim} vs {self.layers[-1].out_dim})"
            )
        if self.norm is not None and len(self.layers) > 1:
            if self.norm.channels != self.layers[0].out_dim:
                raise ConfigError(
                    f"BottleneckMlpParams: norm channels {self.norm.channels} "
                    f"do not match first hidden dim {self.layers[0].out_dim}"
                )

    @property
    def width(self) -> int:
        return self.layers[0].in_dim


def bottleneck_mlp(v: T.ArrayLike, p: BottleneckMlpParams) -> T.ArrayLike:
    """linear -> [norm] -> act -> ... -> linear on the last axis."""
    n = len(p.layers)
    out = v
    for i, layer in enumerate(p.layers):
        out = T.apply_linear(out, layer)
        if i < n - 1:
            if i == 0 and p.norm is not None:
                out = T.apply_norm(out, p.norm)
            out = T.activation(out, p.activation)
    return out


@dataclass
class HireBranchConfig:
    """One spatial branch: region partition, optional cross-shift, bottleneck MLP."""

    region: RegionSpec
    mlp: BottleneckMlpParams
    shift: ShiftSpec | None = None  # absent on unshifted blocks
    use_inner: bool = True  # False: skip inner rearrange/restore (mlp acts per token)
    use_cross_restore: bool = True  # False: leave tokens shifted (ablation)

    @property
    def axis(self) -> str:
        return self.region.axis


def _effective_shift(shift: ShiftSpec, extent: int) -> ShiftSpec:
    # a full cycle is the identity; reduce so any extent >= 1 is valid
    if shift.manner == "shifted" and shift.step >= extent:
        return ShiftSpec(shift.step % extent, shift.manner)
    return shift


def hire_branch(x: T.ArrayLike, cfg: HireBranchConfig) -> T.ArrayLike:
    """Apply one spatial branch; output shape equals input shape exactly."""
    ax = AXIS_INDEX[cfg.axis]
    extent = T._value(x).shape[ax]
    shift = None
    if cfg.shift is not None:
        shift = _effective_shift(cfg.shift, extent)
        x = cross_rearrange(x, cfg.axis, shift, cfg.region.region_size)
    if cfg.use_inner:
        x, rec = partition_pad(x, cfg.region)
        y = inner_rearrange(x, cfg.region)
        y = bottleneck_mlp(y, cfg.mlp)
        y = inner_restore(y, cfg.region)
        y = crop_pad(y, rec)
    else:
        y = bottleneck_mlp(x, cfg.mlp)
    if shift is not None and cfg.use_cross_restore:
        y = cross_restore(y, cfg.axis, shift, cfg.region.region_size)
    return y


@dataclass
class HireModuleParams:
    """Three branches; disabled ones (None) contribute zero to the sum."""

    height: HireBranchConfig | None
    width: HireBranchConfig | None
    channel: T.LinearParams | None

    def __post_init__(self):
        if self.height is not None and self.height.axis != "height":
            raise ConfigError("HireModuleParams: height branch must act on the height axis")
        if self.width is not None and self.width.axis != "width":
            raise ConfigError("HireModuleParams: width branch must act on the width axis")
        if self.channel is not None and self.channel.in_dim != self.channel.out_dim:
            raise ConfigError(
                f"HireModuleParams: channel FC must be square, got "
                f"{self.channel.in_dim}x{self.channel.out_dim}"
            )


def hire_module(x: T.ArrayLike, p: HireModuleParams) -> T.ArrayLike:
    """Sum of enabled branch outputs (width, height, then channel)."""
    parts = []
    if p.width is not None:
        parts.append(hire_branch(x, p.width))
    if p.height is not None:
        parts.append(hire_branch(x, p.height))
    if p.channel is not None:
        parts.append(T.apply_linear(x, p.channel))
    if not parts:
        return np.zeros_like(T._value(x))
    out = parts[0]
    for part in parts[1:]:
        out = T.add(out, part)
    return out


def bottleneck_widths(region_size: int, channels: int, n_layers: int) -> list[int]:
    """Hidden widths of the n-layer bottleneck variants.

    1 layer: direct region_size*C -> region_size*C. 2 layers: one C/2
    bottleneck. Deeper stacks keep the C/2 entry and continue at 3C/8,
    which lands the 3/4-layer budgets on the published totals and keeps
    the 2-layer variant strictly larger than the 3-layer one.
    """
    if n_layers < 1:
        raise ConfigError(f"bottleneck_widths: need >= 1 layer, got {n_layers}")
    if n_layers == 1:
        return []
    widths = [max(1, channels // 2)]
    widths += [max(1, (3 * channels) // 8)] * (n_layers - 2)
    return widths
