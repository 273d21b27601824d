"""Token rearrangement as pure, invertible index transforms.

Two levels operate on NHWC feature maps along a chosen spatial axis:

* inner-region: split the axis into contiguous regions of `region_size`
  tokens and concatenate each region's tokens along the channel axis
  (one FC can then mix them); `inner_restore` is the exact inverse.
* cross-region: move every token by a circular step (`shifted` manner,
  order-preserving) or transpose the (regions x offset) factorization of
  the axis (`shuffle` manner); the restore applies the exact inverse.

`partition_pad` extends the axis to the next multiple of the region size
so inner-region rearrangement always sees a divisible extent; `crop_pad`
undoes it. Everything is an explicit index-mapped copy, never a view,
and records on a tape when handed Vars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, InvalidInputError, ShapeError

AXIS_INDEX = {"height": 1, "width": 2}
PADDING_MODES = ("zero", "circular", "reflect", "replicate")
_NP_PAD_MODE = {"circular": "wrap", "reflect": "reflect", "replicate": "edge"}


@dataclass(frozen=True)
class RegionSpec:
    """Region partition along one spatial axis."""

    axis: str  # "height" | "width"
    region_size: int
    padding_mode: str = "circular"

    def __post_init__(self):
        if self.axis not in AXIS_INDEX:
            raise ConfigError(f"RegionSpec: axis must be height|width, got '{self.axis}'")
        if self.region_size < 1:
            raise ConfigError(f"RegionSpec: region_size must be >= 1, got {self.region_size}")
        if self.padding_mode not in PADDING_MODES:
            raise ConfigError(f"RegionSpec: unknown padding mode '{self.padding_mode}'")


@dataclass(frozen=True)
class ShiftSpec:
    """Cross-region communication: circular step, or group-transpose shuffle."""

    step: int
    manner: str = "shifted"  # "shifted" | "shuffle"

    def __post_init__(self):
        if self.step < 0:
            raise ConfigError(f"ShiftSpec: step must be nonnegative, got {self.step}")
        if self.manner not in ("shifted", "shuffle"):
            raise ConfigError(f"ShiftSpec: unknown manner '{self.manner}'")


@dataclass(frozen=True)
class PadRecord:
    original: int
    padded: int
    axis: str

    def __post_init__(self):
        if self.padded < self.original:
            raise ConfigError("PadRecord: padded extent smaller than original")


def padded_extent(extent: int, region_size: int) -> int:
    """Least multiple of region_size that is >= extent."""
    return -(-extent // region_size) * region_size


def partition_pad(x: T.ArrayLike, spec: RegionSpec) -> tuple[T.ArrayLike, PadRecord]:
    """Pad x along spec.axis up to a multiple of the region size.

    New tokens are filled per padding_mode: circular wraps from the opposite
    edge, reflect mirrors without repeating the edge, replicate repeats the
    edge, zero fills zeros.
    """
    xv = T._value(x)
    if xv.size == 0:
        raise InvalidInputError("partition_pad: empty input")
    axis = AXIS_INDEX[spec.axis]
    extent = xv.shape[axis]
    target = padded_extent(extent, spec.region_size)
    pad = target - extent
    rec = PadRecord(extent, target, spec.axis)
    if pad == 0:
        # copy keeps the no-mutation contract uniform across branches
        return T.take(x, np.arange(extent), axis), rec
    if spec.padding_mode == "zero":
        return T.pad_zero(x, axis, 0, pad), rec
    if spec.padding_mode == "reflect" and extent == 1:
        raise InvalidInputError("partition_pad: reflect padding undefined for extent 1")
    idx = np.pad(np.arange(extent), (0, pad), mode=_NP_PAD_MODE[spec.padding_mode])
    return T.take(x, idx, axis), rec


def crop_pad(x: T.ArrayLike, rec: PadRecord) -> T.ArrayLike:
    """Crop a padded axis back to its original extent."""
    axis = AXIS_INDEX[rec.axis]
    xv = T._value(x)
    if xv.shape[axis] != rec.padded:
        raise ShapeError(
            f"crop_pad: extent {xv.shape[axis]} does not match PadRecord padded {rec.padded}"
        )
    return T.crop(x, axis, 0, rec.original)


def inner_rearrange(x: T.ArrayLike, spec: RegionSpec) -> T.ArrayLike:
    """Concatenate each region's tokens along the channel axis.

    Height axis: [N, H, W, C] -> [N, H/h, W, h*C] with
    out[n, r, w, j*C + c] = x[n, r*h + j, w, c]. Width axis is symmetric.
    """
    xv = T._value(x)
    if xv.ndim != 4:
        raise ShapeError(f"inner_rearrange: expected rank-4 input, got {xv.shape}")
    n, h, w, c = xv.shape
    m = spec.region_size
    axis = AXIS_INDEX[spec.axis]
    extent = xv.shape[axis]
    if extent % m != 0:
        raise InvalidInputError(
            f"inner_rearrange: {spec.axis} extent {extent} not divisible by region size {m}"
        )
    g = extent // m
    if spec.axis == "height":
        y = T.reshape(x, (n, g, m, w, c))
        y = T.transpose(y, (0, 1, 3, 2, 4))  # [N, g, W, m, C]
        return T.reshape(y, (n, g, w, m * c))
    # width: the (m, C) axes are already adjacent in memory order
    y = T.reshape(x, (n, h, g, m, c))
    return T.reshape(y, (n, h, g, m * c))


def inner_restore(y: T.ArrayLike, spec: RegionSpec) -> T.ArrayLike:
    """Exact inverse permutation of inner_rearrange."""
    yv = T._value(y)
    if yv.ndim != 4:
        raise ShapeError(f"inner_restore: expected rank-4 input, got {yv.shape}")
    m = spec.region_size
    n, d1, d2, mc = yv.shape
    if mc % m != 0:
        raise ShapeError(
            f"inner_restore: channel dim {mc} not divisible by region size {m}"
        )
    c = mc // m
    if spec.axis == "height":
        z = T.reshape(y, (n, d1, d2, m, c))
        z = T.transpose(z, (0, 1, 3, 2, 4))  # [N, g, m, W, C]
        return T.reshape(z, (n, d1 * m, d2, c))
    z = T.reshape(y, (n, d1, d2, m, c))
    return T.reshape(z, (n, d1, d2 * m, c))


def _shift_index(extent: int, step: int) -> np.ndarray:
    # token i moves to (i + step) mod extent, so position i reads i - step
    return (np.arange(extent) - step) % extent


def _shuffle_index(extent: int, region_size: int) -> np.ndarray:
    g = extent // region_size
    return np.arange(extent).reshape(g, region_size).T.ravel()


def _shuffle_inverse_index(extent: int, region_size: int) -> np.ndarray:
    g = extent // region_size
    return np.arange(extent).reshape(region_size, g).T.ravel()


def _check_shift(extent: int, shift: ShiftSpec, region_size: int | None) -> None:
    if shift.manner == "shifted":
        if shift.step >= extent:
            raise InvalidInputError(
                f"cross_rearrange: step {shift.step} must be < extent {extent}"
            )
    else:
        if region_size is None:
            raise ConfigError("cross_rearrange: shuffle manner needs a region size")
        if extent % region_size != 0:
            raise InvalidInputError(
                f"cross_rearrange: extent {extent} not divisible by region size "
                f"{region_size} (shuffle manner)"
            )


def cross_rearrange(
    x: T.ArrayLike, axis: str, shift: ShiftSpec, region_size: int | None = None
) -> T.ArrayLike:
    """Move tokens between regions along an axis.

    shifted: circular shift by `step` (token i -> i + step mod extent),
    preserving relative cyclic order. shuffle: re-read the (regions x
    offset) factorization transposed, interleaving regions.
    """
    ax = AXIS_INDEX[axis]
    extent = T._value(x).shape[ax]
    _check_shift(extent, shift, region_size)
    if shift.manner == "shifted":
        idx = _shift_index(extent, shift.step)
    else:
        idx = _shuffle_index(extent, region_size)
    return T.take(x, idx, ax)


def cross_restore(
    x: T.ArrayLike, axis: str, shift: ShiftSpec, region_size: int | None = None
) -> T.ArrayLike:
    """Exact inverse of cross_rearrange."""
    ax = AXIS_INDEX[axis]
    extent = T._value(x).shape[ax]
    _check_shift(extent, shift, region_size)
    if shift.manner == "shifted":
        idx = _shift_index(extent, -shift.step % extent if extent else 0)
    else:
        idx = _shuffle_inverse_index(extent, region_size)
    return T.take(x, idx, ax)
