"""Registered invariant suites, runnable from the CLI and reused by tests.

Each check draws `seeds` randomized cases from a seeded generator and
returns (passed, detail). Scopes mirror the module layout: tensor,
rearrange, hire, network, accounting.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .accounting import count_config, count_model, hire_module_closed_form
from .hire import (
    BottleneckMlpParams,
    HireBranchConfig,
    HireModuleParams,
    hire_branch,
    hire_module,
)
from .network import build_model, forward, forward_features
from .rearrange import (
    PADDING_MODES,
    RegionSpec,
    ShiftSpec,
    cross_rearrange,
    cross_restore,
    crop_pad,
    inner_rearrange,
    inner_restore,
    partition_pad,
)
from .variants import micro_config


@dataclass
class CheckResult:
    scope: str
    name: str
    passed: bool
    detail: str


def _rand_map(rng, n=None, h=None, w=None, c=None, dtype=np.float32):
    n = n or int(rng.integers(1, 3))
    h = h or int(rng.integers(1, 13))
    w = w or int(rng.integers(1, 13))
    c = c or int(rng.integers(1, 7))
    return rng.standard_normal((n, h, w, c)).astype(dtype)


# ---------------------------------------------------------------------------
# rearrange scope
# ---------------------------------------------------------------------------


def check_inner_roundtrip(seeds: int, rng) -> tuple[bool, str]:
    """restore(rearrange(x)) == x bitwise, with padding handled outside."""
    for _ in range(seeds):
        x = _rand_map(rng)
        axis = rng.choice(["height", "width"])
        m = int(rng.integers(1, 6))
        mode = rng.choice(PADDING_MODES)
        extent = x.shape[1 if axis == "height" else 2]
        if mode == "reflect" and extent == 1 and extent % m:
            mode = "circular"
        spec = RegionSpec(axis, m, mode)
        xp, rec = partition_pad(x, spec)
        y = inner_rearrange(xp, spec)
        back = crop_pad(inner_restore(y, spec), rec)
        if not np.array_equal(back, x):
            return False, f"inner roundtrip differs (axis={axis} m={m} mode={mode})"
        if not np.array_equal(np.sort(y, axis=None), np.sort(np.asarray(xp), axis=None)):
            return False, "inner rearrangement changed the element multiset"
    return True, f"{seeds} draws"


def check_cross_roundtrip(seeds: int, rng) -> tuple[bool, str]:
    """cross_restore(cross_rearrange(x)) == x bitwise for both manners."""
    for _ in range(seeds):
        x = _rand_map(rng)
        axis = rng.choice(["height", "width"])
        extent = x.shape[1 if axis == "height" else 2]
        s = int(rng.integers(0, extent))
        spec = ShiftSpec(s, "shifted")
        y = cross_rearrange(x, axis, spec)
        if not np.array_equal(cross_restore(y, axis, spec), x):
            return False, f"shifted roundtrip differs (s={s}, extent={extent})"
        if not np.array_equal(np.sort(y, axis=None), np.sort(x, axis=None)):
            return False, "shift changed the element multiset"
        divisors = [d for d in range(1, extent + 1) if extent % d == 0]
        m = int(rng.choice(divisors))
        sh = ShiftSpec(0, "shuffle")
        y2 = cross_rearrange(x, axis, sh, m)
        if not np.array_equal(cross_restore(y2, axis, sh, m), x):
            return False, f"shuffle roundtrip differs (m={m}, extent={extent})"
    return True, f"{seeds} draws"


def check_shift_group_law(seeds: int, rng) -> tuple[bool, str]:
    """shift(s1) o shift(s2) == shift((s1+s2) mod extent)."""
    for _ in range(seeds):
        x = _rand_map(rng)
        axis = rng.choice(["height", "width"])
        extent = x.shape[1 if axis == "height" else 2]
        s1, s2 = int(rng.integers(0, extent)), int(rng.integers(0, extent))
        lhs = cross_rearrange(
            cross_rearrange(x, axis, ShiftSpec(s2)), axis, ShiftSpec(s1)
        )
        rhs = cross_rearrange(x, axis, ShiftSpec((s1 + s2) % extent))
        if not np.array_equal(lhs, rhs):
            return False, f"group law failed (s1={s1}, s2={s2}, extent={extent})"
    return True, f"{seeds} draws"


def token_permutation(extent: int, fn) -> np.ndarray:
    """Image of each token index under a [*,E,1,1]-map rearrangement."""
    x = np.arange(extent, dtype=np.float64).reshape(1, extent, 1, 1)
    y = np.asarray(fn(x)).reshape(extent)
    perm = np.empty(extent, dtype=int)
    for pos, tok in enumerate(y):
        perm[int(tok)] = pos
    return perm


def preserves_cyclic_order(perm: np.ndarray) -> bool:
    """successor(i) must land on successor(image(i)) modulo the extent."""
    e = len(perm)
    return all(perm[(i + 1) % e] == (perm[i] + 1) % e for i in range(e))


def check_order_preservation(seeds: int, rng) -> tuple[bool, str]:
    """Shifted manner preserves cyclic token order; shuffle breaks it."""
    for _ in range(seeds):
        m = int(rng.integers(2, 5))
        g = int(rng.integers(2, 5))
        extent = g * m
        s = int(rng.integers(0, extent))
        shifted = token_permutation(
            extent, lambda x: cross_rearrange(x, "height", ShiftSpec(s), m)
        )
        if not preserves_cyclic_order(shifted):
            return False, f"shifted manner broke cyclic order (s={s}, extent={extent})"
        shuffled = token_permutation(
            extent, lambda x: cross_rearrange(x, "height", ShiftSpec(0, "shuffle"), m)
        )
        if preserves_cyclic_order(shuffled):
            return False, f"shuffle manner preserved cyclic order (g={g}, m={m})"
    return True, f"{seeds} draws (g,h > 1)"


def check_pad_crop_identity(seeds: int, rng) -> tuple[bool, str]:
    """crop(partition_pad(x)) == x for every padding mode."""
    for _ in range(seeds):
        x = _rand_map(rng)
        axis = rng.choice(["height", "width"])
        extent = x.shape[1 if axis == "height" else 2]
        m = int(rng.integers(1, 6))
        for mode in PADDING_MODES:
            if mode == "reflect" and extent == 1 and extent % m:
                continue
            xp, rec = partition_pad(x, RegionSpec(axis, m, mode))
            if np.asarray(xp).shape[1 if axis == "height" else 2] != rec.padded:
                return False, f"padded extent mismatch ({mode})"
            if not np.array_equal(crop_pad(xp, rec), x):
                return False, f"pad/crop not identity ({mode})"
    return True, f"{seeds} draws x 4 modes"


# ---------------------------------------------------------------------------
# tensor scope
# ---------------------------------------------------------------------------


def check_linear_linearity(seeds: int, rng) -> tuple[bool, str]:
    """linear(ax + by) == a linear_nobias(x) + b linear_nobias(y) + bias."""
    for _ in range(seeds):
        k, m = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        w = rng.standard_normal((k, m))
        b = rng.standard_normal(m)
        x, y = rng.standard_normal((5, k)), rng.standard_normal((5, k))
        a1, a2 = rng.standard_normal(2)
        lhs = T.linear(a1 * x + a2 * y, w, b)
        rhs = a1 * T.linear(x, w) + a2 * T.linear(y, w) + b
        if not np.allclose(lhs, rhs, rtol=1e-6, atol=1e-9):
            return False, "linearity violated"
    return True, f"{seeds} draws"


def check_batch_norm_statistics(seeds: int, rng) -> tuple[bool, str]:
    """Batch mode with identity affine leaves per-channel mean ~0, var ~1."""
    for _ in range(seeds):
        x = _rand_map(rng, n=2, h=4, w=4, c=3, dtype=np.float64)
        p = T.identity_norm(3, dtype=np.float64, mode="batch")
        y = np.asarray(T.apply_norm(x, p))
        mean = y.mean(axis=(0, 1, 2))
        var = y.var(axis=(0, 1, 2))
        if np.abs(mean).max() >= 1e-5:
            return False, f"channel mean {np.abs(mean).max():.2e}"
        if not np.all((var > 1 - 1e-3) & (var < 1 + 1e-3)):
            return False, f"channel variance off: {var}"
    return True, f"{seeds} draws"


def op_grad_cases(rng) -> list[tuple[str, np.ndarray, Callable]]:
    """(name, leaf array, forward fn) per primitive op; non-leaf operands are
    captured as constants so each case differentiates one input at a time."""
    n, h, w, c = 2, int(rng.integers(2, 7)), int(rng.integers(2, 7)), int(rng.integers(1, 7))
    x4 = rng.standard_normal((n, h, w, c))
    wt = rng.standard_normal((c, 5))
    b = rng.standard_normal(5)
    gamma = rng.standard_normal(c) + 1.5
    beta = rng.standard_normal(c)
    idx = rng.integers(0, h, size=h + 2)
    other = rng.standard_normal(x4.shape)
    # keep relu inputs away from the kink, where central differences are one-sided
    x_relu = np.where(np.abs(x4) < 0.05, x4 + 0.5, x4)
    return [
        ("linear/x", x4, lambda v: T.linear(v, wt, b)),
        ("linear/weight", wt, lambda v: T.linear(x4, v, b)),
        ("linear/bias", b, lambda v: T.linear(x4, wt, v)),
        ("batch_norm/x", x4, lambda v: T.batch_norm(v, gamma, beta, mode="batch")),
        ("batch_norm/gamma", gamma, lambda v: T.batch_norm(x4, v, beta, mode="batch")),
        ("batch_norm/beta", beta, lambda v: T.batch_norm(x4, gamma, v, mode="batch")),
        ("gelu", x4, T.gelu),
        ("relu", x_relu, T.relu),
        ("reshape", x4, lambda v: T.reshape(v, (n, h * w, c))),
        ("transpose", x4, lambda v: T.transpose(v, (0, 2, 1, 3))),
        ("take", x4, lambda v: T.take(v, idx, 1)),
        ("pad_zero", x4, lambda v: T.pad_zero(v, 1, 1, 2)),
        ("crop", x4, lambda v: T.crop(v, 1, 1, h)),
        ("mean_axes", x4, lambda v: T.mean_axes(v, (1, 2))),
        ("add", x4, lambda v: T.add(v, other)),
    ]


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max relative error with a unit floor (gradients here are O(1))."""
    denom = np.maximum.reduce([np.abs(a), np.abs(b), np.ones_like(b, dtype=np.float64)])
    return float((np.abs(a - b) / denom).max())


def check_backward_vs_fd(seeds: int, rng) -> tuple[bool, str]:
    """Every registered op's adjoint agrees with central differences (64-bit)."""
    worst = 0.0
    rounds = max(1, seeds // 15)
    for _ in range(rounds):
        for name, leaf, fn in op_grad_cases(rng):
            tape = T.Tape()
            v = tape.leaf(leaf)
            grads = T.backward(tape, T.sum_all(fn(v)))
            ad = grads.wrt(v)
            fd = T.finite_difference_grad(
                lambda a: float(np.asarray(T.sum_all(fn(a)))), leaf.copy(), 1e-5
            )
            err = rel_error(ad, fd)
            worst = max(worst, err)
            if err >= 1e-4:
                return False, f"op {name}: max rel err {err:.2e}"
    return True, f"max rel err {worst:.2e}"


def check_no_mutation(seeds: int, rng) -> tuple[bool, str]:
    """No op mutates its inputs (checksum equality before/after)."""
    for _ in range(seeds):
        x = _rand_map(rng, dtype=np.float64)
        before = x.tobytes()
        w = rng.standard_normal((x.shape[-1], 4))
        wb = w.tobytes()
        T.linear(x, w, np.zeros(4))
        T.gelu(x)
        T.relu(x)
        T.apply_norm(x, T.identity_norm(x.shape[-1], dtype=np.float64, mode="batch"))
        spec = RegionSpec("height", 2, "circular")
        xp, rec = partition_pad(x, spec)
        inner_restore(inner_rearrange(xp, spec), spec)
        cross_rearrange(x, "width", ShiftSpec(1 % x.shape[2]))
        if x.tobytes() != before or w.tobytes() != wb:
            return False, "input bytes changed"
    return True, f"{seeds} draws"


def check_finiteness(seeds: int, rng) -> tuple[bool, str]:
    """Finite inputs stay finite through a full micro-model forward."""
    model = build_model(micro_config(), seed=3)
    for i in range(max(1, seeds // 10)):
        x = rng.standard_normal((1, 32 + i, 35, 3)).astype(np.float32) * 10
        out = np.asarray(forward(model, x))
        if not np.isfinite(out).all():
            return False, "non-finite logits"
    return True, "finite logits"


# ---------------------------------------------------------------------------
# hire scope
# ---------------------------------------------------------------------------


def _rand_branch(rng, axis: str, c: int, m: int, shift=None, dtype=np.float64):
    dims = [m * c, max(1, c // 2), m * c]
    layers = [
        T.LinearParams(
            rng.standard_normal((a, b)).astype(dtype) * 0.1,
            rng.standard_normal(b).astype(dtype) * 0.1,
        )
        for a, b in zip(dims, dims[1:])
    ]
    return HireBranchConfig(
        region=RegionSpec(axis, m, "circular"),
        mlp=BottleneckMlpParams(layers=layers, norm=None),
        shift=shift,
    )


def check_hire_shape_preservation(seeds: int, rng) -> tuple[bool, str]:
    """hire_module output shape equals input shape for arbitrary extents."""
    for _ in range(seeds):
        c = int(rng.integers(2, 7)) * 2
        x = _rand_map(rng, c=c, dtype=np.float64)
        mh, mw = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        sh = ShiftSpec(int(rng.integers(0, x.shape[1])))
        sw = ShiftSpec(int(rng.integers(0, x.shape[2])))
        p = HireModuleParams(
            height=_rand_branch(rng, "height", c, mh, sh),
            width=_rand_branch(rng, "width", c, mw, sw),
            channel=T.LinearParams(np.eye(c), np.zeros(c)),
        )
        y = hire_module(x, p)
        if np.asarray(y).shape != x.shape:
            return False, f"shape {np.asarray(y).shape} != {x.shape}"
    return True, f"{seeds} draws incl. prime extents"


def check_branch_additivity(seeds: int, rng) -> tuple[bool, str]:
    """hire_module equals the sum of independently computed branches."""
    for _ in range(seeds):
        c = 4
        x = _rand_map(rng, c=c, dtype=np.float64)
        hb = _rand_branch(rng, "height", c, 2, ShiftSpec(1 % x.shape[1]))
        wb = _rand_branch(rng, "width", c, 3)
        ch = T.LinearParams(
            rng.standard_normal((c, c)) * 0.1, rng.standard_normal(c) * 0.1
        )
        p = HireModuleParams(height=hb, width=wb, channel=ch)
        combined = np.asarray(hire_module(x, p))
        parts = (
            np.asarray(hire_branch(x, wb))
            + np.asarray(hire_branch(x, hb))
            + np.asarray(T.apply_linear(x, ch))
        )
        if not np.allclose(combined, parts, rtol=1e-6, atol=1e-12):
            return False, "branch sum mismatch"
    return True, f"{seeds} draws"


def check_zero_step_equivalence(seeds: int, rng) -> tuple[bool, str]:
    """shift.step = 0 is bitwise-identical to cross disabled."""
    for _ in range(seeds):
        c = 4
        x = _rand_map(rng, c=c, dtype=np.float32)
        base = _rand_branch(rng, "height", c, 2, None, dtype=np.float32)
        with_zero = dataclasses.replace(base, shift=ShiftSpec(0))
        a = np.asarray(hire_branch(x, with_zero))
        b = np.asarray(hire_branch(x, base))
        if not np.array_equal(a, b):
            return False, "outputs differ bitwise"
    return True, f"{seeds} draws"


def check_restore_omission(seeds: int, rng) -> tuple[bool, str]:
    """Omitting cross_restore shifts the branch output by exactly the step."""
    for _ in range(seeds):
        c = 4
        x = _rand_map(rng, c=c, dtype=np.float64)
        s = int(rng.integers(1, max(2, x.shape[1])))
        if s >= x.shape[1]:
            s = 0
        full = _rand_branch(rng, "height", c, 2, ShiftSpec(s))
        omitted = dataclasses.replace(full, use_cross_restore=False)
        lhs = np.asarray(hire_branch(x, omitted))
        rhs = np.asarray(
            cross_rearrange(hire_branch(x, full), "height", ShiftSpec(s), full.region.region_size)
        )
        if not np.array_equal(lhs, rhs):
            return False, f"restore-omitted != shifted(full) at s={s}"
    return True, f"{seeds} draws"


# ---------------------------------------------------------------------------
# network scope
# ---------------------------------------------------------------------------


def check_resolution_flexibility(seeds: int, rng) -> tuple[bool, str]:
    """forward succeeds with fixed-size logits across random resolutions."""
    model = build_model(micro_config(), seed=0)
    n_cases = max(1, min(seeds, 20))
    for _ in range(n_cases):
        h = int(rng.integers(32, 97))
        w = int(rng.integers(32, 97))
        out = np.asarray(forward(model, rng.standard_normal((1, h, w, 3)).astype(np.float32)))
        if out.shape != (1, model.config.num_classes):
            return False, f"logits shape {out.shape} at {h}x{w}"
        if not np.isfinite(out).all():
            return False, f"non-finite logits at {h}x{w}"
    return True, f"{n_cases} resolutions"


def check_residual_identity(seeds: int, rng) -> tuple[bool, str]:
    """Zeroed hire + channel-MLP weights make stages identity up to embeds."""
    model = build_model(micro_config(), seed=0)

    def zero_blocks(obj):
        for name, arr in T.iter_arrays(obj):
            if ".hire." in name or ".channel_mlp." in name:
                arr[...] = 0
        return obj

    for stage in model.stages:
        zero_blocks(stage.blocks)
    x = rng.standard_normal((1, 40, 40, 3)).astype(np.float32)
    feats = forward_features(model, x)
    # recompute with blocks skipped entirely: embed-only pipeline
    from .network import patch_embed

    y = x
    for i, stage in enumerate(model.stages):
        y = patch_embed(y, stage.embed)
        if not np.allclose(np.asarray(feats[i]), np.asarray(y), rtol=1e-5, atol=1e-6):
            return False, f"stage {i + 1} is not an identity over the embed"
    return True, "all stages collapse to patch embeds"


def check_build_determinism(seeds: int, rng) -> tuple[bool, str]:
    from .network import model_checksum

    a = model_checksum(build_model(micro_config(), seed=7))
    b = model_checksum(build_model(micro_config(), seed=7))
    c = model_checksum(build_model(micro_config(), seed=8))
    if a != b:
        return False, "same seed produced different weights"
    if a == c:
        return False, "different seeds produced identical weights"
    return True, "seeded build reproducible"


# ---------------------------------------------------------------------------
# accounting scope
# ---------------------------------------------------------------------------


def check_closed_form_reconciliation(seeds: int, rng) -> tuple[bool, str]:
    """Traversal hire-module counts equal the closed form exactly."""
    from .network import ModelConfig, PatchEmbedSpec, StageConfig

    for _ in range(seeds):
        mh, mw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        c = int(rng.integers(1, 6)) * 2
        gh, gw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        hh, ww = mh * gh, mw * gw  # divisible extents only
        cfg = ModelConfig(
            stages=(
                StageConfig(depth=1, channels=c, h=mh, w=mw, s=0),
                StageConfig(depth=1, channels=c, h=1, w=1, s=0),
                StageConfig(depth=1, channels=c, h=1, w=1, s=0),
                StageConfig(depth=1, channels=c, h=1, w=1, s=0),
            ),
            patch_embed=tuple(PatchEmbedSpec(1, 1) for _ in range(4)),
            expansion_ratio=(1, 1, 1, 1),
            num_classes=2,
        )
        model = build_model(cfg, seed=0)
        rep = count_model(model, hh, ww, weights_only=True)
        got_p, got_f = rep.subtotal("stage1.block0.hire")
        want_p, want_f = hire_module_closed_form(mh, mw, c, hh, ww)
        if (got_p, got_f) != (want_p, want_f):
            return False, (
                f"h={mh} w={mw} C={c} H={hh} W={ww}: "
                f"traversal ({got_p}, {got_f}) != closed form ({want_p}, {want_f})"
            )
    return True, f"{seeds} divisible configs, integer equality"


def check_resolution_scaling(seeds: int, rng) -> tuple[bool, str]:
    """Params are resolution-independent; block flops scale with H."""
    cfg = micro_config()
    a = count_config(cfg, 224, 224)
    b = count_config(cfg, 256, 256)
    if a.params != b.params:
        return False, "params changed with resolution"
    c = count_config(cfg, 448, 224)
    for e_a, e_c in zip(a.breakdown, c.breakdown):
        if "channel_mlp" in e_a.path and e_c.flops != 2 * e_a.flops:
            return False, f"{e_a.path}: flops not doubled with H"
    return True, "params fixed, flops scale"


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

SUITES: dict[str, list[tuple[str, Callable]]] = {
    "rearrange": [
        ("inner rearrange/restore roundtrip (bitwise)", check_inner_roundtrip),
        ("cross rearrange/restore roundtrip (bitwise)", check_cross_roundtrip),
        ("shift composition group law", check_shift_group_law),
        ("shifted preserves cyclic order, shuffle breaks it", check_order_preservation),
        ("partition_pad then crop is identity (all modes)", check_pad_crop_identity),
    ],
    "tensor": [
        ("linear is additive and homogeneous", check_linear_linearity),
        ("batch-norm batch statistics", check_batch_norm_statistics),
        ("backward matches finite differences per op", check_backward_vs_fd),
        ("ops never mutate inputs", check_no_mutation),
        ("finite in, finite out", check_finiteness),
    ],
    "hire": [
        ("hire module preserves shape at any extent", check_hire_shape_preservation),
        ("module equals sum of branches", check_branch_additivity),
        ("step 0 bitwise-equals cross disabled", check_zero_step_equivalence),
        ("omitting cross restore shifts output by the step", check_restore_omission),
    ],
    "network": [
        ("resolution flexibility", check_resolution_flexibility),
        ("residual identity with zeroed blocks", check_residual_identity),
        ("seeded build determinism", check_build_determinism),
    ],
    "accounting": [
        ("traversal equals closed form on hire modules", check_closed_form_reconciliation),
        ("cost scaling with resolution", check_resolution_scaling),
    ],
}


def run_invariants(scope: str, seeds: int = 20, seed: int = 0) -> list[CheckResult]:
    """Run one scope ('all' for everything); results in registry order."""
    if scope == "all":
        scopes = list(SUITES)
    elif scope in SUITES:
        scopes = [scope]
    else:
        raise ConfigError(f"unknown scope '{scope}'; valid: all, {', '.join(SUITES)}")
    results = []
    for sc in scopes:
        for name, fn in SUITES[sc]:
            rng = np.random.default_rng(seed)
            try:
                passed, detail = fn(seeds, rng)
            except Exception as e:  # a crash is a failure, not an abort
                passed, detail = False, f"raised {type(e).__name__}: {e}"
            results.append(CheckResult(sc, name, passed, detail))
    return results
