"""Command-line surface: summary, forward, invariants, gradcheck, ablate, bench.

Exit codes: 0 success, 1 invariant/acceptance failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import tensor as T
from .accounting import ablation_cost_sweep, count_model
from .errors import HireMlpError
from .invariants import preserves_cyclic_order, run_invariants, token_permutation
from .network import (
    Model,
    build_model,
    cast_model,
    forward,
    load_config,
    load_model_weights,
    set_norm_mode,
)
from .rearrange import PADDING_MODES, RegionSpec, ShiftSpec, cross_rearrange, crop_pad, partition_pad
from .variants import BUDGET_TOLERANCE, FC_SWEEP_REFERENCE, micro_config, small_config
from .weights import load_tensors

BENCH_WARMUP = 5


class UsageError(Exception):
    pass


def _human(n: float) -> str:
    if n >= 1e9:
        return f"{n / 1e9:.2f}G"
    if n >= 1e6:
        return f"{n / 1e6:.2f}M"
    if n >= 1e3:
        return f"{n / 1e3:.2f}K"
    return f"{n:.0f}"


def _parse_hwc(spec: str, dims: int = 3) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in spec.lower().split("x"))
    except ValueError:
        raise UsageError(f"cannot parse size '{spec}' (expected e.g. 224x224x3)")
    if len(parts) != dims or any(p < 1 for p in parts):
        raise UsageError(f"cannot parse size '{spec}' (expected {dims} positive dims)")
    return parts


def _load_config_arg(path: str):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    return load_config(p)


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------


def cmd_summary(args) -> int:
    cfg = _load_config_arg(args.config)
    h, w = _parse_hwc(args.hw, 2)
    model = build_model(cfg, seed=args.seed)
    report = count_model(model, h, w)
    payload = {
        "name": cfg.meta.get("name", "?"),
        "resolution": [h, w],
        "depths": [s.depth for s in cfg.stages],
        "channels": [s.channels for s in cfg.stages],
        "regions": [[s.h, s.w] for s in cfg.stages],
        "steps": [s.s for s in cfg.stages],
        "padding": [s.padding for s in cfg.stages],
        "expansion": list(cfg.expansion_ratio),
        "params": report.params,
        "flops": report.flops,
    }
    checks = []
    ref_p, ref_f = cfg.meta.get("reference_params"), cfg.meta.get("reference_flops")
    if ref_p and ref_f:
        for label, got, ref in (("params", report.params, ref_p), ("flops", report.flops, ref_f)):
            dev = got / ref - 1
            checks.append(
                {
                    "target": label,
                    "reference": ref,
                    "measured": got,
                    "deviation": dev,
                    "pass": abs(dev) <= BUDGET_TOLERANCE,
                }
            )
        payload["budget_checks"] = checks
    if args.json:
        print(json.dumps(payload, indent=2))
        return 0
    print(f"config: {payload['name']}  (input {h}x{w})")
    print(f"{'stage':>5}  {'depth':>5}  {'channels':>8}  {'region h/w':>10}  {'step':>4}  {'padding':>9}  {'params':>10}  {'flops':>10}")
    hh, ww = h, w
    for i, st in enumerate(cfg.stages):
        pe = cfg.patch_embed[i]
        hh, ww = -(-hh // pe.stride), -(-ww // pe.stride)
        sp, sf = report.subtotal(f"stage{i + 1}.")
        print(
            f"{i + 1:>5}  {st.depth:>5}  {st.channels:>8}  {f'{st.h}/{st.w}':>10}  "
            f"{st.s:>4}  {st.padding:>9}  {_human(sp):>10}  {_human(sf):>10}"
        )
    print(f"totals: params {report.params:,} ({_human(report.params)})  flops {report.flops:,} ({_human(report.flops)})")
    for c in checks:
        verdict = "PASS" if c["pass"] else "FAIL"
        print(
            f"budget {c['target']}: {_human(c['measured'])} vs reference "
            f"{_human(c['reference'])} ({c['deviation']:+.2%}) ... {verdict}"
        )
    return 0


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def cmd_forward(args) -> int:
    cfg = _load_config_arg(args.config)
    model = build_model(cfg, seed=args.seed)
    if args.weights:
        wpath = Path(args.weights)
        if not wpath.exists():
            raise UsageError(f"weights file not found: {args.weights}")
        load_model_weights(model, load_tensors(wpath))
    if args.random:
        h, w, c = _parse_hwc(args.random)
        rng = np.random.default_rng(args.seed)
        x = rng.standard_normal((1, h, w, c)).astype(np.float32)
    elif args.input:
        ipath = Path(args.input)
        if not ipath.exists():
            raise UsageError(f"input file not found: {args.input}")
        tensors = load_tensors(ipath)
        if len(tensors) != 1:
            raise UsageError(f"input file must hold exactly one tensor, found {len(tensors)}")
        x = next(iter(tensors.values()))
        if x.ndim == 3:
            x = x[None]
    else:
        raise UsageError("forward needs --random HxWxC or --input FILE")
    logits = np.asarray(forward(model, x))
    k = min(args.topk, logits.shape[-1])
    payload = []
    for row in logits:
        top = np.argsort(row)[::-1][:k]
        payload.append([{"index": int(i), "logit": float(row[i])} for i in top])
    if args.json:
        print(json.dumps({"topk": payload}, indent=2))
    else:
        for n, top in enumerate(payload):
            ranked = "  ".join(f"{e['index']}:{e['logit']:+.5f}" for e in top)
            print(f"image {n}: top-{k} {ranked}")
    return 0


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def cmd_invariants(args) -> int:
    results = run_invariants(args.scope, seeds=args.seeds, seed=args.seed)
    if args.json:
        print(
            json.dumps(
                {
                    "scope": args.scope,
                    "seeds": args.seeds,
                    "results": [dataclasses.asdict(r) for r in results],
                    "passed": all(r.passed for r in results),
                },
                indent=2,
            )
        )
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  [{r.scope}] {r.name}  ({r.detail})")
        n_fail = sum(not r.passed for r in results)
        print(f"{len(results) - n_fail}/{len(results)} invariants hold")
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def _taped_model(model: Model, tape: T.Tape) -> Model:
    return Model(
        config=model.config,
        stages=T.bind_tree(model.stages, tape),
        head=T.bind_tree(model.head, tape),
    )


def model_gradcheck(seed: int = 0, coords: int = 100, eps: float = 1e-5) -> dict:
    """Full micro-model reverse-mode vs central differences at 64-bit.

    Samples `coords` coordinates uniformly across the input and every
    parameter leaf; returns max relative errors per group.
    """
    rng = np.random.default_rng(seed)
    model = set_norm_mode(cast_model(build_model(micro_config(), seed=seed), np.float64), "batch")
    x0 = rng.standard_normal((1, 32, 32, 3))

    tape = T.Tape()
    xv = tape.leaf(x0)
    taped = _taped_model(model, tape)
    grads = T.backward(tape, T.sum_all(forward(taped, xv)))

    # taped Vars alias the eager model's arrays, so FD can perturb in place
    flat_vars: list[tuple[str, T.Var, np.ndarray]] = [("input", xv, x0)]
    for name, var in _iter_vars(taped):
        flat_vars.append((name, var, var.value))

    sizes = np.array([arr.size for _, _, arr in flat_vars])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(coords, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = {}
    for pick in picks:
        slot = int(np.searchsorted(offsets, pick, side="right") - 1)
        name, var, arr = flat_vars[slot]
        local = int(pick - offsets[slot])
        ad = float(grads.wrt(var).reshape(-1)[local])
        fd = T.finite_difference_grad_sample(
            lambda a: float(np.asarray(T.sum_all(forward(model, x0)))), arr, eps, [local]
        )[0]
        err = abs(ad - fd) / max(abs(ad), abs(fd), 1.0)
        group = "input" if name == "input" else "params"
        worst[group] = max(worst.get(group, 0.0), err)
    return worst


def _iter_vars(obj, prefix: str = ""):
    import dataclasses as dc

    if isinstance(obj, T.Var):
        yield prefix, obj
        return
    if dc.is_dataclass(obj) and not isinstance(obj, type):
        for f in dc.fields(obj):
            sub = f"{prefix}.{f.name}" if prefix else f.name
            yield from _iter_vars(getattr(obj, f.name), sub)
        return
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _iter_vars(v, f"{prefix}.{i}" if prefix else str(i))


def cmd_gradcheck(args) -> int:
    worst = model_gradcheck(seed=args.seed, coords=args.coords)
    ok = all(v < 1e-4 for v in worst.values())
    if args.json:
        print(json.dumps({"max_rel_error": worst, "tolerance": 1e-4, "passed": ok}, indent=2))
    else:
        for group, err in sorted(worst.items()):
            print(f"{group:>6}: max rel error {err:.3e}  ({'OK' if err < 1e-4 else 'FAIL'})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


def _ablate_padding(args, out: dict) -> bool:
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((1, 7, 7, 4)).astype(np.float32)
    rows, ok = [], True
    for mode in PADDING_MODES:
        spec = RegionSpec("height", 3, mode)
        xp, rec = partition_pad(x, spec)
        identity = bool(np.array_equal(crop_pad(xp, rec), x))
        ok &= identity
        rows.append(
            {
                "mode": mode,
                "padded_extent": rec.padded,
                "crop_identity": identity,
                "checksum": float(np.asarray(xp).sum()),
            }
        )
    out["rows"] = rows
    if not args.json:
        print(f"{'mode':>10}  {'7 -> padded':>11}  {'crop identity':>13}  {'pad checksum':>14}")
        for r in rows:
            extent = f"7 -> {r['padded_extent']}"
            print(
                f"{r['mode']:>10}  {extent:>11}  "
                f"{str(r['crop_identity']):>13}  {r['checksum']:>14.5f}"
            )
    return ok


def _ablate_manner(args, out: dict) -> bool:
    extent, region = 12, 3
    s = 2
    shifted_perm = token_permutation(
        extent, lambda v: cross_rearrange(v, "height", ShiftSpec(s), region)
    )
    shuffle_perm = token_permutation(
        extent, lambda v: cross_rearrange(v, "height", ShiftSpec(0, "shuffle"), region)
    )
    shifted_ok = preserves_cyclic_order(shifted_perm)
    shuffle_breaks = not preserves_cyclic_order(shuffle_perm)
    out["rows"] = [
        {"manner": "shifted", "permutation": shifted_perm.tolist(), "preserves_cyclic_order": shifted_ok},
        {"manner": "shuffle", "permutation": shuffle_perm.tolist(), "preserves_cyclic_order": not shuffle_breaks},
    ]
    if not args.json:
        print(f"token axis: {extent} tokens, {extent // region} regions of {region}")
        for r in out["rows"]:
            print(
                f"{r['manner']:>8}: perm {r['permutation']}  "
                f"cyclic order {'preserved' if r['preserves_cyclic_order'] else 'BROKEN'}"
            )
    return shifted_ok and shuffle_breaks


def _ablate_shift(args, out: dict) -> bool:
    sweeps = [(0, 0, 0, 0), (1, 1, 1, 1), (2, 2, 1, 1), (2, 2, 2, 2)]
    base = small_config()
    rows, ok = [], True
    for steps in sweeps:
        stages = tuple(dataclasses.replace(s, s=v) for s, v in zip(base.stages, steps))
        cfg = dataclasses.replace(base, stages=stages, meta={})
        model = build_model(cfg, seed=0)
        rep = count_model(model, 224, 224)
        comm = "none (no cross-region communication)" if all(v == 0 for v in steps) else "cross-region"
        rows.append({"steps": list(steps), "params": rep.params, "flops": rep.flops, "communication": comm})
    costs = {(r["params"], r["flops"]) for r in rows}
    ok &= len(costs) == 1  # shifting is free: costs must not depend on s
    out["rows"] = rows
    out["cost_invariant_to_step"] = len(costs) == 1
    if not args.json:
        for r in rows:
            print(
                f"s={tuple(r['steps'])}: params {_human(r['params'])}  flops {_human(r['flops'])}  "
                f"communication: {r['communication']}"
            )
        print(f"cost invariant to step: {out['cost_invariant_to_step']}")
    return ok


def _ablate_fc(args, out: dict) -> bool:
    sweep = ablation_cost_sweep(small_config())
    rows = []
    for n, rep in sweep:
        ref_p, ref_f = FC_SWEEP_REFERENCE[n]
        rows.append(
            {
                "fc_layers": n,
                "params": rep.params,
                "flops": rep.flops,
                "reference_params": ref_p,
                "reference_flops": ref_f,
                "params_deviation": rep.params / ref_p - 1,
                "flops_deviation": rep.flops / ref_f - 1,
            }
        )
    p = {r["fc_layers"]: r["params"] for r in rows}
    f = {r["fc_layers"]: r["flops"] for r in rows}
    ordering = p[1] > p[2] > p[3] and f[1] > f[2]
    within = all(
        abs(r["params_deviation"]) <= BUDGET_TOLERANCE
        and abs(r["flops_deviation"]) <= BUDGET_TOLERANCE
        for r in rows
    )
    out["rows"] = rows
    out["ordering_ok"] = ordering
    out["within_tolerance"] = within
    if not args.json:
        print(f"{'FCs':>3}  {'params':>10}  {'vs ref':>8}  {'flops':>10}  {'vs ref':>8}")
        for r in rows:
            print(
                f"{r['fc_layers']:>3}  {_human(r['params']):>10}  {r['params_deviation']:>+8.2%}  "
                f"{_human(r['flops']):>10}  {r['flops_deviation']:>+8.2%}"
            )
        print(f"ordering params(1) > params(2) > params(3): {ordering}")
        print(f"all entries within {BUDGET_TOLERANCE:.0%} of reference: {within}")
    return ordering and within


def cmd_ablate(args) -> int:
    out: dict = {"kind": args.kind}
    runner = {
        "padding": _ablate_padding,
        "manner": _ablate_manner,
        "shift": _ablate_shift,
        "fc": _ablate_fc,
    }[args.kind]
    ok = runner(args, out)
    out["passed"] = ok
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        print(f"ablate {args.kind}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    if args.iters < BENCH_WARMUP + 1:
        raise UsageError(f"--iters must be >= {BENCH_WARMUP + 1} (5 warmup + 1 measured)")
    cfg = _load_config_arg(args.config)
    model = build_model(cfg, seed=args.seed)
    h, w = _parse_hwc(args.hw, 2)
    rng = np.random.default_rng(args.seed)
    batch = [rng.standard_normal((1, h, w, 3)).astype(np.float32) for _ in range(args.batch)]

    def run_batch() -> float:
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                outs = list(pool.map(lambda xb: np.asarray(forward(model, xb)), batch))
        else:
            outs = [np.asarray(forward(model, xb)) for xb in batch]
        return float(sum(o.sum() for o in outs))

    checksum = None
    times = []
    for i in range(BENCH_WARMUP + args.iters):
        t0 = time.perf_counter()
        cs = run_batch()
        dt = time.perf_counter() - t0
        if checksum is None:
            checksum = cs
        if i >= BENCH_WARMUP:
            times.append(dt)
    med = statistics.median(times)
    payload = {
        "config": cfg.meta.get("name", "?"),
        "resolution": [h, w],
        "batch": args.batch,
        "threads": args.threads,
        "iters": args.iters,
        "warmup": BENCH_WARMUP,
        "median_s_per_batch": med,
        "images_per_s": args.batch / med,
        "ms_per_image": 1000.0 * med / args.batch,
        "checksum": checksum,
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(
            f"{payload['config']} @ {h}x{w}, batch {args.batch}, threads {args.threads}: "
            f"{payload['images_per_s']:.2f} images/s "
            f"({payload['ms_per_image']:.1f} ms/image, median of {args.iters})  "
            f"checksum {checksum:+.5f}"
        )
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hiremlp",
        description="Hierarchical token-rearrangement vision MLP: inspection, inference, verification.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summary", help="per-stage table, totals, budget checks")
    p.add_argument("--config", required=True)
    p.add_argument("--hw", default="224x224", help="input resolution HxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_summary)

    p = sub.add_parser("forward", help="run inference on a raw tensor or seeded noise")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--input", default=None, help="raw tensor file (single unnamed tensor)")
    p.add_argument("--random", default=None, metavar="HxWxC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_forward)

    p = sub.add_parser("invariants", help="run registered property suites")
    p.add_argument("--scope", default="all", choices=["all", "tensor", "rearrange", "hire", "network", "accounting"])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_invariants)

    p = sub.add_parser("gradcheck", help="reverse-mode vs finite differences (64-bit)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=100)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ablate", help="structural/cost ablation comparisons")
    p.add_argument("kind", choices=["padding", "manner", "shift", "fc"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("bench", help="throughput benchmark (hardware-dependent, no target)")
    p.add_argument("--config", required=True)
    p.add_argument("--hw", default="224x224")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except HireMlpError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
