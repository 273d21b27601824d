#!/usr/bin/env python3
"""Budget reconstruction report: every variant and the FC-depth sweep vs
the published reference totals at 224x224."""

import sys

from hiremlp.accounting import ablation_cost_sweep, count_config
from hiremlp.variants import (
    BUDGET_TOLERANCE,
    FC_SWEEP_REFERENCE,
    REFERENCE_BUDGETS,
    VARIANTS,
    small_config,
)


def human(n: float) -> str:
    return f"{n / 1e6:.2f}M" if n < 1e9 else f"{n / 1e9:.3f}G"


def main() -> int:
    failed = False
    print(f"{'variant':>8}  {'params':>10} {'ref':>8} {'dev':>8}  {'flops':>10} {'ref':>8} {'dev':>8}")
    for name in ("tiny", "small", "base", "large"):
        rep = count_config(VARIANTS[name](), 224, 224)
        ref_p, ref_f = REFERENCE_BUDGETS[name]
        dp, df = rep.params / ref_p - 1, rep.flops / ref_f - 1
        failed |= abs(dp) > BUDGET_TOLERANCE or abs(df) > BUDGET_TOLERANCE
        print(
            f"{name:>8}  {human(rep.params):>10} {human(ref_p):>8} {dp:>+8.2%}"
            f"  {human(rep.flops):>10} {human(ref_f):>8} {df:>+8.2%}"
        )

    print("\nbottleneck FC-depth sweep (small):")
    print(f"{'FCs':>4}  {'params':>10} {'ref':>8} {'dev':>8}  {'flops':>10} {'ref':>8} {'dev':>8}")
    for n, rep in ablation_cost_sweep(small_config()):
        ref_p, ref_f = FC_SWEEP_REFERENCE[n]
        dp, df = rep.params / ref_p - 1, rep.flops / ref_f - 1
        failed |= abs(dp) > BUDGET_TOLERANCE or abs(df) > BUDGET_TOLERANCE
        print(
            f"{n:>4}  {human(rep.params):>10} {human(ref_p):>8} {dp:>+8.2%}"
            f"  {human(rep.flops):>10} {human(ref_f):>8} {df:>+8.2%}"
        )
    print(f"\nall within {BUDGET_TOLERANCE:.0%}: {not failed}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
