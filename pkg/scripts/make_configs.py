#!/usr/bin/env python3
"""Regenerate configs/*.json from the programmatic variant definitions."""

import sys
from pathlib import Path

from hiremlp.network import save_config
from hiremlp.variants import VARIANTS


def main() -> int:
    out_dir = Path(__file__).resolve().parent.parent / "configs"
    out_dir.mkdir(exist_ok=True)
    for name, factory in VARIANTS.items():
        path = out_dir / f"{name}.json"
        save_config(factory(), path)
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
