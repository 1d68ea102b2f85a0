#!/usr/bin/env python3
"""Train every channel-subset variant on the toy setup and print the table.

Each variant keeps the previous-iterate channel and adds a different slice
of the error channels; all seven train with identical data, schedule, and
optimizer settings so the column differences isolate the channel choice.
Expect ~5 minutes per variant at the default step count.
"""

import argparse
from dataclasses import replace

from sparsect.experiments import ToySpec, run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variants", default="a,b,c,d,e,f,g")
    ap.add_argument("--steps", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="also write the TSV here")
    args = ap.parse_args()

    spec = ToySpec()
    overrides = {
        k: getattr(args, k) for k in ("steps", "seed") if getattr(args, k) is not None
    }
    spec = replace(spec, **overrides)

    rows = run_ablation(args.variants.split(","), spec)
    views = sorted(rows[0].psnr_by_views)
    lines = ["variant\t" + "\t".join(f"psnr@{q}" for q in views)]
    for r in rows:
        lines.append(r.variant + "\t"
                     + "\t".join(f"{r.psnr_by_views[q]:.4f}" for q in views))
    text = "\n".join(lines)
    print(text)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")


if __name__ == "__main__":
    main()
