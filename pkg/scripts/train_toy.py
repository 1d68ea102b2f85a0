#!/usr/bin/env python3
"""Train the toy model and print held-out PSNR against FBP and FISTA-TV.

Runs the full desk-scale pipeline: phantom splits, 500-step training on a
{15, 30}-view schedule, lambda tuning for the FISTA-TV baseline, and a
per-view-count score table. A few minutes on one CPU core.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from sparsect.experiments import (
    ToySpec,
    eval_fbp,
    eval_fista,
    eval_model,
    toy_geometry,
    toy_splits,
    train_toy,
    tuned_fista_lambda,
)
from sparsect.fista import FistaConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=None, help="override ToySpec.steps")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--variant", default=None, help="channel subset a..g")
    ap.add_argument("--views", type=int, nargs="*", default=None,
                    help="evaluation view counts (default: the training schedule)")
    ap.add_argument("--checkpoint", default=None, help="save trained weights here")
    ap.add_argument("--log", default=None, help="training metrics TSV")
    args = ap.parse_args()

    spec = ToySpec()
    overrides = {
        k: getattr(args, k)
        for k in ("steps", "seed", "variant")
        if getattr(args, k) is not None
    }
    spec = replace(spec, **overrides)
    eval_views = tuple(args.views) if args.views else spec.schedule

    geom = toy_geometry()
    train_imgs, val_imgs, test_imgs = toy_splits(seed=spec.seed)
    print(f"# toy run: {len(train_imgs)} train / {len(val_imgs)} val / "
          f"{len(test_imgs)} test phantoms, spec {spec}")

    t0 = time.time()
    model, result = train_toy(spec, images=train_imgs,
                              log_path=args.log, checkpoint_path=args.checkpoint)
    print(f"# trained {spec.steps} steps in {time.time() - t0:.0f}s, "
          f"final loss {result.final_loss:.5f}")

    fista_cfg = FistaConfig(n_iters=100)
    rows = {}
    for q in eval_views:
        lam = tuned_fista_lambda(geom, val_imgs, q, cfg=fista_cfg)
        print(f"# fista-tv lambda at {q} views: {lam:g}")
        rows[q] = {
            "fbp": np.mean(eval_fbp(geom, test_imgs, q)),
            "fista-tv": np.mean(eval_fista(geom, test_imgs, q, lam, fista_cfg)),
            "model": np.mean(eval_model(model, test_imgs, q)),
        }

    print("method\t" + "\t".join(f"psnr@{q}" for q in eval_views))
    for m in ("fbp", "fista-tv", "model"):
        print(m + "\t" + "\t".join(f"{rows[q][m]:.2f}" for q in eval_views))


if __name__ == "__main__":
    main()
