#!/usr/bin/env python3
"""Plug-and-play iteration under deliberately mis-specified fan distances.

Trains the toy model (or loads a checkpoint), perturbs the source and
detector distances by up to +-1%, then keeps iterating the trained stage
past its unfolded depth and prints the PSNR trace.
"""

import argparse

from sparsect.checkpoint import build_model, load_checkpoint
from sparsect.experiments import ToySpec, perturbed_pnp_psnr, toy_geometry, toy_splits, train_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", default=None,
                    help="reuse trained weights instead of training here")
    ap.add_argument("--views", type=int, default=15)
    ap.add_argument("--iters", type=int, default=20)
    ap.add_argument("--rel", type=float, default=0.01, help="distance perturbation bound")
    ap.add_argument("--seed", type=int, default=0, help="perturbation draw")
    ap.add_argument("--image-index", type=int, default=0, help="which test phantom")
    args = ap.parse_args()

    spec = ToySpec()
    _, _, test_imgs = toy_splits(seed=spec.seed)
    if args.checkpoint:
        model = build_model(toy_geometry(), load_checkpoint(args.checkpoint))
    else:
        print(f"# training toy model ({spec.steps} steps)")
        model, _ = train_toy(spec)

    trace = perturbed_pnp_psnr(
        model, test_imgs[args.image_index], q=args.views,
        n_iters=args.iters, rel=args.rel, seed=args.seed,
    )
    print("iter\tpsnr")
    for i, v in enumerate(trace):
        print(f"{i}\t{v:.4f}")


if __name__ == "__main__":
    main()
