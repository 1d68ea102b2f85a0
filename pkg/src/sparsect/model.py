"""Unfolded reconstruction network: error channels in, corrected image out.

One stage projects the running estimate, turns residuals into image-domain
error channels, and feeds them through the multigrid-style correction
network. Stages share parameters by default; the per-view-count operator
handles live in a registry so a trained model can be pointed at view counts
it never saw during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .correction import (
    CorrectionConfig,
    apply_correction,
    init_params,
    wrap_params,
)
from .fbp import FbpOperator
from .geometry import (
    GeometryError,
    Image,
    ScanGeometry,
    Sinogram,
    ViewSubset,
    full_subset,
    sparse_subset,
)
from .projector import JosephProjector
from .refine import (
    OperatorBundle,
    StageContext,
    assemble_stack,
    build_bundle,
    build_context,
    stack_width,
    variant_groups,
)


def geometries_compatible(a: ScanGeometry, b: ScanGeometry) -> bool:
    return (
        a.beam == b.beam
        and a.n_views_full == b.n_views_full
        and a.n_det == b.n_det
        and a.grid == b.grid
        and a.det_spacing == b.det_spacing
        and a.pixel_size == b.pixel_size
        and a.src_dist == b.src_dist
        and a.det_dist == b.det_dist
        and np.array_equal(a.view_angles_full, b.view_angles_full)
    )


@dataclass(eq=False)
class PnpTrajectory:
    """Recorded iterates of repeated stage application."""

    images: list[np.ndarray]
    metrics: list[float] | None


class ReconNet:
    """Stage-unfolded sparse-view reconstructor over one scan geometry."""

    def __init__(
        self,
        geom: ScanGeometry,
        width: int = 32,
        depth: int = 5,
        n_stages: int = 7,
        variant: str = "g",
        seed: int = 0,
        share_stage_params: bool = True,
        zero_init_image: bool = False,
        leaky_slope: float = 0.01,
    ):
        if n_stages < 1:
            raise ValueError("need at least one stage")
        self.geom = geom
        self.groups = variant_groups(variant)
        self.variant = variant
        self.cfg = CorrectionConfig(
            width=width, depth=depth,
            c_in=stack_width(self.groups), leaky_slope=leaky_slope,
        )
        self.n_stages = n_stages
        self.share_stage_params = share_stage_params
        n_sets = 1 if share_stage_params else n_stages
        self.param_sets = [init_params(self.cfg, seed + i) for i in range(n_sets)]
        self.zero_init_image = zero_init_image
        fs = full_subset(geom)
        self._full_ops = (JosephProjector(geom, fs), FbpOperator(geom, fs))
        self._bundles: dict[int, OperatorBundle] = {}

    # -- parameters ----------------------------------------------------------

    @property
    def param_count(self) -> int:
        return sum(int(a.size) for ps in self.param_sets for a in ps.values())

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Flat view across parameter sets; arrays are shared, not copied."""
        return {
            f"p{i}.{name}": arr
            for i, ps in enumerate(self.param_sets)
            for name, arr in ps.items()
        }

    def _params_for_stage(self, stage: int):
        return self.param_sets[0 if self.share_stage_params else stage]

    def with_geometry(self, geom: ScanGeometry) -> "ReconNet":
        """Same weights (copied) bound to a different scan layout."""
        twin = ReconNet(
            geom,
            width=self.cfg.width,
            depth=self.cfg.depth,
            n_stages=self.n_stages,
            variant=self.variant,
            share_stage_params=self.share_stage_params,
            zero_init_image=self.zero_init_image,
            leaky_slope=self.cfg.leaky_slope,
        )
        twin.param_sets = [{k: v.copy() for k, v in ps.items()} for ps in self.param_sets]
        return twin

    # -- geometry registry -----------------------------------------------------

    def register_views(self, subset_or_count: ViewSubset | int) -> OperatorBundle:
        """Build (or fetch) the operator bundle for a view subset.

        Registering a different subset under an already-registered view
        count is an error; re-registering the same one is a no-op.
        """
        if isinstance(subset_or_count, int):
            subset = sparse_subset(self.geom, subset_or_count)
        else:
            subset = subset_or_count
            if subset.indices[-1] >= self.geom.n_views_full:
                raise GeometryError("subset index exceeds the full view count")
        key = subset.q1
        have = self._bundles.get(key)
        if have is not None:
            if not np.array_equal(have.subset.indices, subset.indices):
                raise GeometryError(
                    f"view count {key} already registered with different indices"
                )
            return have
        bundle = build_bundle(self.geom, subset, self._full_ops)
        self._bundles[key] = bundle
        return bundle

    @property
    def registered_view_counts(self) -> tuple[int, ...]:
        return tuple(sorted(self._bundles))

    # -- forward -------------------------------------------------------------

    def _context(self, y: Sinogram) -> StageContext:
        if not geometries_compatible(y.geom, self.geom):
            raise GeometryError("sinogram geometry does not match the model's")
        bundle = self.register_views(y.subset)
        return build_context(y, bundle)

    def _initial(self, tape: ad.Tape, ctx: StageContext) -> ad.TensorNode:
        if self.zero_init_image:
            return tape.constant(np.zeros(self.geom.grid))
        return tape.constant(ctx.x0)

    def forward_graph(self, y: Sinogram, tape: ad.Tape):
        """Differentiable forward pass.

        Returns (output node, list of parameter-node dicts, stage context).
        Parameter nodes are created once and reused per stage when shared,
        so backward sums gradient contributions across stages.
        """
        ctx = self._context(y)
        pnode_sets = [wrap_params(tape, ps) for ps in self.param_sets]
        x = self._initial(tape, ctx)
        for stage in range(self.n_stages):
            pn = pnode_sets[0 if self.share_stage_params else stage]
            stack = assemble_stack(x, ctx, self.groups)
            x = apply_correction(stack, pn, self.cfg)
        return x, pnode_sets, ctx

    def forward(self, y: Sinogram) -> Image:
        """Reconstruct; inference only, gradients discarded."""
        tape = ad.Tape()
        node, _, _ = self.forward_graph(y, tape)
        return Image(node.value, self.geom)

    # -- plug-and-play iteration ------------------------------------------------

    def run_pnp(self, y: Sinogram, max_iters: int, metric=None) -> PnpTrajectory:
        """Apply the trained stage repeatedly, past the unfolded depth.

        The first n_stages iterates reproduce forward() exactly. `metric`,
        if given, is called with each image (initialization included) and
        its values are recorded alongside.
        """
        ctx = self._context(y)
        tape = ad.Tape()
        pnode_sets = [
            {name: tape.constant(arr) for name, arr in ps.items()}
            for ps in self.param_sets
        ]
        x = self._initial(tape, ctx)
        images = [x.value.copy()]
        for it in range(max_iters):
            idx = 0 if self.share_stage_params else min(it, len(pnode_sets) - 1)
            stack = assemble_stack(x, ctx, self.groups)
            x = apply_correction(stack, pnode_sets[idx], self.cfg)
            images.append(x.value.copy())
        metrics = None if metric is None else [float(metric(im)) for im in images]
        return PnpTrajectory(images=images, metrics=metrics)
