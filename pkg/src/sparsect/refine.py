"""Projection-error channels computed per unfolding stage.

Every channel is an image built from linear tomographic operators, so the
whole stack is differentiable through `autodiff.linear_op`. Reconstruction
FBPs stand in for the projector transpose throughout (the exact adjoint
exists separately for gradients). Channel names, in stack order:

  x_prev    current image estimate entering the stage
  x_interp  FBP of the view-interpolated sparse sinogram (data only)
  e_interp  FBP residual between interpolated and reprojected full views
  e_full_x  full-view reprojection error of x
  e_full_r  full-view reprojection error of the refined estimate
  e_data    sparse-view data residual, fbp_s(y_s - P_s x)
  e_null    sparse-view reprojection error of x
  e_null_r  sparse-view reprojection error of the refined estimate

The refined estimate is r = x + e_data - e_null. Optional channel groups
("interp", "full", "data", "null") gate which are computed; x_prev is
always present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .fbp import FbpOperator, ViewUpsampler
from .geometry import (
    GeometryError,
    ScanGeometry,
    Sinogram,
    ViewSubset,
    full_subset,
)
from .projector import JosephProjector

CHANNEL_ORDER = (
    "x_prev", "x_interp", "e_interp", "e_full_x",
    "e_full_r", "e_data", "e_null", "e_null_r",
)

ALL_GROUPS = frozenset(("interp", "full", "data", "null"))

# Channel-group combinations studied by the input ablation; the key is the
# variant tag used on the command line.
VARIANTS = {
    "a": frozenset(),
    "b": frozenset(("interp",)),
    "c": frozenset(("interp", "full")),
    "d": frozenset(("interp", "full", "data")),
    "e": frozenset(("data",)),
    "f": frozenset(("data", "null")),
    "g": ALL_GROUPS,
}

_GROUP_WIDTH = {"interp": 2, "full": 2, "data": 1, "null": 2}


def stack_width(groups: frozenset[str]) -> int:
    return 1 + sum(_GROUP_WIDTH[g] for g in groups)


def variant_groups(variant: str) -> frozenset[str]:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; have a..g") from None


@dataclass(eq=False)
class OperatorBundle:
    """Sparse- and full-view operator handles for one view subset."""

    geom: ScanGeometry
    subset: ViewSubset
    proj_s: JosephProjector
    fbp_s: FbpOperator
    upsampler: ViewUpsampler
    proj_f: JosephProjector
    fbp_f: FbpOperator


def build_bundle(
    geom: ScanGeometry,
    subset: ViewSubset,
    full_ops: tuple[JosephProjector, FbpOperator] | None = None,
) -> OperatorBundle:
    """Assemble operators for a subset; full-view handles may be shared."""
    if full_ops is None:
        fs = full_subset(geom)
        full_ops = (JosephProjector(geom, fs), FbpOperator(geom, fs))
    return OperatorBundle(
        geom=geom,
        subset=subset,
        proj_s=JosephProjector(geom, subset),
        fbp_s=FbpOperator(geom, subset),
        upsampler=ViewUpsampler(geom, subset),
        proj_f=full_ops[0],
        fbp_f=full_ops[1],
    )


@dataclass(eq=False)
class StageContext:
    """Measurement-dependent quantities shared by every stage.

    x0 is the sparse-view FBP of the data; x_interp is the FBP of the
    view-interpolated sinogram. Both depend only on (y_s, geometry), so
    they are computed once per forward pass, not per stage.
    """

    bundle: OperatorBundle
    y_s: np.ndarray
    x0: np.ndarray
    x_interp: np.ndarray


def build_context(y: Sinogram, bundle: OperatorBundle) -> StageContext:
    if not np.array_equal(y.subset.indices, bundle.subset.indices):
        raise GeometryError("sinogram subset does not match the operator bundle")
    x0 = bundle.fbp_s.apply(y.data)
    x_interp = bundle.fbp_f.apply(bundle.upsampler.apply(y.data))
    return StageContext(bundle=bundle, y_s=y.data, x0=x0, x_interp=x_interp)


def stage_channels(
    x: ad.TensorNode, ctx: StageContext, groups: frozenset[str] = ALL_GROUPS
) -> dict[str, ad.TensorNode]:
    """Compute the enabled channels as graph nodes; x is the stage input."""
    b, tape = ctx.bundle, x.tape
    out: dict[str, ad.TensorNode] = {"x_prev": x}
    need_full = "full" in groups
    need_null = "null" in groups
    need_interp = "interp" in groups
    need_refined = need_full or need_null
    need_data_res = need_refined or need_null or ("data" in groups)

    ps_x = None
    if need_data_res or need_interp:
        ps_x = ad.linear_op(x, b.proj_s)
    pf_x = None
    if need_full or need_interp:
        pf_x = ad.linear_op(x, b.proj_f)

    if need_data_res:
        back = ad.linear_op(ps_x, b.fbp_s)
        e_data = tape.constant(ctx.x0) - back
        e_null = x - back
    if need_refined:
        refined = (x + e_data) - e_null
    if need_interp:
        out["x_interp"] = tape.constant(ctx.x_interp)
        interp = ad.linear_op(ps_x, b.upsampler)
        out["e_interp"] = ad.linear_op(interp - pf_x, b.fbp_f)
    if need_full:
        out["e_full_x"] = x - ad.linear_op(pf_x, b.fbp_f)
        pf_r = ad.linear_op(refined, b.proj_f)
        out["e_full_r"] = refined - ad.linear_op(pf_r, b.fbp_f)
    if "data" in groups:
        out["e_data"] = e_data
    if need_null:
        ps_r = ad.linear_op(refined, b.proj_s)
        out["e_null"] = e_null
        out["e_null_r"] = refined - ad.linear_op(ps_r, b.fbp_s)
    return out


def assemble_stack(
    x: ad.TensorNode, ctx: StageContext, groups: frozenset[str] = ALL_GROUPS
) -> ad.TensorNode:
    """Concatenate the enabled channels into a (c, H, W) stack node."""
    chans = stage_channels(x, ctx, groups)
    h, w = x.value.shape
    parts = [
        ad.reshape(chans[name], (1, h, w))
        for name in CHANNEL_ORDER
        if name in chans
    ]
    return ad.concat_channels(parts)


def stage_channel_arrays(
    x: np.ndarray, ctx: StageContext, groups: frozenset[str] = ALL_GROUPS
) -> dict[str, np.ndarray]:
    """Channel values for a plain image array (no gradient bookkeeping)."""
    tape = ad.Tape()
    nodes = stage_channels(tape.constant(x), ctx, groups)
    return {name: node.value for name, node in nodes.items()}
