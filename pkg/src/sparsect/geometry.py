"""Scan geometries, view subsets, and the domain types they stamp.

All lengths are millimetres, all angles radians. Images are (m1, m2) arrays
indexed [row, col]; sinograms are (n_views, n_det) with one row per view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

PARALLEL = "parallel"
FAN = "fan"


class GeometryError(ValueError):
    """Raised for inconsistent or physically invalid scan descriptions."""


@dataclass(frozen=True, eq=False)
class ScanGeometry:
    """Fixed acquisition description for one 2-D scan configuration.

    ``view_angles_full`` covers [0, pi) for parallel beam and [0, 2*pi) for
    fan beam, strictly increasing. ``src_dist``/``det_dist`` are the
    source-to-isocenter and isocenter-to-detector distances (fan only).
    """

    beam: str
    n_views_full: int
    view_angles_full: np.ndarray
    n_det: int
    det_spacing: float
    grid: tuple[int, int]
    pixel_size: float
    src_dist: float | None = None
    det_dist: float | None = None

    def __post_init__(self):
        if self.beam not in (PARALLEL, FAN):
            raise GeometryError(f"unknown beam type {self.beam!r}")
        if self.n_views_full < 1 or self.n_det < 2:
            raise GeometryError("need at least 1 view and 2 detector cells")
        if self.det_spacing <= 0 or self.pixel_size <= 0:
            raise GeometryError("spacings must be positive")
        m1, m2 = self.grid
        if m1 < 1 or m2 < 1:
            raise GeometryError("grid dimensions must be positive")
        ang = np.asarray(self.view_angles_full, dtype=np.float64)
        object.__setattr__(self, "view_angles_full", ang)
        if ang.shape != (self.n_views_full,):
            raise GeometryError("angle count does not match n_views_full")
        if np.any(np.diff(ang) <= 0):
            raise GeometryError("view angles must be strictly increasing")
        if ang[0] < 0 or ang[-1] >= self.angular_range + 1e-12:
            raise GeometryError("view angles outside the angular range")
        if self.beam == FAN:
            if self.src_dist is None or self.det_dist is None:
                raise GeometryError("fan beam needs src_dist and det_dist")
            if self.src_dist <= 0 or self.det_dist < 0:
                raise GeometryError("fan distances must be positive")
            if self.src_dist <= self.support_radius:
                raise GeometryError("source inside the object support")
        if self.fov_radius < self.support_radius - 1e-9:
            raise GeometryError(
                f"detector span covers a field of view of radius "
                f"{self.fov_radius:.2f} mm but the image support needs "
                f"{self.support_radius:.2f} mm"
            )

    @property
    def angular_range(self) -> float:
        return math.pi if self.beam == PARALLEL else 2.0 * math.pi

    @property
    def support_radius(self) -> float:
        """Radius of the circle circumscribing the pixel grid, in mm."""
        m1, m2 = self.grid
        return 0.5 * math.hypot(m1, m2) * self.pixel_size

    @property
    def fov_radius(self) -> float:
        """Radius of the region every view sees in full, in mm."""
        half_span = 0.5 * self.n_det * self.det_spacing
        if self.beam == PARALLEL:
            return half_span
        # Fan rays to the panel edge are tangent to the FOV circle.
        return self.src_dist * half_span / math.hypot(
            half_span, self.src_dist + self.det_dist
        )

    @property
    def det_offsets(self) -> np.ndarray:
        """Signed detector-cell center offsets along the panel, in mm."""
        k = np.arange(self.n_det, dtype=np.float64)
        return (k - 0.5 * (self.n_det - 1)) * self.det_spacing


@dataclass(frozen=True, eq=False)
class ViewSubset:
    """Strictly increasing view indices selecting q1 of the full views."""

    indices: np.ndarray
    q1: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1 or idx.size == 0:
            raise GeometryError("subset needs at least one view index")
        if self.q1 != idx.size:
            raise GeometryError("q1 does not match the index count")
        if idx[0] < 0 or np.any(np.diff(idx) <= 0):
            raise GeometryError("subset indices must be strictly increasing")


@dataclass(frozen=True, eq=False)
class Image:
    """Pixel grid tied to the geometry it was reconstructed on."""

    data: np.ndarray
    geom: ScanGeometry

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        object.__setattr__(self, "data", d)
        if d.shape != self.geom.grid:
            raise GeometryError(
                f"image shape {d.shape} does not match grid {self.geom.grid}"
            )


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Per-view detector rows for a (possibly sparse) set of views."""

    data: np.ndarray
    geom: ScanGeometry
    subset: ViewSubset

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        object.__setattr__(self, "data", d)
        if self.subset.indices[-1] >= self.geom.n_views_full:
            raise GeometryError("subset index exceeds the full view count")
        if d.shape != (self.subset.q1, self.geom.n_det):
            raise GeometryError(
                f"sinogram shape {d.shape} does not match "
                f"({self.subset.q1}, {self.geom.n_det})"
            )

    @property
    def angles(self) -> np.ndarray:
        return self.geom.view_angles_full[self.subset.indices]


def make_geometry(
    beam: str,
    n_views: int,
    n_det: int,
    det_spacing: float,
    grid: tuple[int, int],
    pixel_size: float,
    src_dist: float | None = None,
    det_dist: float | None = None,
) -> ScanGeometry:
    """Build a geometry with uniformly spaced views over the beam's range."""
    rng = math.pi if beam == PARALLEL else 2.0 * math.pi
    angles = np.arange(n_views, dtype=np.float64) * (rng / max(n_views, 1))
    return ScanGeometry(
        beam=beam,
        n_views_full=n_views,
        view_angles_full=angles,
        n_det=n_det,
        det_spacing=float(det_spacing),
        grid=(int(grid[0]), int(grid[1])),
        pixel_size=float(pixel_size),
        src_dist=None if src_dist is None else float(src_dist),
        det_dist=None if det_dist is None else float(det_dist),
    )


def full_subset(geom: ScanGeometry) -> ViewSubset:
    """Subset selecting every view."""
    return ViewSubset(np.arange(geom.n_views_full), geom.n_views_full)


def sparse_subset(geom: ScanGeometry, q1: int) -> ViewSubset:
    """Decimate the full view set to q1 views: index k -> floor(k*n/q1)."""
    if not 1 <= q1 <= geom.n_views_full:
        raise GeometryError(
            f"q1 must be in [1, {geom.n_views_full}], got {q1}"
        )
    k = np.arange(q1, dtype=np.int64)
    idx = (k * geom.n_views_full) // q1
    return ViewSubset(idx, q1)


def perturb_geometry(geom: ScanGeometry, rel: float, seed: int) -> ScanGeometry:
    """Scale fan src/det distances by independent factors in [1-rel, 1+rel]."""
    if geom.beam != FAN:
        raise GeometryError("only fan geometries have distances to perturb")
    rng = np.random.default_rng(seed)
    f_src, f_det = rng.uniform(1.0 - rel, 1.0 + rel, size=2)
    return replace(
        geom, src_dist=geom.src_dist * f_src, det_dist=geom.det_dist * f_det
    )


# ---------------------------------------------------------------------------
# presets and text config
# ---------------------------------------------------------------------------

def _preset_fan_1024() -> ScanGeometry:
    return make_geometry(
        FAN, n_views=1024, n_det=1024, det_spacing=2.0,
        grid=(512, 512), pixel_size=0.7, src_dist=500.0, det_dist=500.0,
    )


def _preset_parallel_720() -> ScanGeometry:
    return make_geometry(
        PARALLEL, n_views=720, n_det=729, det_spacing=0.7,
        grid=(512, 512), pixel_size=0.7,
    )


PRESETS = {
    "fan-1024": _preset_fan_1024,
    "parallel-720": _preset_parallel_720,
}


def geometry_preset(name: str) -> ScanGeometry:
    try:
        return PRESETS[name]()
    except KeyError:
        raise GeometryError(
            f"unknown preset {name!r}; have {sorted(PRESETS)}"
        ) from None


def scaled_preset(name: str, grid: tuple[int, int]) -> ScanGeometry:
    """Preset re-targeted to a different grid, coverage margin preserved.

    View and detector counts stay at the preset's values; detector pitch
    (and fan distances) scale with the physical grid diagonal so relative
    sampling and the FOV margin stay put.
    """
    base = geometry_preset(name)
    m1, m2 = int(grid[0]), int(grid[1])
    ratio = math.hypot(m1, m2) / math.hypot(*base.grid)
    if base.beam == PARALLEL:
        return make_geometry(
            PARALLEL, base.n_views_full, base.n_det, base.det_spacing * ratio,
            (m1, m2), base.pixel_size,
        )
    return make_geometry(
        FAN, base.n_views_full, base.n_det, base.det_spacing * ratio,
        (m1, m2), base.pixel_size,
        src_dist=base.src_dist * ratio, det_dist=base.det_dist * ratio,
    )


_CONFIG_KEYS = {
    "beam": str,
    "n_views": int,
    "n_det": int,
    "det_spacing_mm": float,
    "src_dist_mm": float,
    "det_dist_mm": float,
    "grid_m1": int,
    "grid_m2": int,
    "pixel_size_mm": float,
}


def geometry_from_config(path: str | Path) -> ScanGeometry:
    """Parse a line-oriented key=value geometry description.

    Blank lines and '#' comments are ignored; unknown or repeated keys are
    errors, as are missing required keys.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise GeometryError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_KEYS:
            raise GeometryError(f"{path}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise GeometryError(f"{path}:{lineno}: repeated key {key!r}")
        raw[key] = val

    required = {"beam", "n_views", "n_det", "det_spacing_mm",
                "grid_m1", "grid_m2", "pixel_size_mm"}
    missing = required - raw.keys()
    if missing:
        raise GeometryError(f"{path}: missing keys {sorted(missing)}")

    vals: dict[str, object] = {}
    for key, text in raw.items():
        try:
            vals[key] = _CONFIG_KEYS[key](text)
        except ValueError:
            raise GeometryError(
                f"{path}: bad value {text!r} for {key}"
            ) from None

    beam = vals["beam"]
    if beam == FAN and not {"src_dist_mm", "det_dist_mm"} <= vals.keys():
        raise GeometryError(f"{path}: fan beam needs src_dist_mm/det_dist_mm")
    return make_geometry(
        beam=beam,
        n_views=vals["n_views"],
        n_det=vals["n_det"],
        det_spacing=vals["det_spacing_mm"],
        grid=(vals["grid_m1"], vals["grid_m2"]),
        pixel_size=vals["pixel_size_mm"],
        src_dist=vals.get("src_dist_mm"),
        det_dist=vals.get("det_dist_mm"),
    )


def resolve_geometry(spec: str) -> ScanGeometry:
    """Accept either a preset name or a path to a text config."""
    if spec in PRESETS:
        return geometry_preset(spec)
    if Path(spec).exists():
        return geometry_from_config(spec)
    raise GeometryError(
        f"{spec!r} is neither a preset ({sorted(PRESETS)}) nor a config file"
    )
