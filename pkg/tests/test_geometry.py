import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsect.geometry import (
    GeometryError,
    Image,
    Sinogram,
    full_subset,
    geometry_from_config,
    geometry_preset,
    make_geometry,
    perturb_geometry,
    resolve_geometry,
    scaled_preset,
    sparse_subset,
)


class TestPresets:
    def test_fan_preset_fields(self):
        g = geometry_preset("fan-1024")
        assert g.beam == "fan"
        assert g.n_views_full == 1024
        assert g.n_det == 1024
        assert g.det_spacing == 2.0
        assert g.src_dist == 500.0 and g.det_dist == 500.0
        assert g.grid == (512, 512)
        assert g.pixel_size == pytest.approx(0.7)
        assert g.angular_range == pytest.approx(2 * np.pi)

    def test_parallel_preset_fields(self):
        g = geometry_preset("parallel-720")
        assert g.beam == "parallel"
        assert g.n_views_full == 720
        assert g.n_det == 729
        assert g.det_spacing == pytest.approx(0.7)
        assert g.grid == (512, 512)
        assert g.angular_range == pytest.approx(np.pi)

    def test_unknown_preset(self):
        with pytest.raises(GeometryError):
            geometry_preset("cone-9000")

    def test_view_angles_uniform_and_sorted(self):
        g = geometry_preset("parallel-720")
        d = np.diff(g.view_angles_full)
        assert np.allclose(d, d[0])
        assert g.view_angles_full[0] == 0.0

    def test_scaled_preset_keeps_counts_and_coverage(self):
        g = scaled_preset("parallel-720", (256, 256))
        assert g.n_views_full == 720
        assert g.n_det == 729
        assert g.grid == (256, 256)
        assert g.fov_radius >= g.support_radius - 1e-9

    def test_scaled_preset_fan_coverage(self):
        g = scaled_preset("fan-1024", (64, 64))
        assert g.beam == "fan"
        assert g.fov_radius >= g.support_radius - 1e-9


class TestValidation:
    def test_detector_span_must_cover_support(self):
        with pytest.raises(GeometryError):
            make_geometry("parallel", n_views=8, n_det=8, det_spacing=0.5,
                          grid=(16, 16), pixel_size=1.0)

    def test_fan_source_outside_support(self):
        with pytest.raises(GeometryError):
            make_geometry("fan", n_views=8, n_det=64, det_spacing=2.0,
                          grid=(16, 16), pixel_size=1.0, src_dist=5.0, det_dist=40.0)

    def test_positive_counts(self):
        with pytest.raises(GeometryError):
            make_geometry("parallel", n_views=0, n_det=8, det_spacing=1.0,
                          grid=(4, 4), pixel_size=1.0)

    def test_bad_beam_name(self):
        with pytest.raises(GeometryError):
            make_geometry("cone", n_views=8, n_det=32, det_spacing=1.0,
                          grid=(8, 8), pixel_size=1.0)

    def test_fan_requires_distances(self):
        with pytest.raises(GeometryError):
            make_geometry("fan", n_views=8, n_det=32, det_spacing=1.0,
                          grid=(8, 8), pixel_size=1.0)


class TestSubsets:
    def test_three_of_eight(self, tiny_parallel):
        g = make_geometry("parallel", n_views=8, n_det=13, det_spacing=1.0,
                          grid=(8, 8), pixel_size=1.0)
        assert sparse_subset(g, 3).indices.tolist() == [0, 2, 5]

    def test_full_subset_identity(self, tiny_parallel):
        s = full_subset(tiny_parallel)
        assert s.q1 == tiny_parallel.n_views_full
        assert s.indices.tolist() == list(range(tiny_parallel.n_views_full))

    def test_count_out_of_range(self, tiny_parallel):
        with pytest.raises(GeometryError):
            sparse_subset(tiny_parallel, 0)
        with pytest.raises(GeometryError):
            sparse_subset(tiny_parallel, tiny_parallel.n_views_full + 1)

    @given(n=st.integers(2, 512), q=st.integers(1, 512))
    @settings(max_examples=200, deadline=None)
    def test_decimation_properties(self, n, q):
        if q > n:
            q = 1 + q % n
        g = make_geometry("parallel", n_views=n, n_det=13, det_spacing=1.0,
                          grid=(8, 8), pixel_size=1.0)
        idx = sparse_subset(g, q).indices
        assert len(idx) == q
        assert idx[0] == 0
        assert (np.diff(idx) > 0).all()
        assert idx[-1] < n
        # uniform decimation: gaps differ by at most one
        if q > 1:
            gaps = np.diff(np.concatenate([idx, [n]]))
            assert gaps.max() - gaps.min() <= 1


class TestPerturbation:
    def test_fan_distances_move_within_bound(self, small_fan):
        pg = perturb_geometry(small_fan, rel=0.01, seed=7)
        assert pg.beam == "fan"
        assert abs(pg.src_dist / small_fan.src_dist - 1.0) <= 0.01
        assert abs(pg.det_dist / small_fan.det_dist - 1.0) <= 0.01
        assert (pg.src_dist, pg.det_dist) != (small_fan.src_dist, small_fan.det_dist)

    def test_deterministic_under_seed(self, small_fan):
        a = perturb_geometry(small_fan, rel=0.01, seed=3)
        b = perturb_geometry(small_fan, rel=0.01, seed=3)
        assert a.src_dist == b.src_dist and a.det_dist == b.det_dist

    def test_parallel_rejected(self, small_parallel):
        with pytest.raises(GeometryError):
            perturb_geometry(small_parallel, rel=0.01, seed=0)


class TestConfigFiles:
    CONFIG = """\
# toy fan layout
beam=fan
n_views=60
n_det=63
det_spacing_mm=1.6
src_dist_mm=60
det_dist_mm=60
grid_m1=32
grid_m2=32
pixel_size_mm=1.0
"""

    def test_round_trip(self, tmp_path):
        p = tmp_path / "g.cfg"
        p.write_text(self.CONFIG)
        g = geometry_from_config(p)
        assert g.beam == "fan" and g.n_views_full == 60 and g.n_det == 63
        assert g.det_spacing == pytest.approx(1.6)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "g.cfg"
        p.write_text(self.CONFIG + "tilt=3\n")
        with pytest.raises(GeometryError):
            geometry_from_config(p)

    def test_missing_key(self, tmp_path):
        p = tmp_path / "g.cfg"
        p.write_text("beam=parallel\n")
        with pytest.raises(GeometryError):
            geometry_from_config(p)

    def test_repeated_key(self, tmp_path):
        p = tmp_path / "g.cfg"
        p.write_text(self.CONFIG + "beam=fan\n")
        with pytest.raises(GeometryError):
            geometry_from_config(p)

    def test_resolve_dispatches(self, tmp_path):
        assert resolve_geometry("fan-1024").n_views_full == 1024
        p = tmp_path / "g.cfg"
        p.write_text(self.CONFIG)
        assert resolve_geometry(str(p)).n_views_full == 60


class TestContainers:
    def test_image_shape_checked(self, tiny_parallel):
        with pytest.raises(GeometryError):
            Image(np.zeros((4, 4)), tiny_parallel)

    def test_sinogram_shape_checked(self, tiny_parallel):
        s = sparse_subset(tiny_parallel, 5)
        with pytest.raises(GeometryError):
            Sinogram(np.zeros((4, tiny_parallel.n_det)), tiny_parallel, s)

    def test_sinogram_angles(self, tiny_parallel):
        s = sparse_subset(tiny_parallel, 5)
        y = Sinogram(np.zeros((5, tiny_parallel.n_det)), tiny_parallel, s)
        assert np.array_equal(y.angles, tiny_parallel.view_angles_full[s.indices])
