import numpy as np
import pytest

from microexpr.flow import FlowField
from microexpr.strain import StrainError, compute_strain, strain_image_from_flow, strain_magnitude


def coordinate_grids(side=16):
    y, x = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float),
                       indexing="ij")
    return x, y


class TestComputeStrain:
    def test_translation_gives_zero(self):
        f = FlowField(np.full((12, 12), 1.7), np.full((12, 12), -0.4))
        t = compute_strain(f)
        for comp in (t.e_xx, t.e_yy, t.e_xy, t.e_yx):
            assert np.abs(comp).max() < 1e-9

    def test_rigid_rotation_annihilated(self):
        x, y = coordinate_grids()
        omega = 0.3
        t = compute_strain(FlowField(-omega * y, omega * x))
        interior = (slice(1, -1), slice(1, -1))
        for comp in (t.e_xx, t.e_yy, t.e_xy, t.e_yx):
            assert np.abs(comp[interior]).max() < 1e-6

    def test_stretch_field(self):
        x, _ = coordinate_grids()
        t = compute_strain(FlowField(0.1 * x, np.zeros_like(x)))
        interior = (slice(1, -1), slice(1, -1))
        np.testing.assert_allclose(t.e_xx[interior], 0.1, atol=1e-6)
        assert np.abs(t.e_yy[interior]).max() < 1e-6
        assert np.abs(t.e_xy[interior]).max() < 1e-6

    def test_shear_components_bit_identical(self):
        rng = np.random.default_rng(0)
        t = compute_strain(FlowField(rng.normal(size=(9, 9)), rng.normal(size=(9, 9))))
        assert t.e_xy is t.e_yx

    def test_rigid_motion_property(self):
        x, y = coordinate_grids()
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = rng.uniform(-3, 3, size=2)
            omega = rng.uniform(-1, 1)
            t = compute_strain(FlowField(a - omega * y, b + omega * x))
            s = strain_magnitude(t)
            assert np.abs(s.s[1:-1, 1:-1]).max() < 1e-6

    def test_scaling_equivariance_power_of_two_exact(self):
        rng = np.random.default_rng(5)
        p, q = rng.normal(size=(9, 9)), rng.normal(size=(9, 9))
        base = compute_strain(FlowField(p, q))
        scaled = compute_strain(FlowField(2.0 * p, 2.0 * q))
        np.testing.assert_array_equal(scaled.e_xx, 2.0 * base.e_xx)
        np.testing.assert_array_equal(scaled.e_yy, 2.0 * base.e_yy)
        np.testing.assert_array_equal(scaled.e_xy, 2.0 * base.e_xy)

    def test_scaling_equivariance_general(self):
        rng = np.random.default_rng(6)
        p, q = rng.normal(size=(9, 9)), rng.normal(size=(9, 9))
        base = compute_strain(FlowField(p, q))
        scaled = compute_strain(FlowField(0.37 * p, 0.37 * q))
        np.testing.assert_allclose(scaled.e_xx, 0.37 * base.e_xx, rtol=1e-12, atol=1e-15)

    def test_too_small_rejected(self):
        with pytest.raises(StrainError):
            compute_strain(FlowField(np.zeros((2, 5)), np.zeros((2, 5))))


class TestStrainMagnitude:
    def test_shear_field_value(self):
        _, y = coordinate_grids()
        s = strain_image_from_flow(FlowField(0.2 * y, np.zeros_like(y)))
        np.testing.assert_allclose(s.s[1:-1, 1:-1], np.sqrt(0.02), atol=1e-5)

    def test_zero_tensor(self):
        s = strain_image_from_flow(FlowField(np.zeros((8, 8)), np.zeros((8, 8))))
        np.testing.assert_array_equal(s.s, 0.0)

    def test_three_four_five(self):
        t = compute_strain(FlowField(np.zeros((8, 8)), np.zeros((8, 8))))
        t.e_xx = np.full((8, 8), 0.3)
        t.e_yy = np.full((8, 8), 0.4)
        s = strain_magnitude(t)
        np.testing.assert_allclose(s.s, 0.5, atol=1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(7)
        s = strain_image_from_flow(FlowField(rng.normal(size=(10, 10)),
                                             rng.normal(size=(10, 10))))
        assert (s.s >= 0).all()
