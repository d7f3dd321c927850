import numpy as np
import pytest

from corrugate.errors import InputError
from corrugate.grid import (
    ImmersionField,
    MetricField,
    PeriodicGrid,
    ScalarField,
    spectral_derivative,
)
from corrugate.smoothing import (
    DEFAULT_KERNEL,
    calibration_field,
    estimate_bench,
    smooth,
    smooth_eps_derivative,
)

# measured on the deterministic calibration field (res 256, eps = 2^-1..2^-6)
# and frozen as regression ceilings; the 64 policy bound stays far above
FROZEN_CEILINGS = {
    ("b", 2, 0): 0.18,
    ("c", 2, 0): 0.17,
    ("b", 3, 1): 0.09,
    ("c", 3, 1): 0.24,
    ("c", 0, 2): 1.25,
    ("d", 0, 2): 0.41,
}


class TestKernel:
    def test_unit_at_origin(self):
        assert DEFAULT_KERNEL.multiplier(0.0) == pytest.approx(1.0)

    def test_flat_region(self):
        s = np.linspace(0.0, 0.5, 20)
        assert np.all(DEFAULT_KERNEL.multiplier(s) == 1.0)
        assert np.all(DEFAULT_KERNEL.multiplier_derivative(s) == 0.0)

    def test_compact_support(self):
        s = np.linspace(1.0, 5.0, 20)
        assert np.all(DEFAULT_KERNEL.multiplier(s) == 0.0)

    def test_monotone_transition(self):
        s = np.linspace(0.5, 1.0, 200)
        m = DEFAULT_KERNEL.multiplier(s)
        assert np.all(np.diff(m) <= 0.0)


class TestSmooth:
    def test_constant_unchanged(self):
        grid = PeriodicGrid((64,))
        f = ScalarField.constant(grid, 2.2)
        for eps in (0.01, 0.3, 1.0):
            assert np.max(np.abs(smooth(f, eps).values - 2.2)) <= 1e-14

    def test_flat_region_mode_unchanged(self):
        grid = PeriodicGrid((64,))
        f = ScalarField.from_function(grid, lambda x: np.cos(4 * x))
        out = smooth(f, 1.0 / 16.0)
        assert np.max(np.abs(out.values - f.values)) <= 1e-13

    def test_cutoff_mode_annihilated(self):
        grid = PeriodicGrid((64,))
        f = ScalarField.from_function(grid, lambda x: np.cos(4 * x))
        out = smooth(f, 0.5)
        assert np.max(np.abs(out.values)) <= 1e-13

    def test_eps_validation(self):
        grid = PeriodicGrid((16,))
        f = ScalarField.constant(grid, 1.0)
        for eps in (0.0, -0.5, 1.5):
            with pytest.raises(InputError):
                smooth(f, eps)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        grid = PeriodicGrid((64,))
        f = ScalarField(grid, rng.normal(size=grid.shape))
        g = ScalarField(grid, rng.normal(size=grid.shape))
        a, b = 2.5, -1.25
        lhs = smooth(ScalarField(grid, a * f.values + b * g.values), 0.3).values
        rhs = a * smooth(f, 0.3).values + b * smooth(g, 0.3).values
        scale = np.max(np.abs(rhs)) + 1.0
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale

    def test_commutes_with_differentiation(self):
        rng = np.random.default_rng(4)
        grid = PeriodicGrid((128,))
        f = ScalarField(grid, rng.normal(size=grid.shape))
        eps = 0.22
        lhs = smooth(f, eps).derivative(0).values
        rhs = smooth(f.derivative(0), eps).values
        scale = np.max(np.abs(rhs)) + 1.0
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale

    def test_metric_and_immersion_fields(self):
        grid = PeriodicGrid((32, 32))
        g = MetricField.identity(grid, 1.5)
        assert np.max(np.abs(smooth(g, 0.4).comps - g.comps)) <= 1e-13
        x, y = grid.meshes()
        zeros = np.zeros_like(x)
        w = ImmersionField(grid, np.stack([x, y, zeros, zeros], axis=-1),
                           offsets=np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]))
        sw = smooth(w, 0.9)
        assert np.max(np.abs(sw.values - w.values)) <= 1e-12
        assert np.array_equal(sw.offsets, w.offsets)


class TestEpsDerivative:
    def test_constant_is_zero(self):
        grid = PeriodicGrid((64,))
        f = ScalarField.constant(grid, 3.0)
        assert np.max(np.abs(smooth_eps_derivative(f, 0.5).values)) == 0.0

    def test_flat_region_is_zero(self):
        grid = PeriodicGrid((64,))
        f = ScalarField.from_function(grid, lambda x: np.cos(4 * x))
        assert np.max(np.abs(smooth_eps_derivative(f, 0.1).values)) <= 1e-12

    def test_matches_central_difference(self):
        grid = PeriodicGrid((256,))
        T = calibration_field(grid)
        eps = 0.3
        exact = smooth_eps_derivative(T, eps).values

        def central(h):
            num = smooth(T, eps + h).values - smooth(T, eps - h).values
            return np.max(np.abs(num / (2 * h) - exact))

        e1, e2 = central(1e-2), central(5e-3)
        assert e1 <= 5e-2
        assert e2 <= e1 / 3.0  # second-order decay


class TestEstimateBench:
    def test_band_limited_family_d_is_zero(self):
        grid = PeriodicGrid((64,))
        f = ScalarField.from_function(grid, lambda x: np.cos(2 * x) + 0.5 * np.sin(x))
        recs = estimate_bench(f, [(0, 2)], [0.05, 0.1, 0.2])
        fam_d = [r for r in recs if r["family"] == "d"]
        assert fam_d and fam_d[0]["max_ratio"] <= 1e-12

    def test_single_mode_closed_form(self):
        grid = PeriodicGrid((128,))
        k = 8
        f = ScalarField.from_function(grid, lambda x: np.cos(k * x))
        eps = 0.1  # eps*k = 0.8: inside the transition band
        m = float(DEFAULT_KERNEL.multiplier(eps * k))
        md = float(DEFAULT_KERNEL.multiplier_derivative(eps * k))
        sm = smooth(f, eps)
        smd = smooth_eps_derivative(f, eps)
        assert np.max(np.abs(sm.values - m * f.values)) <= 1e-12
        assert np.max(np.abs(smd.values - k * md * f.values)) <= 1e-11

    def test_calibration_ceilings(self):
        grid = PeriodicGrid((256,))
        T = calibration_field(grid)
        eps_grid = [2.0 ** (-j) for j in range(1, 7)]
        recs = estimate_bench(T, [(2, 0), (3, 1), (0, 2)], eps_grid)
        for rec in recs:
            key = (rec["family"], rec["r"], rec["s"])
            assert rec["max_ratio"] <= FROZEN_CEILINGS[key], key
            assert rec["max_ratio"] <= 64.0

    def test_convergence_monotone_in_scale(self):
        grid = PeriodicGrid((256,))
        T = calibration_field(grid)
        errs = []
        for j in range(1, 7):
            diff = T - smooth(T, 2.0**-j)
            errs.append(np.max(np.abs(diff.values)))
        assert all(e2 <= e1 + 1e-15 for e1, e2 in zip(errs, errs[1:]))


def test_spectral_derivative_of_smoothed_equals_smoothed_derivative_2d():
    rng = np.random.default_rng(9)
    grid = PeriodicGrid((32, 32))
    f = ScalarField(grid, rng.normal(size=grid.shape))
    eps = 0.37
    lhs = spectral_derivative(smooth(f, eps).values, grid, 1)
    rhs = smooth(ScalarField(grid, spectral_derivative(f.values, grid, 1)), eps).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (np.max(np.abs(rhs)) + 1.0)
