import warnings

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from gpopinf.data import write_matrix
from gpopinf.errors import InvalidDimensionError, ParameterWarning, StructureError
from gpopinf.fom import (
    allen_cahn_1d_fom,
    allen_cahn_2d_fom,
    build_fom,
    eval_energy,
    eval_gradient,
    generic_fom,
    generic_fom_from_files,
    kdv_energy_unscaled,
    kdv_fom,
    wave_fom,
    wave_profile,
)
from gpopinf.linalg import periodic_laplacian, skew_defect


def wave_energy_oracle(c, mu):
    """Continuum energy c^2/2 int u_x^2 for the spline pulse, done symbolically."""
    s = sympy.symbols("s", nonnegative=True)
    inner = 1 - sympy.Rational(3, 2) * s**2 + sympy.Rational(3, 4) * s**3
    outer = sympy.Rational(1, 4) * (2 - s) ** 3
    integral = sympy.integrate(sympy.diff(inner, s) ** 2, (s, 0, 1)) + sympy.integrate(
        sympy.diff(outer, s) ** 2, (s, 1, 2)
    )
    # u(x) = h(mu |x - 1/2|): the two symmetric halves each contribute mu * integral
    return float(c**2 / 2 * 2 * mu * integral)


def kdv_energy_oracle(alpha, nu, mu):
    u = lambda x: mpmath.sech(x / mu) ** 2
    ux = lambda x: mpmath.diff(u, x)
    f = lambda x: alpha / 6 * u(x) ** 3 - nu / 2 * ux(x) ** 2
    return float(mpmath.quad(f, [-20, 0, 20]))


def fd_directional(spec, y, w, h=1e-6):
    return (spec.energy(y + h * w) - spec.energy(y - h * w)) / (2 * h * spec.dA)


class TestWave:
    def test_energy_anchor(self):
        spec = wave_fom(1000, c=0.1, mu=10)
        oracle = wave_energy_oracle(0.1, 10)
        assert oracle == pytest.approx(0.075, rel=1e-12)
        assert spec.energy(spec.y0) == pytest.approx(oracle, rel=2e-2)
        assert spec.energy(spec.y0) == pytest.approx(7.5e-2, rel=2e-2)

    def test_velocity_starts_at_zero(self):
        spec = wave_fom(50)
        assert np.all(spec.y0[50:] == 0.0)

    def test_profile_continuity(self):
        assert wave_profile(1.0) == 0.25
        assert wave_profile(1.0 + 1e-12) == pytest.approx(0.25, abs=1e-11)
        assert wave_profile(2.0) == 0.0
        assert wave_profile(3.0) == 0.0

    def test_gradient_at_zero(self):
        spec = wave_fom(20)
        np.testing.assert_array_equal(spec.gradient(np.zeros(40)), 0.0)

    def test_structure(self):
        spec = wave_fom(10)
        assert skew_defect(spec.D) == 0.0
        assert spec.is_linear and spec.structure == "conservative"


class TestKdV:
    def test_energy_anchor(self):
        spec = kdv_fom(4000)
        oracle = kdv_energy_oracle(-6.0, -1.0, np.sqrt(2.0))
        assert oracle == pytest.approx(-1.13, rel=2e-2)
        assert spec.energy(spec.y0) == pytest.approx(oracle, rel=2e-2)

    def test_zero_state_is_stationary(self):
        spec = kdv_fom(16)
        np.testing.assert_array_equal(spec.gradient(np.zeros(16)), 0.0)
        np.testing.assert_array_equal(spec.rhs(np.zeros(16)), 0.0)

    def test_structure_matrix_is_skew(self):
        assert skew_defect(kdv_fom(32).D) == 0.0

    def test_unscaled_energy_differs_by_dx_squared(self):
        spec = kdv_fom(64)
        u = np.random.default_rng(3).standard_normal(64)
        cubic = spec.dA * np.sum(-6.0 / 6 * u**3)
        dx2 = spec.mesh[0] ** 2
        expected = cubic + dx2 * (spec.energy(u) - cubic)
        assert kdv_energy_unscaled(spec, u) == pytest.approx(expected, rel=1e-12)
        with pytest.raises(StructureError):
            kdv_energy_unscaled(wave_fom(8), np.zeros(16))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_directional_derivative(self, seed):
        rng = np.random.default_rng(seed)
        spec = kdv_fom(32)
        u, w = rng.standard_normal(32), rng.standard_normal(32)
        exact = spec.gradient(u) @ w
        assert fd_directional(spec, u, w) == pytest.approx(exact, rel=1e-6, abs=1e-6)


class TestAllenCahn1D:
    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_constant_fixed_points(self, sign):
        spec = allen_cahn_1d_fom(16)
        u = np.full(16, sign)
        np.testing.assert_allclose(spec.gradient(u), 0.0, atol=1e-12)

    def test_energy_of_constant_state(self):
        spec = allen_cahn_1d_fom(40)
        assert eval_energy(spec, np.ones(40)) == pytest.approx(-0.5, rel=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_gradient_against_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        spec = allen_cahn_1d_fom(20)
        u = rng.uniform(-1.5, 1.5, 20)
        grad = eval_gradient(spec, u)
        fd = np.array([fd_directional(spec, u, e) for e in np.eye(20)])
        assert np.linalg.norm(fd - grad) <= 1e-6 * max(1.0, np.linalg.norm(grad))

    def test_structure(self):
        spec = allen_cahn_1d_fom(8)
        np.testing.assert_array_equal(spec.D, -np.eye(8))
        assert spec.structure == "dissipative"


class TestAllenCahn2D:
    def test_initial_state_symmetry(self):
        spec = allen_cahn_2d_fom(16, mu=0.35)
        u = spec.y0.reshape(16, 16)
        # nodes are x_j = -0.5 + j dx, so x -> -x maps j -> (n - j) mod n
        flipped = np.roll(u[::-1, ::-1], 1, axis=(0, 1))
        np.testing.assert_allclose(u, flipped, atol=1e-12)

    def test_constant_fixed_point(self):
        spec = allen_cahn_2d_fom(8)
        np.testing.assert_allclose(spec.gradient(np.ones(64)), 0.0, atol=1e-9)

    def test_laplacian_kills_constants(self):
        L8 = periodic_laplacian(8)
        L = np.kron(np.eye(8), L8) + np.kron(L8, np.eye(8))
        np.testing.assert_array_equal(L @ np.ones(64), 0.0)

    def test_x_runs_fastest(self):
        spec = allen_cahn_2d_fom(8)
        x = spec.grid[0]
        # a field depending on x only must be constant along the slow index
        u = np.tile(np.sin(2 * np.pi * x), 8)
        lap = (spec.K + np.eye(64)) @ u / -(0.02**2)
        expected = np.tile(periodic_laplacian(8) @ np.sin(2 * np.pi * x) / spec.mesh[0] ** 2, 8)
        np.testing.assert_allclose(lap, expected, rtol=1e-10)


@pytest.mark.parametrize(
    "builder,size",
    [(wave_fom, 2), (kdv_fom, 1), (allen_cahn_1d_fom, 1), (allen_cahn_2d_fom, None)],
)
def test_translation_equivariance(builder, size):
    rng = np.random.default_rng(7)
    n = 12
    spec = builder(n)
    if size is None:
        pytest.skip("2D shifts are covered by the Kronecker structure")
    y = rng.standard_normal(spec.n)
    blocks = y.reshape(size, n)
    shifted = np.roll(blocks, 3, axis=1).ravel()
    expected = np.roll(spec.gradient(y).reshape(size, n), 3, axis=1).ravel()
    np.testing.assert_allclose(spec.gradient(shifted), expected, atol=1e-9)


@pytest.mark.parametrize("builder", [wave_fom, kdv_fom, allen_cahn_1d_fom, allen_cahn_2d_fom])
def test_too_small(builder):
    with pytest.raises(InvalidDimensionError):
        builder(2)


def test_out_of_range_parameter_warns():
    with pytest.warns(ParameterWarning):
        wave_fom(10, mu=20)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        wave_fom(10, mu=20, extrapolate=True)


def test_energy_is_vectorized_over_columns():
    spec = kdv_fom(16)
    Y = np.random.default_rng(0).standard_normal((16, 5))
    np.testing.assert_allclose(spec.energy(Y), [spec.energy(Y[:, j]) for j in range(5)], rtol=1e-14)


def test_build_fom_dispatch():
    assert build_fom("allen_cahn_1d", 0.5, n=10).mu == 0.5
    with pytest.raises(StructureError):
        build_fom("heat", 1.0, n=10)


class TestGeneric:
    def test_classification(self):
        S = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert generic_fom(S, np.eye(2)).structure == "conservative"
        assert generic_fom(-np.eye(2), np.eye(2)).structure == "dissipative"
        with pytest.raises(StructureError):
            generic_fom(np.eye(2), np.eye(2))

    def test_rejects_asymmetric_K(self):
        with pytest.raises(StructureError):
            generic_fom(-np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(StructureError):
            generic_fom(-np.eye(3), np.eye(2))
        with pytest.raises(StructureError):
            generic_fom(-np.eye(2), np.eye(2), np.ones(3))

    def test_from_files(self, tmp_path):
        D = -np.eye(3)
        K = np.diag([1.0, 2.0, 3.0])
        write_matrix(tmp_path / "D.gpoi", D)
        write_matrix(tmp_path / "K.gpoi", K)
        write_matrix(tmp_path / "y0.gpoi", np.array([1.0, 0.5, -1.0]))
        spec = generic_fom_from_files(
            tmp_path / "D.gpoi", tmp_path / "K.gpoi", tmp_path / "y0.gpoi", kind="allen_cahn"
        )
        y = np.array([0.3, -0.2, 0.7])
        np.testing.assert_allclose(spec.gradient(y), K @ y + y**3)
        np.testing.assert_array_equal(spec.y0, [1.0, 0.5, -1.0])
        with pytest.raises(StructureError):
            generic_fom_from_files(tmp_path / "D.gpoi", tmp_path / "K.gpoi", kind="sine")
