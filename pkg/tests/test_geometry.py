import numpy as np
import pytest

from src.core import geometry
from src.core.errors import ConfigError, OddGrid, ShapeMismatch
from src.core.geometry import build_torus


@pytest.mark.parametrize("dim, grid, lengths", [
    (1, [16, 16], None),
    (1, [16, 24], [1.0, 2.5]),
    (2, [8, 8, 8, 8], None),
])
def test_volume_is_two_pi(dim, grid, lengths):
    torus = build_torus(dim, grid, lengths)
    assert torus.volume == pytest.approx(2.0 * np.pi, rel=1e-14)
    assert geometry.integrate(torus, np.ones(torus.grid)) == pytest.approx(2.0 * np.pi)
    assert geometry.mean(torus, np.full(torus.grid, 3.0)) == pytest.approx(3.0)


def test_side_ratio_is_preserved():
    torus = build_torus(1, [16, 16], [1.0, 2.0])
    assert torus.side_lengths[1] / torus.side_lengths[0] == pytest.approx(2.0)
    assert torus.raw_lengths == (1.0, 2.0)


@pytest.mark.parametrize("grid", [[15, 16], [6, 6], [16, 9]])
def test_bad_grid_raises_odd_grid(grid):
    with pytest.raises(OddGrid):
        build_torus(1, grid)


def test_config_errors():
    with pytest.raises(ConfigError) as info:
        build_torus(3, [8] * 6)
    assert info.value.details['key'] == 'torus.dim'
    with pytest.raises(ConfigError):
        build_torus(1, [16, 16, 16])
    with pytest.raises(ConfigError):
        build_torus(1, [16, 16], [1.0, -1.0])


def test_spectral_derivative_of_single_mode(t2):
    u = geometry.fourier_mode(t2, [1, 0], 'sin')
    k = 2.0 * np.pi / t2.side_lengths[0]
    du = geometry.spectral_derivative(t2, u, 0)
    assert np.abs(du - k * geometry.fourier_mode(t2, [1, 0], 'cos')).max() < 1e-12
    assert np.abs(geometry.spectral_derivative(t2, u, 1)).max() < 1e-12


def test_delta_symbol_is_half_laplacian(t2):
    u = geometry.fourier_mode(t2, [1, 2], 'cos')
    k0 = 2.0 * np.pi / t2.side_lengths[0]
    k1 = 4.0 * np.pi / t2.side_lengths[1]
    expected = 0.5 * (k0 ** 2 + k1 ** 2) * u
    assert np.abs(geometry.apply_delta(t2, u) - expected).max() < 1e-10


def test_first_order_symbol_drops_nyquist(t2):
    for n, ik in zip(t2.grid, t2.first_order):
        assert ik[n // 2] == 0
        assert np.allclose(ik[1:n // 2], -ik[-1:n // 2:-1])


def test_nyquist_symbol_lives_on_nyquist_modes(t2):
    sym = geometry.nyquist_symbol(t2)
    n = t2.grid[0]
    k = abs(t2.wavenumbers[0][n // 2])
    assert sym[n // 2, 0] == pytest.approx(k)
    assert sym[n // 2, n // 2] == pytest.approx(np.sqrt(2.0) * k)
    assert np.count_nonzero(sym) == 2 * n - 1


def test_field_from_modes(t2):
    terms = [{'mode': [1, 0], 'amp': 0.3}, {'mode': [0, 2], 'amp': -0.1, 'kind': 'sin'}]
    field = geometry.field_from_modes(t2, terms, mean_value=2.0)
    assert geometry.mean(t2, field) == pytest.approx(2.0, abs=1e-12)
    expected = (2.0 + 0.3 * geometry.fourier_mode(t2, [1, 0])
                - 0.1 * geometry.fourier_mode(t2, [0, 2], 'sin'))
    assert np.allclose(field, expected)


def test_field_from_modes_rejects_high_modes(t2):
    with pytest.raises(ConfigError) as info:
        geometry.field_from_modes(t2, [{'mode': [4, 0], 'amp': 1.0}], key='params.t')
    assert info.value.details['key'] == 'params.t[0].mode'


def test_band_limited_noise_is_normalized(t2, rng):
    u = geometry.band_limited_noise(t2, rng)
    assert np.isrealobj(u)
    assert np.sqrt(np.mean(u ** 2)) == pytest.approx(1.0)
    z = geometry.band_limited_noise(t2, rng, complex_valued=True)
    assert np.iscomplexobj(z)
    # 每軸只有 |m| <= 2 的模態
    coeffs = np.abs(np.fft.fftn(z))
    assert coeffs[3:14, :].max() < 1e-9 * coeffs.max()


def test_dealiased_product_matches_low_band_product(t2, rng):
    u = geometry.band_limited_noise(t2, rng)
    v = geometry.band_limited_noise(t2, rng)
    assert np.abs(geometry.dealiased_product(t2, u, v) - u * v).max() < 1e-12


def test_inner_and_norm(t2, rng):
    u = geometry.band_limited_noise(t2, rng, complex_valued=True)
    assert geometry.inner(t2, u, u).real == pytest.approx(geometry.norm_sq(t2, u))
    assert geometry.l2_norm(t2, u) == pytest.approx(np.sqrt(2.0 * np.pi), rel=1e-12)


def test_shape_mismatch(t2):
    with pytest.raises(ShapeMismatch):
        geometry.integrate(t2, np.ones((8, 8)))
