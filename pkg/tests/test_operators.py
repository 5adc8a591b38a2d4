import numpy as np
import pytest

from src.core import geometry
from src.core.bundle_fields import BundleSpec, MetricField, make_background, random_state
from src.core.errors import NonZeroMean
from src.core.operators import (chern_metric_curvature, convention_lock_defect, curvature, d_cov,
                                dbar_adjoint, dbar_cov, dcov_norms, degree_of, delta_table_digest,
                                f02_from_components, form01_norm_sq, poisson_solve, unitary_shift)


def test_poisson_inverts_delta(t2, rng):
    u = geometry.band_limited_noise(t2, rng)
    u = u - geometry.mean(t2, u)
    back = poisson_solve(t2, geometry.apply_delta(t2, u))
    assert np.abs(back - u).max() < 1e-12
    assert abs(geometry.mean(t2, back)) < 1e-12


def test_poisson_rejects_nonzero_mean(t2):
    with pytest.raises(NonZeroMean):
        poisson_solve(t2, np.ones(t2.grid))


@pytest.mark.parametrize("n", [0, 1, -2])
def test_convention_lock(t2, rng, n):
    gauge = make_background(t2, BundleSpec(1, (n,)))
    metric = MetricField(t2, 1, 0.5 * geometry.band_limited_noise(t2, rng))
    u = geometry.band_limited_noise(t2, rng)
    assert convention_lock_defect(gauge, metric, u) < 1e-10


def test_convention_lock_sees_the_delta_table(t2):
    # Nyquist 模態：一階頻譜導數為 0，Δ 的符號表卻不是
    gauge = make_background(t2, BundleSpec(1, (1,)))
    n = t2.grid[0]
    u = np.cos(np.pi * np.arange(n))[:, None] * np.ones(t2.grid)
    k_nyq = abs(t2.wavenumbers[0][n // 2])
    assert convention_lock_defect(gauge, MetricField.identity(t2), u) == pytest.approx(0.5 * k_nyq ** 2)


def test_unitary_shift_matches_metric_curvature(t2, rng):
    gauge = make_background(t2, BundleSpec(1, (2,)))
    w = geometry.band_limited_noise(t2, rng)
    from_metric = chern_metric_curvature(gauge, MetricField.from_exponent(t2, w)).ilambda
    from_connection = curvature(unitary_shift(gauge, w)).ilambda
    assert np.abs(from_metric - from_connection).max() < 1e-10


def test_metric_curvature_shift_is_delta(t2, rng):
    gauge = make_background(t2, BundleSpec(1, (1,)))
    w = geometry.band_limited_noise(t2, rng)
    il = chern_metric_curvature(gauge, MetricField.from_exponent(t2, w)).ilambda
    assert np.abs(il - 1.0 - geometry.apply_delta(t2, w)).max() < 1e-10


def test_background_curvature_and_degree(t2):
    gauge = make_background(t2, BundleSpec(1, (3,)))
    curv = curvature(gauge)
    # A = 2π：B = 2πn / A = n
    assert np.allclose(curv.ilambda, 3.0)
    assert degree_of(gauge) == pytest.approx(3.0)
    assert np.allclose(curv.plaquette[0, 1], 3.0, rtol=1e-10)


def test_degree_is_invariant_under_perturbation(t2):
    gauge, _ = random_state(t2, BundleSpec(1, (2,)), seed=4, amplitude=0.5)
    assert degree_of(gauge) == pytest.approx(2.0, abs=1e-10)


def test_rank_two_curvature_is_hermitian(t2):
    gauge, _ = random_state(t2, BundleSpec(2, (2,)), seed=9, amplitude=0.3)
    il = curvature(gauge).ilambda
    assert np.abs(il - np.swapaxes(il.conj(), -1, -2)).max() < 1e-12
    assert degree_of(gauge) == pytest.approx(2.0, abs=1e-10)


def test_dbar_adjoint_pairing(t2, rng):
    gauge, phi = random_state(t2, BundleSpec(1, (0,)), seed=1, amplitude=0.3)
    psi = np.stack([geometry.band_limited_noise(t2, rng, complex_valued=True)])
    lhs = 2.0 * geometry.inner(t2, dbar_cov(gauge, phi)[0], psi[0])
    rhs = geometry.inner(t2, phi.values, dbar_adjoint(gauge, psi))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_d_splits_into_del_and_dbar(t2):
    gauge, phi = random_state(t2, BundleSpec(1, (1,)), seed=2, amplitude=0.3)
    norms = dcov_norms(gauge, phi)
    assert norms['d'] == pytest.approx(norms['del'] + norms['dbar'], rel=1e-12)
    full = d_cov(gauge, phi)
    assert full.shape == (2,) + t2.grid


def test_kahler_identity_on_trivial_bundle(t2):
    # ‖∂φ‖² - ‖∂̄φ‖² = ∫ iΛF |φ|²
    gauge, phi = random_state(t2, BundleSpec(1, (0,)), seed=6, amplitude=0.4)
    norms = dcov_norms(gauge, phi)
    flux = geometry.integrate(t2, curvature(gauge).ilambda * np.abs(phi.values) ** 2)
    assert norms['del'] - norms['dbar'] == pytest.approx(flux, rel=1e-9, abs=1e-11)


def test_form01_norm_weight(t2):
    c = np.ones((1,) + t2.grid)
    assert form01_norm_sq(t2, c) == pytest.approx(4.0 * np.pi)


def test_f02_unit_frame_coefficient():
    f = np.zeros((4, 4))
    f[0, 3], f[3, 0] = 1.0, -1.0
    f[1, 2], f[2, 1] = 1.0, -1.0
    assert f02_from_components(f) == pytest.approx(1.0)
    g = np.zeros((4, 4))
    g[0, 2], g[2, 0] = 1.0, -1.0
    assert f02_from_components(g) == pytest.approx(-0.5j)


def test_f02_vanishes_for_integrable_background(t4_small):
    gauge = make_background(t4_small, BundleSpec(1, (1, 1)))
    assert np.abs(curvature(gauge).f02).max() < 1e-12


def test_delta_digest_is_stable(t2):
    other = geometry.build_torus(1, [16, 16])
    assert delta_table_digest(t2) == delta_table_digest(other)
    assert delta_table_digest(t2) != delta_table_digest(geometry.build_torus(1, [16, 24]))
