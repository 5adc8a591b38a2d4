import numpy as np
import pytest

from src.core import geometry
from src.core.bundle_fields import BundleSpec, make_background
from src.core.errors import ConstraintViolation, InvalidModel, MissingField, ParityError
from src.core.functionals import FieldState, ParamSet
from src.core.swkahler import (DecouplingReport, SpinorPair, classify, cross_term_identity,
                               decoupling_experiment, dirac_connection, hodge_dual, minimize_sw,
                               predicted_branch, quadratic_form, random_sw_state, sw_functional,
                               sw_gradient, sw_residuals)


def _constant_state(torus, a, b):
    gauge = make_background(torus, BundleSpec(1, (0, 0)))
    return FieldState(gauge=gauge, phi=np.full(torus.grid, a, dtype=complex),
                      beta=np.full(torus.grid, b, dtype=complex))


def test_quadratic_form_pointwise(t4_small):
    psi = SpinorPair(t4_small, np.full(t4_small.grid, 2.0 + 1.0j), np.zeros(t4_small.grid))
    q = quadratic_form(psi)
    assert np.allclose(q.scalar, 5.0)
    assert np.abs(q.comp02).max() == 0.0

    psi = SpinorPair(t4_small, np.full(t4_small.grid, 1.0j), np.full(t4_small.grid, 3.0))
    q = quadratic_form(psi)
    assert np.allclose(q.scalar, 1.0 - 9.0)
    assert np.allclose(q.comp02, 3.0 * -1.0j)
    assert np.allclose(q.comp20, -np.conj(q.comp02))


def test_spinor_pair_needs_four_torus(t2):
    with pytest.raises(InvalidModel):
        SpinorPair(t2, np.zeros(t2.grid), np.zeros(t2.grid))


def test_reducible_zero_state(t4_small):
    report = sw_residuals('fixed', _constant_state(t4_small, 0.0, 0.0), ParamSet(f=0.0))
    assert report.total == 0.0


def test_constant_pair_is_bounded_below(t4_small):
    a, b = 1.0 + 0.5j, 0.5
    report = sw_residuals('fixed', _constant_state(t4_small, a, b), ParamSet(f=0.0))
    assert report.r_02 == pytest.approx(abs(b * np.conj(a)) * np.sqrt(t4_small.volume), rel=1e-12)
    assert report.r_holo < 1e-12


def test_missing_beta(t4_small):
    state = FieldState(gauge=make_background(t4_small, BundleSpec(1, (0, 0))),
                       phi=np.zeros(t4_small.grid, dtype=complex))
    with pytest.raises(MissingField):
        sw_residuals('fixed', state, ParamSet(f=0.0))


def test_functional_vanishes_at_reducible_solution(t4_small):
    out = sw_functional(_constant_state(t4_small, 0.0, 0.0), ParamSet(f=0.0))
    assert out['direct'] == 0.0
    assert out['expanded'] == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_direct_equals_expanded_fixed(t4, seed):
    state = random_sw_state(t4, seed, amplitude=0.3)
    f = 0.2 + 0.1 * geometry.fourier_mode(t4, [1, 0, 0, 0])
    out = sw_functional(state, ParamSet(f=f), 'fixed')
    assert out['direct'] > 0.0
    assert out['relative_gap'] < 1e-8


def test_direct_equals_expanded_coupled(t4):
    state = random_sw_state(t4, 3, amplitude=0.3, chern_l=(0, 0))
    out = sw_functional(state, ParamSet(f=0.3, f_prime=-0.3), 'coupled')
    assert out['relative_gap'] < 1e-8
    assert 'curvature_lambda_b' in out['terms']


def test_scalar_curvature_term(t4_small):
    state = _constant_state(t4_small, 1.0, 0.0)
    base = sw_functional(state, ParamSet(f=1.0))
    shifted = sw_functional(state, ParamSet(f=1.0), s=np.full(t4_small.grid, 4.0))
    # ∫ (s/4)|φ|² = vol
    assert shifted['expanded'] - base['expanded'] == pytest.approx(t4_small.volume)


@pytest.mark.parametrize("seed", [0, 5])
def test_cross_term_identity(t4, seed):
    state = random_sw_state(t4, seed, amplitude=0.3, chern_l=(0, 0))
    out = cross_term_identity(state)
    assert out['defect'] < 1e-10 * (abs(out['lhs']) + 1.0)


def test_dirac_connection_parity(t4_small):
    gauge_a = make_background(t4_small, BundleSpec(1, (0, 0)))
    with pytest.raises(ParityError):
        dirac_connection(gauge_a, make_background(t4_small, BundleSpec(1, (1, 0), 'L')))
    dirac = dirac_connection(gauge_a, make_background(t4_small, BundleSpec(1, (2, 0), 'L')))
    assert dirac.spec.chern == (1, 0)


def test_coupled_requires_ff_constraint(t4_small):
    state = random_sw_state(t4_small, 0, chern_l=(0, 0))
    with pytest.raises(ConstraintViolation) as info:
        sw_residuals('coupled', state, ParamSet(f=0.3, f_prime=0.0))
    assert info.value.details['required_f_prime'] == pytest.approx(-0.3)
    report = sw_residuals('coupled', state, ParamSet(f=0.3, f_prime=-0.3))
    assert report.r_second > 0.0


def test_coupled_requires_second_connection(t4_small):
    state = random_sw_state(t4_small, 0)
    with pytest.raises(MissingField):
        sw_residuals('coupled', state, ParamSet(f=0.3, f_prime=-0.3))


def test_hodge_dual_swaps_residuals(t4):
    state = random_sw_state(t4, 7, amplitude=0.3)
    params = ParamSet(f=0.4 + 0.1 * geometry.fourier_mode(t4, [0, 1, 0, 0]))
    dual_state, dual_params = hodge_dual(state, params)
    before = sw_residuals('fixed', state, params)
    after = sw_residuals('fixed', dual_state, dual_params)
    for key in ('r_holo', 'r_moment', 'r_02'):
        assert getattr(after, key) == pytest.approx(getattr(before, key), rel=1e-10)
    assert np.allclose(dual_state.phi, np.conj(state.beta))


def test_gradient_matches_finite_differences(t4_small):
    state = random_sw_state(t4_small, 11, amplitude=0.3)
    f = np.full(t4_small.grid, 0.2)
    rng = np.random.default_rng(3)
    v = geometry.band_limited_noise(t4_small, rng, complex_valued=True)
    _, _, _, grad_phi, grad_beta = sw_gradient('fixed', state.gauge, state.phi, state.beta, f)
    eps = 1e-6
    cell = t4_small.cell_volume

    def value(phi, beta):
        return sw_gradient('fixed', state.gauge, phi, beta, f)[0]

    numeric = (value(state.phi + eps * v, state.beta) - value(state.phi - eps * v, state.beta)) / (2 * eps)
    analytic = cell * np.real(np.sum(np.conj(grad_phi) * v))
    assert numeric == pytest.approx(analytic, rel=1e-5)

    numeric = (value(state.phi, state.beta + eps * v) - value(state.phi, state.beta - eps * v)) / (2 * eps)
    analytic = cell * np.real(np.sum(np.conj(grad_beta) * v))
    assert numeric == pytest.approx(analytic, rel=1e-5)


def test_predicted_branch():
    assert predicted_branch(0, 1, 0, 0.5) == 'phi'
    assert predicted_branch(0, 1, 0, -0.5) == 'beta'
    assert predicted_branch(0, 1, 0, 0.0) == 'reducible'
    assert predicted_branch(1, 1, 2, 0.0) == 'reducible'
    assert predicted_branch(0, 1, 0, 0.5, -0.5, kind='coupled') == 'phi'
    assert predicted_branch(0, 1, 0, -0.5, 0.5, kind='coupled') == 'beta'
    assert predicted_branch(0, 1, 0, 0.5, 0.5, kind='coupled') == 'indeterminate'


def test_classify():
    assert classify(1.0, 0.0, 1e-6) == 'phi'
    assert classify(0.0, 2.0, 1e-6) == 'beta'
    assert classify(1e-8, 1e-9, 1e-6) == 'reducible'
    assert classify(1.0, 0.5, 1e-6) == 'mixed'


def test_classify_scales_with_remaining_energy():
    # L-BFGS 停在 SW = 1e-4 時，輸的一支約 1e-2
    assert classify(2.0, 0.02, 1e-6) == 'mixed'
    assert classify(2.0, 0.02, 1e-6, energy=1e-4) == 'phi'
    assert classify(0.02, 2.0, 1e-6, energy=1e-4) == 'beta'
    assert classify(1e-3, 1e-3, 1e-6, energy=1e-4) == 'reducible'
    assert classify(2.0, 0.5, 1e-6, energy=1e-2) == 'mixed'


def test_decoupling_report_summary():
    runs = [{'seed': s, 'branch': 'phi', 'ratio': 1e-5, 'sup_product': 1e-6, 'iterations': 40}
            for s in (0, 1)]
    report = DecouplingReport('fixed', 0.5, None, 'phi', runs)
    out = report.to_dict()
    assert report.branch == 'phi' and report.agrees
    assert out['seeds'] == [0, 1]
    assert out['sup_product'] == 1e-6
    assert len(report.frame()) == 2


def test_minimize_lowers_the_functional(t4_small):
    state = random_sw_state(t4_small, 2, amplitude=0.3)
    params = ParamSet(f=0.5)
    start = sw_functional(state, params)['direct']
    final, info = minimize_sw('fixed', state, params, max_iters=15)
    assert info['value'] < start
    assert sw_functional(final, params)['direct'] == pytest.approx(info['value'], rel=1e-10)


@pytest.mark.parametrize("f_bar, branch", [(0.5, 'phi'), (-0.5, 'beta')])
def test_decoupling_follows_sign_of_f(t4_small, f_bar, branch):
    report = decoupling_experiment(t4_small, 'fixed', f_bar, seeds=(0,), max_iters=300, progress=False)
    assert report.predicted == branch
    assert report.branch == branch
    assert report.agrees
