import numpy as np
import pytest

from src.core import geometry
from src.core.bundle_fields import BundleSpec, MetricField, Section, make_background, random_state
from src.core.errors import MissingField
from src.core.functionals import (FieldState, ParamSet, ResidualReport, SystemKind, bogomolny,
                                  constraint_check, energy_identity_gap, half_factor_rescale,
                                  integral_identities, moment_level_defect, moment_map,
                                  residuals, topological_constant, ymh, ymh_terms)


def test_ymh_of_flat_vacuum(t2):
    gauge = make_background(t2, BundleSpec(1, (0,)))
    phi = np.zeros(t2.grid, dtype=complex)
    # ‖τ‖² = τ²·2π
    assert ymh(gauge, phi, 2.0) == pytest.approx(8.0 * np.pi)


def test_ymh_and_gap_for_degree_one_with_zero_field(t2):
    gauge = make_background(t2, BundleSpec(1, (1,)))
    phi = np.zeros(t2.grid, dtype=complex)
    terms = ymh_terms(gauge, phi, 2.0)
    assert terms['curvature'] == pytest.approx(2.0 * np.pi)
    assert terms['kinetic'] == 0.0
    assert ymh(gauge, phi, 2.0) == pytest.approx(10.0 * np.pi)
    assert bogomolny(gauge, phi, 2.0) == pytest.approx(2.0 * np.pi)
    assert energy_identity_gap(gauge, phi, 2.0) == pytest.approx(8.0 * np.pi)
    assert topological_constant(gauge, 2.0) == pytest.approx(8.0 * np.pi)


def test_energy_identity_on_trivial_bundle(t2):
    # deg E = 0：YMH 與 Bogomolny 泛函相同
    for seed in (0, 1):
        gauge, phi = random_state(t2, BundleSpec(1, (0,)), seed=seed, amplitude=0.4)
        scale = ymh(gauge, phi, 1.5)
        assert abs(energy_identity_gap(gauge, phi, 1.5, dealias=True)) < 1e-9 * scale


def test_residual_report_total():
    report = ResidualReport(r_holo=3.0, r_moment=4.0, extra={'dbar_input': 0.1})
    assert report.total == pytest.approx(5.0)
    out = report.to_dict()
    assert out['total'] == pytest.approx(5.0)
    assert out['dbar_input'] == 0.1


def test_missing_field_is_reported(t2):
    gauge = make_background(t2, BundleSpec(1, (1,)))
    state = FieldState(gauge=gauge, phi=np.zeros(t2.grid, dtype=complex))
    with pytest.raises(MissingField) as info:
        residuals(SystemKind.TMVE, state, ParamSet(tau=2.0))
    assert info.value.details['field'] == 'metric'


def test_vacuum_residual(t2):
    gauge = make_background(t2, BundleSpec(1, (0,)))
    phi = np.full(t2.grid, np.sqrt(2.0), dtype=complex)
    report = residuals('ve', FieldState(gauge=gauge, phi=phi), ParamSet(tau=2.0, torus=t2))
    assert report.total < 1e-12
    half = residuals('ve', FieldState(gauge=gauge, phi=phi / np.sqrt(2.0) * 2.0),
                     ParamSet(tau=2.0, torus=t2), half_factor=True)
    assert half.r_moment < 1e-12


def test_half_factor_rescale():
    phi = np.array([1.0 + 1.0j, 2.0])
    assert np.allclose(half_factor_rescale(phi), np.sqrt(2.0) * phi)


def test_metric_residual_uses_exponent(t2):
    gauge = make_background(t2, BundleSpec(1, (0,)))
    phi = np.ones(t2.grid, dtype=complex)
    # |φ|²e^w = 2 → w = log 2
    metric = MetricField.from_exponent(t2, np.full(t2.grid, np.log(2.0)))
    state = FieldState(gauge=gauge, phi=phi, metric=metric)
    assert residuals(SystemKind.TMVE, state, ParamSet(tau=2.0, torus=t2)).total < 1e-12


def test_parameter_constraint():
    params = ParamSet(tau=0.5, tau_prime=1.0)
    result = constraint_check('parameters', params, {'rank': 2, 'deg_E': 1, 'deg_L': 1})
    assert result.ok
    assert result.required == pytest.approx(1.0)
    bad = constraint_check('parameters', ParamSet(tau=0.5, tau_prime=0.0),
                           {'rank': 2, 'deg_E': 1, 'deg_L': 1})
    assert not bad.ok
    assert bad.violation == pytest.approx(-1.0)


def test_t_tprime_constraint_with_fields(t2):
    t = geometry.field_from_modes(t2, [{'mode': [1, 0], 'amp': 0.3}], mean_value=1.5)
    result = constraint_check('t-tprime', ParamSet(t=t, t_prime=-1.5, torus=t2),
                              {'rank': 1, 'deg_E': 1, 'deg_L': -1})
    assert result.ok
    assert result.required == pytest.approx(-1.5)


def test_ff_constraint():
    params = ParamSet(f=0.3, f_prime=-0.3)
    assert constraint_check('ff', params, {'rank': 1, 'deg_E': 0, 'deg_L': 0}).ok
    off = constraint_check('ff', ParamSet(f=0.3, f_prime=0.0), {'rank': 1, 'deg_E': 0, 'deg_L': 0})
    assert not off.ok
    assert off.required == pytest.approx(-0.3)


def test_t1_t2_constraint():
    params = ParamSet(tau=1.0, tau_prime=0.5)
    result = constraint_check('t1-t2', params, {'rank': 2, 'deg_E': 2, 'r1': 1, 'r2': 2})
    assert result.ok


def test_constraint_for_kind_without_constraint():
    result = constraint_check(SystemKind.TMVE, ParamSet(tau=1.0), {'rank': 1})
    assert result.ok
    assert result.to_dict()['constraint'] == 'none'


def test_missing_parameter_for_constraint():
    with pytest.raises(MissingField):
        constraint_check('ff', ParamSet(f=0.3), {'rank': 1})


def test_integral_identities_prediction(t2):
    gauge = make_background(t2, BundleSpec(1, (1,)))
    phi = Section(t2, gauge.spec, np.zeros(t2.grid))
    out = integral_identities(FieldState(gauge=gauge, phi=phi), ParamSet(tau=2.0, torus=t2))
    assert out['predicted_E'] == pytest.approx(2.0 * np.pi)
    assert out['phi_norm_sq'] == 0.0


def test_moment_map_level(t2):
    gauge = make_background(t2, BundleSpec(1, (0,)))
    phi = np.full(t2.grid, np.sqrt(2.0), dtype=complex)
    mu = moment_map(gauge, phi, MetricField.identity(t2))
    # μ = ΛF - i|φ|² = -2i
    assert moment_level_defect(t2, mu, 2.0) < 1e-12
