import numpy as np
import pytest

from src.core import geometry
from src.core.bundle_fields import BundleSpec, make_background, random_state, tensor_dual
from src.core.errors import ConstraintViolation, InvalidModel
from src.core.functionals import FieldState, ParamSet, integral_identities, metric_density, residuals
from src.core.solvers import (MAX_ITERS, NONEXISTENCE, SOLUTION, ScanModel, SolveOptions,
                              generic_phi, kazdan_warner, metric_to_unitary, minimize_ymh,
                              solve_coupled, solve_framed, solve_metric_line, solve_metric_matrix,
                              tau_scan)
from src.core.stability import CATALOG


@pytest.fixture
def line_setup(t2_fine):
    gauge = make_background(t2_fine, BundleSpec(1, (1,)))
    return gauge, generic_phi(gauge)


def test_options_from_config_ignores_unknown_keys():
    opts = SolveOptions.from_config({'solver': {'tol': 1e-6, 'route': 'metric', 'max_iters': 10}})
    assert opts.tol == 1e-6 and opts.max_iters == 10
    assert opts.initial_step(1.0) == pytest.approx(0.05)
    with pytest.raises(InvalidModel):
        SolveOptions(tol=0.0)


def test_kazdan_warner_constant_case(t2):
    result = kazdan_warner(t2, np.zeros(t2.grid), np.ones(t2.grid), np.full(t2.grid, 2.0),
                           SolveOptions())
    assert result.status == 'converged'
    assert np.allclose(result.w, np.log(2.0))


def test_kazdan_warner_reports_obstruction(t2):
    result = kazdan_warner(t2, np.ones(t2.grid), np.ones(t2.grid), np.full(t2.grid, 0.5),
                           SolveOptions(use_obstruction=True))
    assert result.status == 'obstruction'
    assert result.w is None


@pytest.mark.parametrize("target", [0.5, 1.0])
def test_kazdan_warner_collapses_below_threshold(t2, target):
    result = kazdan_warner(t2, np.ones(t2.grid), np.ones(t2.grid), np.full(t2.grid, target),
                           SolveOptions())
    assert result.status in ('collapse', 'stalled')
    assert geometry.mean(t2, np.exp(result.w)) < 1e-3


@pytest.mark.parametrize("tau", [1.2, 1.5, 2.0, 3.0])
def test_line_solutions_above_threshold(line_setup, tau):
    gauge, phi = line_setup
    metric, report = solve_metric_line(gauge, phi, t_field=tau)
    assert report.verdict == SOLUTION
    assert report.residual.total < 1e-8
    norm = geometry.integrate(gauge.torus, metric_density(phi, metric))
    assert norm == pytest.approx(2.0 * np.pi * (tau - 1.0), rel=1e-6)
    assert report.warnings == []


@pytest.mark.parametrize("tau", [0.5, 0.9, 1.0])
def test_line_nonexistence_below_threshold(line_setup, tau):
    gauge, phi = line_setup
    _, report = solve_metric_line(gauge, phi, t_field=tau)
    assert report.verdict == NONEXISTENCE
    assert report.reason in ('collapse', 'stalled')
    assert report.diagnostics['integral_obstruction']


@pytest.mark.parametrize("tau", [0.5, 1.0])
def test_line_obstruction_shortcut(line_setup, tau):
    gauge, phi = line_setup
    _, report = solve_metric_line(gauge, phi, t_field=tau, opts=SolveOptions(use_obstruction=True))
    assert report.verdict == NONEXISTENCE
    assert report.reason == 'obstruction'
    assert report.iterations == 0


def test_non_constant_t(line_setup):
    gauge, phi = line_setup
    torus = gauge.torus
    t = geometry.field_from_modes(torus, [{'mode': [1, 0], 'amp': 0.3}], mean_value=2.0)
    metric, report = solve_metric_line(gauge, phi, t_field=t)
    assert report.converged
    norm = geometry.integrate(torus, metric_density(phi, metric))
    assert norm == pytest.approx(2.0 * np.pi, rel=1e-6)


def test_non_holomorphic_input_warns(t2):
    gauge = make_background(t2, BundleSpec(1, (1,)))
    _, phi = random_state(t2, gauge.spec, seed=0, amplitude=0.5)
    metric, report = solve_metric_line(gauge, phi, t_field=2.0)
    assert report.warnings[0]['warning'] == 'NonHolomorphicInput'
    assert report.residual.extra['dbar_input'] > 1e-4
    assert report.verdict == SOLUTION


def test_metric_to_unitary_solves_vortex_equations(line_setup):
    gauge, phi = line_setup
    metric, report = solve_metric_line(gauge, phi, t_field=2.0)
    assert report.converged
    new_gauge, new_phi = metric_to_unitary(gauge, phi, metric)
    res = residuals('ve', FieldState(gauge=new_gauge, phi=new_phi), ParamSet(tau=2.0))
    assert res.r_moment < 1e-6
    assert res.r_holo < 1e-6


def test_framed_system_matches_t_system(line_setup):
    gauge, phi = line_setup
    torus = gauge.torus
    frame_u = 0.2 * geometry.fourier_mode(torus, [1, 0])
    metric_f, report_f = solve_framed(gauge, phi, frame_u, 2.0)
    t = 2.0 - geometry.apply_delta(torus, frame_u)
    metric_t, report_t = solve_metric_line(gauge, phi, t_field=t)
    assert report_f.converged and report_t.converged
    assert np.abs(metric_f.exponent - frame_u - metric_t.exponent).max() < 1e-6


def test_coupled_line_system(t2_fine):
    gauge_e = make_background(t2_fine, BundleSpec(1, (1,)))
    gauge_l = make_background(t2_fine, BundleSpec(1, (-1,), 'L'))
    phi = generic_phi(tensor_dual(gauge_e, gauge_l))
    metric_e, metric_l, report = solve_coupled(gauge_e, gauge_l, phi, 1.5, -1.5)
    assert report.verdict == SOLUTION
    state = FieldState(gauge=gauge_e, gauge_L=gauge_l, phi=phi, metric=metric_e, metric_L=metric_l)
    out = integral_identities(state, ParamSet(tau=1.5, tau_prime=-1.5, torus=t2_fine))
    assert out['predicted_E'] == pytest.approx(np.pi)
    assert out['predicted_L'] == pytest.approx(np.pi)
    assert out['phi_norm_sq'] == pytest.approx(np.pi, rel=1e-6)


def test_coupled_constraint_violation(t2):
    gauge_e = make_background(t2, BundleSpec(1, (1,)))
    gauge_l = make_background(t2, BundleSpec(1, (-1,), 'L'))
    phi = np.ones(t2.grid, dtype=complex)
    with pytest.raises(ConstraintViolation) as info:
        solve_coupled(gauge_e, gauge_l, phi, 1.5, -1.0)
    assert info.value.details['required_t_prime'] == pytest.approx(-1.5)


def test_rank_checks(t2):
    line = make_background(t2, BundleSpec(1, (1,)))
    pair = make_background(t2, BundleSpec(2, (2,)))
    with pytest.raises(InvalidModel):
        solve_metric_matrix(line, np.ones(t2.grid, dtype=complex))
    with pytest.raises(InvalidModel):
        solve_metric_line(pair, np.ones(t2.grid + (2,), dtype=complex))


def test_ymh_flow_obstruction(t2):
    gauge, phi = random_state(t2, BundleSpec(1, (1,)), seed=0, amplitude=0.3)
    _, report = minimize_ymh(gauge, phi, 0.5, SolveOptions(use_obstruction=True))
    assert report.verdict == NONEXISTENCE
    assert report.reason == 'obstruction'


def test_ymh_flow_decreases_energy(t2):
    gauge, phi = random_state(t2, BundleSpec(1, (0,)), seed=1, amplitude=0.3)
    _, report = minimize_ymh(gauge, phi, 2.0, SolveOptions(max_iters=30))
    energies = report.trace_frame()['energy'].to_numpy()
    assert np.all(np.diff(energies) <= 1e-12 * energies[0])
    assert report.verdict in (SOLUTION, MAX_ITERS)
    assert report.to_dict()['iterations'] == report.iterations


def test_ymh_flow_collapses_below_threshold(t2):
    gauge, phi = random_state(t2, BundleSpec(1, (1,)), seed=0, amplitude=0.3)
    _, report = minimize_ymh(gauge, phi, 0.5, SolveOptions(max_iters=2000))
    assert report.verdict == NONEXISTENCE
    assert report.reason != 'obstruction'
    assert report.diagnostics['sup_phi'] < 1e-6


@pytest.mark.parametrize("chern, rank", [((1,), 1), ((2,), 2)])
def test_ymh_flow_runs_on_nontrivial_bundles(t2, chern, rank):
    gauge, phi = random_state(t2, BundleSpec(rank, chern), seed=0, amplitude=0.3)
    _, report = minimize_ymh(gauge, phi, 2.0, SolveOptions(max_iters=20))
    energies = report.trace_frame()['energy'].to_numpy()
    assert len(energies) > 1
    assert np.all(np.diff(energies) <= 1e-12 * energies[0])
    assert report.verdict in (SOLUTION, MAX_ITERS)


def test_line_tau_scan(t2):
    model = ScanModel(torus=t2, spec=BundleSpec(1, (1,)), name='line', split=CATALOG['line'])
    table = tau_scan(model, [0.5, 1.5, 3.0], threads=2, progress=False)
    assert list(table['tau']) == [0.5, 1.5, 3.0]
    assert list(table['verdict']) == [NONEXISTENCE, SOLUTION, SOLUTION]
    assert list(table['stable']) == [False, True, True]
    solved = table[table['verdict'] == SOLUTION]
    assert np.allclose(solved['phi_norm_sq'], solved['predicted_phi_norm_sq'], rtol=1e-6)


def test_tau_scan_is_order_independent_of_threads(t2):
    model = ScanModel(torus=t2, spec=BundleSpec(1, (1,)), name='line')
    serial = tau_scan(model, [1.5, 2.5], threads=1, progress=False)
    parallel = tau_scan(model, [1.5, 2.5], threads=2, progress=False)
    assert np.allclose(serial['phi_norm_sq'], parallel['phi_norm_sq'], rtol=1e-12)


@pytest.mark.slow
def test_ymh_flow_converges_for_degree_one(t2):
    gauge, phi = random_state(t2, BundleSpec(1, (1,)), seed=0, amplitude=0.3)
    (gauge, phi), report = minimize_ymh(gauge, phi, 2.0)
    assert report.verdict == SOLUTION
    assert geometry.norm_sq(t2, phi) == pytest.approx(2.0 * np.pi, rel=1e-6)
    assert report.diagnostics['chern'] == 1


@pytest.mark.slow
def test_rank_two_scan(t2):
    model = ScanModel(torus=t2, spec=BundleSpec(2, (2,)), name='split-generic',
                      phi_support=(0, 1), split=CATALOG['split-generic'])
    grid = [0.6, 0.9, 1.1, 1.5, 1.9, 2.1, 2.4]
    table = tau_scan(model, grid, progress=False)
    assert list(table['stable']) == [False, False, True, True, True, False, False]
    expected = [SOLUTION if s else NONEXISTENCE for s in table['stable']]
    assert list(table['verdict']) == expected


def test_one_summand_model_has_no_solution(t2):
    model = ScanModel(torus=t2, spec=BundleSpec(2, (2,)), name='split-one-summand',
                      phi_support=(0,), split=CATALOG['split-one-summand'])
    table = tau_scan(model, [1.5], threads=1, progress=False)
    assert list(table['stable']) == [False]
    assert list(table['verdict']) == [NONEXISTENCE]
    assert table['reason'][0] != 'obstruction'
