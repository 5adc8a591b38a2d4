import json
from fractions import Fraction

import pandas as pd
import pytest

from main import main
from src.core.errors import ConfigError
from src.core.experiments import DEFAULTS, load_config, resolve_config, scan_agreement
from src.core.solvers import MAX_ITERS, NONEXISTENCE, SOLUTION
from src.core.stability import Interval


def _reports(tmp_path):
    return [json.loads(p.read_text(encoding='utf-8'))
            for p in sorted((tmp_path / 'runs').glob('*/report.json'))]


def _vortex_config(tau, **output):
    return {'torus': {'dim': 1, 'grid': [16, 16]}, 'bundle': {'rank': 1, 'chern': [1]},
            'params': {'tau': tau}, 'output': output}


def test_resolve_fills_defaults():
    config = resolve_config({'torus': {'grid': [16, 16]}}, 'stability', seed=5)
    assert config['experiment'] == 'stability'
    assert config['solver']['seed'] == 5
    assert config['solver']['tol'] == DEFAULTS['solver']['tol']


def test_unknown_route_is_rejected():
    with pytest.raises(ConfigError) as info:
        resolve_config({'solver': {'route': 'magic'}}, 'solve-vortex')
    assert info.value.details['key'] == 'solver.route'


def test_bad_yaml_reports_line(tmp_path):
    path = tmp_path / 'broken.yaml'
    path.write_text("torus:\n  dim: 1\n  grid: [16, 16\n", encoding='utf-8')
    with pytest.raises(ConfigError) as info:
        load_config(str(path))
    assert info.value.details['line'] is not None
    assert main(['stability', '--config', str(path), '--no-ledger']) == 1


def test_solve_vortex_solution(write_config, tmp_path):
    path = write_config(_vortex_config(2.0))
    assert main(['solve-vortex', '--config', str(path), '--no-ledger']) == 0
    report = _reports(tmp_path)[0]
    assert report['verdict'] == 'Solution'
    assert report['exit_code'] == 0
    assert report['phi_norm_sq'] == pytest.approx(2.0 * 3.141592653589793, rel=1e-6)
    assert report['delta_digest']
    assert 'trace.csv' in report['artifacts']


def test_solve_vortex_nonexistence(write_config, tmp_path):
    path = write_config(_vortex_config(0.5))
    assert main(['solve-vortex', '--config', str(path), '--no-ledger']) == 2
    assert _reports(tmp_path)[0]['verdict'] == 'NonExistence'


def test_coupled_constraint_is_checked_first(write_config, tmp_path):
    data = _vortex_config(1.5)
    data['bundle']['chern_L'] = [-1]
    data['params']['tau_prime'] = -1.0
    path = write_config(data)
    assert main(['solve-coupled', '--config', str(path), '--no-ledger']) == 1
    report = _reports(tmp_path)[0]
    assert report['error'] == 'ConstraintViolation'
    assert report['details']['required_t_prime'] == pytest.approx(-1.5)


def test_stability_report(write_config, tmp_path):
    path = write_config({'output': {'xlsx': True}})
    assert main(['stability', '--config', str(path), '--no-ledger']) == 0
    report = _reports(tmp_path)[0]
    assert report['interval'] == {'lower': '1', 'upper': '2', 'empty': False}
    assert [row['stable'] for row in report['verdicts']] == [False, False, True, True, True, False, False]
    run_dir = next((tmp_path / 'runs').iterdir())
    assert len(pd.read_excel(run_dir / 'stability.xlsx')) == 7


def test_history_lists_recorded_runs(write_config, tmp_path, capsys):
    path = write_config({})
    assert main(['stability', '--config', str(path)]) == 0
    ledger = str(tmp_path / 'runs.db')
    assert main(['history', '--ledger', ledger]) == 0
    assert 'stability' in capsys.readouterr().out
    export = tmp_path / 'history.csv'
    assert main(['history', '--ledger', ledger, '--export', str(export)]) == 0
    assert list(pd.read_csv(export)['verdict']) == ['Solution']


def test_history_without_ledger(tmp_path):
    assert main(['history', '--ledger', str(tmp_path / 'none.db')]) == 1


def test_resume_from_checkpoint(write_config, tmp_path):
    path = write_config(_vortex_config(2.0, checkpoint=True))
    assert main(['solve-vortex', '--config', str(path), '--no-ledger']) == 0
    checkpoint = next((tmp_path / 'runs').glob('*/state.vtxf'))
    assert main(['solve-vortex', '--config', str(path), '--no-ledger', '--resume', str(checkpoint)]) == 0


def test_resume_rejects_other_grid(write_config, tmp_path):
    path = write_config(_vortex_config(2.0, checkpoint=True))
    assert main(['solve-vortex', '--config', str(path), '--no-ledger']) == 0
    checkpoint = next((tmp_path / 'runs').glob('*/state.vtxf'))
    other = write_config({**_vortex_config(2.0), 'torus': {'dim': 1, 'grid': [32, 32]}}, 'other.yaml')
    assert main(['solve-vortex', '--config', str(other), '--no-ledger', '--resume', str(checkpoint)]) == 1


def _scan_table(rows):
    return pd.DataFrame(rows, columns=['tau', 'verdict', 'stable'])


def test_scan_agreement_requires_matching_verdicts():
    table = _scan_table([(0.6, NONEXISTENCE, False), (1.5, SOLUTION, True),
                         (1.6, MAX_ITERS, True), (2.4, MAX_ITERS, False)])
    out, disagreements = scan_agreement(table, Interval(Fraction(1), Fraction(2)), 0.1)
    assert disagreements == 2
    assert list(out['agrees']) == [True, True, False, False]
    assert list(out['expected']) == [NONEXISTENCE, SOLUTION, SOLUTION, NONEXISTENCE]


def test_scan_boundary_margin_is_exact():
    # 0.9 恰好距離端點 1/10，不算 boundary (浮點數 1 - 0.9 < 0.1)
    table = _scan_table([(0.9, MAX_ITERS, False), (1.1, SOLUTION, True), (2.05, MAX_ITERS, False)])
    out, disagreements = scan_agreement(table, Interval(Fraction(1), Fraction(2)), 0.1)
    assert list(out['boundary']) == [False, False, True]
    assert disagreements == 1


def test_scan_one_summand_model(write_config, tmp_path):
    path = write_config({'torus': {'dim': 1, 'grid': [16, 16]},
                         'scan': {'model': 'split-one-summand', 'grid': [1.5]}})
    assert main(['scan-tau', '--config', str(path), '--no-ledger']) == 0
    report = _reports(tmp_path)[0]
    assert report['interval']['empty'] is True
    assert report['disagreements'] == 0
    assert [row['verdict'] for row in report['rows']] == ['NonExistence']
