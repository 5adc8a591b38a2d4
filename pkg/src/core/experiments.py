"""
實驗設定與執行

YAML 設定 → 完整解析後的 config (DEFAULTS 補齊) → 各實驗 runner → report.json / CSV / VTXF
exit code：0 = Solution 或預期判決，2 = NonExistence，1 = 錯誤或判決不符
"""
import copy
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime
from importlib import metadata

import numpy as np
import pandas as pd
import yaml

from src.core import geometry, stability
from src.core.bundle_fields import (BundleSpec, MetricField, degree, make_background,
                                    random_state, tensor_dual, values_of)
from src.core.database import RunLedger, new_run_id
from src.core.errors import ConfigError, ConstraintViolation, InvalidModel, VortexLabError
from src.core.functionals import (FieldState, ParamSet, bogomolny, constraint_check,
                                  energy_identity_gap, integral_identities, metric_density, ymh)
from src.core.operators import (convention_lock_defect, curvature, delta_table_digest,
                                poisson_solve)
from src.core.solvers import (NONEXISTENCE, SOLUTION, ScanModel, SolveOptions, generic_phi,
                              minimize_ymh, solve_coupled, solve_framed, solve_metric_line,
                              solve_metric_matrix, tau_scan)
from src.core.swkahler import (cross_term_identity, decoupling_experiment, random_sw_state,
                               sw_functional)
from src.core.transforms import (apply_u_transform, frame_metric_to_t, sigma_from, u_from_t)
from src.utils import report_io
from src.utils.checkpoint import save_state

logger = logging.getLogger(__name__)

try:
    VERSION = metadata.version('vortexlab')
except metadata.PackageNotFoundError:
    VERSION = '0.1.0'

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NONEXISTENCE = 2

EXPERIMENTS = ('solve-vortex', 'solve-coupled', 'solve-framed', 'scan-tau', 'check-identities',
               'stability', 'transform-u', 'sw-decouple')

DEFAULTS = {
    'experiment': None,
    'torus': {'dim': 1, 'grid': [32, 32], 'lengths': None},
    'bundle': {'rank': 1, 'chern': [1], 'chern_L': None, 'twist': None, 'phi_support': None},
    'params': {'tau': 2.0, 'tau_prime': None, 't': None, 't_prime': None,
               'f': None, 'f_prime': None, 's': None, 'frame_u': None},
    'solver': {'route': 'metric', 'seed': 0, 'amplitude': 0.3, 'tol': 1e-8, 'max_iters': 4000,
               'collapse_tol': 1e-6, 'plateau_window': 200, 'use_obstruction': False},
    'stability': {'summand_degrees': [1, 1], 'phi_support': [0, 1], 'phi_line_degree': 0,
                  'deg_L': None, 'tau': [0.6, 0.9, 1.1, 1.5, 1.9, 2.1, 2.4],
                  'extension': None, 'alpha': None},
    'scan': {'model': 'split-generic', 'grid': [0.6, 0.9, 1.1, 1.5, 1.9, 2.1, 2.4],
             'with_t_mode': None, 'boundary_margin': 0.1},
    'identities': {'seeds': [0, 1, 2], 'amplitude': 0.3, 'lock_tol': 1e-10, 'poisson_tol': 1e-12,
                   'gap_rtol': 1e-4, 'sw_rtol': 1e-4},
    'sw': {'kind': 'fixed', 'seeds': [0, 1, 2, 3, 4], 'f': 0.5, 'f_prime': None,
           'amplitude': 0.3, 'max_iters': 500, 'reducible_norm': 1e-6},
    'output': {'dir': 'runs', 'ledger': 'data/runs.db', 'xlsx': False, 'checkpoint': False,
               'grids': []},
}


# --- 設定檔 ---
def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"找不到設定檔 {path}", key='config', path=str(path)) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        raise ConfigError("YAML 解析失敗", key='config', path=str(path),
                          line=None if mark is None else mark.line + 1,
                          problem=str(getattr(exc, 'problem', exc))) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("設定檔頂層必須是 mapping", key='config', path=str(path))
    return raw


def _require(condition, message, key, value=None):
    if not condition:
        raise ConfigError(message, key=key, value=value)


def _check_function_spec(key, spec):
    if spec is None or isinstance(spec, (int, float)):
        return
    if isinstance(spec, list):
        spec = {'terms': spec}
    _require(isinstance(spec, dict), "函數參數必須是數字或 {mean, terms}", key, spec)
    unknown = set(spec) - {'mean', 'terms'}
    _require(not unknown, "函數參數含未知欄位", key, sorted(unknown))
    terms = spec.get('terms') or []
    _require(isinstance(terms, list), "terms 必須是清單", f"{key}.terms", terms)
    for i, term in enumerate(terms):
        _require(isinstance(term, dict) and isinstance(term.get('mode'), list),
                 "每個 Fourier 項需要 mode 清單", f"{key}.terms[{i}]", term)
        _require(term.get('kind', 'cos') in ('cos', 'sin'), "kind 只能是 cos 或 sin",
                 f"{key}.terms[{i}].kind", term.get('kind'))


def validate_config(config):
    experiment = config.get('experiment')
    _require(experiment in EXPERIMENTS, f"未知的 experiment (可用: {', '.join(EXPERIMENTS)})",
             'experiment', experiment)
    torus = config['torus']
    _require(torus.get('dim') in (1, 2), "torus.dim 只能是 1 或 2", 'torus.dim', torus.get('dim'))
    _require(isinstance(torus.get('grid'), list) and len(torus['grid']) == 2 * torus['dim'],
             "torus.grid 長度必須是 2·dim", 'torus.grid', torus.get('grid'))
    bundle = config['bundle']
    _require(isinstance(bundle.get('rank'), int) and bundle['rank'] >= 1, "bundle.rank 必須是正整數",
             'bundle.rank', bundle.get('rank'))
    _require(len(_as_list(bundle.get('chern'))) == torus['dim'], "bundle.chern 的數量必須等於 dim",
             'bundle.chern', bundle.get('chern'))
    _require(config['solver'].get('route') in ('metric', 'unitary'), "solver.route 只能是 metric 或 unitary",
             'solver.route', config['solver'].get('route'))
    _require(config['sw'].get('kind') in ('fixed', 'coupled'), "sw.kind 只能是 fixed 或 coupled",
             'sw.kind', config['sw'].get('kind'))
    for name, spec in config['params'].items():
        if name not in ('tau', 'tau_prime'):
            _check_function_spec(f"params.{name}", spec)
    grid = config['scan'].get('grid')
    _require(isinstance(grid, list) and grid, "scan.grid 必須是非空清單", 'scan.grid', grid)
    return config


def resolve_config(raw, experiment=None, seed=None, out_dir=None):
    """合併 DEFAULTS 與命令列覆寫，回傳完整解析後的 config"""
    config = deep_merge(DEFAULTS, raw)
    if experiment:
        config['experiment'] = experiment
    if seed is not None:
        config['solver']['seed'] = int(seed)
    if out_dir:
        config['output']['dir'] = out_dir
    return validate_config(config)


def _as_list(value):
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


# --- 由設定建構物件 ---
def torus_from(config):
    t = config['torus']
    return geometry.build_torus(t['dim'], t['grid'], t.get('lengths'))


def bundle_from(config, role='E'):
    b = config['bundle']
    if role == 'L':
        chern = _as_list(b.get('chern_L'))
        if not chern:
            raise ConfigError("需要 bundle.chern_L", key='bundle.chern_L')
        return BundleSpec(1, tuple(chern), 'L')
    return BundleSpec(b['rank'], tuple(_as_list(b['chern'])), 'E')


def _twist(config):
    twist = config['bundle'].get('twist')
    return None if twist is None else np.asarray(twist, dtype=float)


def param_field(torus, config, name, fallback=None):
    """常數 → 常數場；{mean, terms} → 頻寬受限的 Fourier 場；未提供時退回 fallback 的常數"""
    params = config['params']
    spec = params.get(name)
    if spec is None and fallback is not None:
        spec = params.get(fallback)
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return np.full(torus.grid, float(spec))
    if isinstance(spec, list):
        spec = {'terms': spec}
    return geometry.field_from_modes(torus, spec.get('terms') or [], float(spec.get('mean', 0.0)),
                                     key=f"params.{name}.terms")


def solve_options(config):
    return SolveOptions.from_config(config)


# --- 執行結果 ---
@dataclass
class RunResult:
    verdict: str
    exit_code: int
    report: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    state: object = None
    warnings: list = field(default_factory=list)


def verdict_exit(verdict):
    if verdict == SOLUTION:
        return EXIT_OK
    if verdict == NONEXISTENCE:
        return EXIT_NONEXISTENCE
    return EXIT_ERROR


def _identity_block(torus, density, rank, t_bar, deg):
    achieved = geometry.integrate(torus, density)
    predicted = 2.0 * np.pi * (rank * t_bar - deg)
    scale = max(abs(predicted), 1e-12)
    return {'phi_norm_sq': achieved, 'predicted_phi_norm_sq': predicted,
            'identity_relative_error': abs(achieved - predicted) / scale}


def _check_resume(resume, torus, spec):
    if resume is None:
        return None
    gauge = resume.gauge
    if gauge.torus.grid != torus.grid or gauge.spec.rank != spec.rank or gauge.spec.chern != spec.chern:
        raise ConfigError("checkpoint 與設定的環面或 bundle 不一致", key='--resume',
                          checkpoint_grid=list(gauge.torus.grid), config_grid=list(torus.grid))
    return resume


def run_solve_vortex(config, torus, resume=None):
    spec = bundle_from(config)
    opts = solve_options(config)
    solver = config['solver']
    t = param_field(torus, config, 't', 'tau')
    t_bar = geometry.mean(torus, t)
    r = spec.rank
    resume = _check_resume(resume, torus, spec)
    grids = {}

    if solver['route'] == 'unitary':
        if resume is not None:
            gauge, phi = resume.gauge, resume.phi
        else:
            gauge, phi = random_state(torus, spec, solver['seed'], solver['amplitude'], twist=_twist(config))
        (gauge, phi), report = minimize_ymh(gauge, phi, t, opts)
        phi = values_of(phi)
        density = np.abs(phi) ** 2 if r == 1 else np.sum(np.abs(phi) ** 2, axis=-1)
        state = FieldState(gauge=gauge, phi=phi)
        ilambda = curvature(gauge).ilambda
        grids['ilambda_F'] = ilambda if r == 1 else np.trace(ilambda, axis1=-2, axis2=-1).real
        energies = {'ymh': ymh(gauge, phi, t_bar), 'bogomolny': bogomolny(gauge, phi, t)}
    else:
        background = make_background(torus, spec, _twist(config))
        phi = values_of(generic_phi(background, config['bundle'].get('phi_support')))
        metric0 = None if resume is None else resume.metric
        if r == 1:
            metric, report = solve_metric_line(background, phi, metric0, t, opts)
            grids['u'] = metric.log_scale
        else:
            metric, report = solve_metric_matrix(background, phi, t, opts, metric0)
        density = metric_density(phi, metric)
        state = FieldState(gauge=background, phi=phi, metric=metric)
        energies = {}

    grids['phi_sq'] = density
    body = {'route': solver['route'], 'converged': report.converged, 'solve': report.to_dict()}
    body.update(_identity_block(torus, density, r, t_bar, degree(torus, spec)))
    body.update(energies)
    return RunResult(report.verdict, verdict_exit(report.verdict), body,
                     {'trace': report.trace_frame()}, grids, state, list(report.warnings))


def run_solve_coupled(config, torus, resume=None):
    spec_e = bundle_from(config)
    spec_l = bundle_from(config, 'L')
    opts = solve_options(config)
    t = param_field(torus, config, 't', 'tau')
    t_prime = param_field(torus, config, 't_prime', 'tau_prime')
    if t_prime is None:
        raise ConfigError("solve-coupled 需要 params.tau_prime 或 params.t_prime", key='params.tau_prime')

    gauge_e = make_background(torus, spec_e, _twist(config))
    gauge_l = make_background(torus, spec_l)
    phi = values_of(generic_phi(tensor_dual(gauge_e, gauge_l)))
    metric_e, metric_l, report = solve_coupled(gauge_e, gauge_l, phi, t, t_prime, opts)

    state = FieldState(gauge=gauge_e, gauge_L=gauge_l, phi=phi, metric=metric_e, metric_L=metric_l)
    params = ParamSet(t=t, t_prime=t_prime, torus=torus)
    identities = integral_identities(state, params)
    body = {'converged': report.converged, 'solve': report.to_dict(), **identities}
    t_bar, tp_bar = params.bar('t'), params.bar('t_prime')
    body['sigma'] = sigma_from(t_bar, tp_bar) if t_bar > tp_bar else None
    grids = {'phi_sq': metric_density(phi, metric_e) * np.exp(-metric_l.exponent)}
    return RunResult(report.verdict, verdict_exit(report.verdict), body,
                     {'trace': report.trace_frame()}, grids, None, list(report.warnings))


def run_solve_framed(config, torus, resume=None):
    spec = bundle_from(config)
    opts = solve_options(config)
    tau = float(config['params']['tau'])
    frame_u = param_field(torus, config, 'frame_u')
    if frame_u is None:
        frame_u = np.zeros(torus.grid)
    background = make_background(torus, spec, _twist(config))
    phi = values_of(generic_phi(background))

    metric, report = solve_framed(background, phi, frame_u, tau, opts)
    # 等價的 t 系統：t = τ - Δu，解應滿足 w_framed - u = w_t
    t = frame_metric_to_t(torus, frame_u, tau)
    metric_t, report_t = solve_metric_line(background, phi, None, t, opts)
    defect = float(np.abs(metric.exponent - frame_u - metric_t.exponent).max())

    body = {'converged': report.converged, 'solve': report.to_dict(),
            't_system': report_t.to_dict(), 'equivalence_defect': defect}
    density = metric_density(phi, metric) * np.exp(-frame_u)
    body.update(_identity_block(torus, density, 1, tau, degree(torus, spec)))
    grids = {'phi_sq': density, 'u': frame_u}
    state = FieldState(gauge=background, phi=phi, metric=metric, frame_u=frame_u)
    return RunResult(report.verdict, verdict_exit(report.verdict), body,
                     {'trace': report.trace_frame()}, grids, state, list(report.warnings))


def scan_model(config, torus):
    """把穩定性目錄中的 desk model 實現成格點上的 bundle (summand degree 必須相同)"""
    scan = config['scan']
    name = scan.get('model')
    if name not in stability.CATALOG:
        raise ConfigError("未知的 scan.model", key='scan.model', value=name,
                          allowed=sorted(stability.CATALOG))
    if torus.complex_dim != 1:
        raise ConfigError("scan-tau 只在 T² 上實現 desk model", key='torus.dim', value=torus.complex_dim)
    split = stability.CATALOG[name]
    degrees = set(split.summand_degrees)
    if len(degrees) != 1:
        raise InvalidModel("summand degree 不同的模型無法以 ℓ⊗C^r 實現，只提供穩定性判定",
                           model=name, summand_degrees=list(split.summand_degrees))
    d = degrees.pop()
    spec = BundleSpec(split.rank, (split.rank * d,), 'E')
    return ScanModel(torus=torus, spec=spec, name=name, twist=_twist(config),
                     phi_support=split.phi_support if split.rank > 1 else None,
                     t_terms=tuple(scan.get('with_t_mode') or ()), split=split,
                     seed=config['solver']['seed'], amplitude=config['solver']['amplitude'],
                     route='metric')


def scan_agreement(table, interval, margin):
    """
    穩定 ↔ Solution、不穩定 ↔ NonExistence；MaxIters 一律算不一致
    距離區間端點小於 margin 的 τ (以有理數比較) 只標記 boundary，不計入
    """
    margin = stability.rational(margin)
    bounds = [b for b in (interval.lower, interval.upper) if b is not None]
    table = table.copy()
    near = table['tau'].apply(lambda tau: any(abs(stability.rational(tau) - b) < margin for b in bounds))
    expected = table['stable'].astype(bool).map({True: SOLUTION, False: NONEXISTENCE})
    mismatch = (table['verdict'] != expected) & ~near
    table['expected'] = expected
    table['boundary'] = near
    table['agrees'] = ~mismatch
    return table, int(mismatch.sum())


def run_scan_tau(config, torus, resume=None):
    model = scan_model(config, torus)
    grid = [float(v) for v in config['scan']['grid']]
    table = tau_scan(model, grid, solve_options(config))
    interval = stability.admissible_interval(model.split)
    table, disagreements = scan_agreement(table, interval, config['scan'].get('boundary_margin', 0.1))

    icon = '✅' if disagreements == 0 else '❌'
    logger.info("%s τ 掃描完成：%d 個點，%d 個不一致，穩定區間 %s", icon, len(table), disagreements, interval)
    body = {'model': model.split.to_dict(), 'interval': interval.to_dict(),
            'disagreements': disagreements, 'rows': table.to_dict(orient='records')}
    verdict = SOLUTION if disagreements == 0 else 'Disagreement'
    return RunResult(verdict, EXIT_OK if disagreements == 0 else EXIT_ERROR, body, {'scan': table})


def run_check_identities(config, torus, resume=None):
    """convention lock、Poisson 反演、能量恆等式 gap (T⁴ 上另含 SW 恆等式)"""
    ident = config['identities']
    seeds = [int(s) for s in ident['seeds']]
    spec = bundle_from(config)
    tau = float(config['params']['tau'])
    rows = []
    checks = {}

    lock, poisson = [], []
    line = make_background(torus, BundleSpec(1, spec.chern if spec.rank == 1 else (0,) * torus.complex_dim))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        u = geometry.band_limited_noise(torus, rng)
        u = u - geometry.mean(torus, u)
        metric = MetricField(torus, 1, 0.5 * geometry.band_limited_noise(torus, rng))
        lock.append(convention_lock_defect(line, metric, u))
        poisson.append(float(np.abs(poisson_solve(torus, geometry.apply_delta(torus, u)) - u).max()))
    checks['convention_lock'] = {'max': max(lock), 'ok': max(lock) < ident['lock_tol']}
    checks['poisson_roundtrip'] = {'max': max(poisson), 'ok': max(poisson) < ident['poisson_tol']}

    gaps, energies = [], []
    for seed in seeds:
        gauge, phi = random_state(torus, spec, seed, ident['amplitude'], twist=_twist(config))
        dealias = torus.complex_dim == 1 and spec.rank == 1
        gap = energy_identity_gap(gauge, phi, tau, dealias=dealias)
        gaps.append(gap)
        energies.append(ymh(gauge, phi, tau, dealias))
        rows.append({'seed': seed, 'check': 'energy_gap', 'value': gap})
    # deg E = 0 時 gap 本身接近零，改以 YMH 的大小為尺度
    scale = max(abs(float(np.mean(gaps))), float(np.mean(energies)), 1e-12)
    spread = (max(gaps) - min(gaps)) / scale
    expected = 4.0 * np.pi * tau * degree(torus, spec)
    checks['energy_gap'] = {'mean': float(np.mean(gaps)), 'relative_spread': float(spread),
                            'expected_T2': expected if torus.complex_dim == 1 else None,
                            'ok': bool(spread < ident['gap_rtol'])}

    if torus.complex_dim == 2:
        rel, cross = [], []
        for seed in seeds:
            state = random_sw_state(torus, seed, ident['amplitude'],
                                    chern_l=(0,) * torus.complex_dim)
            values = sw_functional(state, ParamSet(f=0.0), 'fixed')
            rel.append(values['relative_gap'])
            cross.append(cross_term_identity(state)['defect'])
            rows.append({'seed': seed, 'check': 'sw_gap', 'value': values['gap']})
        checks['sw_identity'] = {'max_relative_gap': max(rel), 'ok': max(rel) < ident['sw_rtol']}
        checks['cross_term'] = {'max_defect': max(cross), 'ok': max(cross) < 1e-10}

    ok = all(c['ok'] for c in checks.values())
    logger.info("%s 恆等式檢查：%s", '✅' if ok else '❌',
                ', '.join(f"{k}={'ok' if v['ok'] else 'FAIL'}" for k, v in checks.items()))
    return RunResult(SOLUTION if ok else 'IdentityFailure', EXIT_OK if ok else EXIT_ERROR,
                     {'checks': checks}, {'identities': pd.DataFrame(rows)})


def run_stability(config, torus=None, resume=None):
    block = config['stability']
    model = stability.SplitModel(tuple(block['summand_degrees']), tuple(block['phi_support']),
                                 int(block.get('phi_line_degree') or 0), name='config')
    deg_l = block.get('deg_L')
    rows = []
    for tau in _as_list(block.get('tau')):
        verdict = (stability.pair_stable(model, tau) if deg_l is None
                   else stability.triple_stable(model, deg_l, tau))
        rows.append({'tau': str(stability.rational(tau)), **verdict.to_dict()})
    body = {'model': model.to_dict(), 'interval': stability.admissible_interval(model, deg_l).to_dict(),
            'verdicts': rows}
    if deg_l is not None:
        body['deg_L'] = deg_l

    ext = block.get('extension')
    if ext:
        ext_model = stability.ExtensionModel(int(ext['r1']), int(ext['d1']), int(ext['r2']), int(ext['d2']),
                                             tuple(tuple(c) for c in ext.get('candidates', [])))
        alpha = block.get('alpha', ext.get('alpha'))
        if alpha is None:
            raise ConfigError("extension 需要 alpha", key='stability.alpha')
        verdict = stability.extension_alpha_stable(ext_model, alpha)
        body['extension'] = {'model': ext_model.to_dict(), 'alpha': str(stability.rational(alpha)),
                             'mu_alpha': str(stability.alpha_slope(ext_model.whole, alpha)),
                             **verdict.to_dict()}
    table = pd.DataFrame([{k: v for k, v in row.items() if k != 'witness'} for row in rows])
    return RunResult(SOLUTION, EXIT_OK, body, {'stability': table})


def run_transform_u(config, torus, resume=None):
    """t → (τ, u)，並比較直接 t 求解與 τ 求解 + 逆變換"""
    spec = bundle_from(config)
    t = param_field(torus, config, 't', 'tau')
    ut = u_from_t(torus, t)
    body = {'transform': ut.to_dict()}
    grids = {'u': ut.u}
    warnings = []

    if spec.rank == 1:
        opts = solve_options(config)
        background = make_background(torus, spec, _twist(config))
        phi = values_of(generic_phi(background))
        metric_t, report_t = solve_metric_line(background, phi, None, t, opts)
        phi_u = np.exp(-0.5 * ut.u) * phi
        metric_tau, report_tau = solve_metric_line(background, phi_u, None, ut.tau, opts)
        moved, _ = apply_u_transform(metric_tau, phi_u, ut.u, 'tau_to_t')
        diff = moved.exponent - metric_t.exponent
        diff = diff - geometry.mean(torus, diff)
        body.update({'t_solve': report_t.to_dict(), 'tau_solve': report_tau.to_dict(),
                     'metric_sup_defect': float(np.abs(diff).max())})
        verdict = SOLUTION if report_t.converged and report_tau.converged else report_t.verdict
        warnings = list(report_tau.warnings)
    else:
        verdict = SOLUTION
    return RunResult(verdict, verdict_exit(verdict), body, {}, grids, None, warnings)


def run_sw_decouple(config, torus, resume=None):
    if torus.complex_dim != 2:
        raise ConfigError("sw-decouple 需要 T⁴ (torus.dim = 2)", key='torus.dim', value=torus.complex_dim)
    sw = config['sw']
    report = decoupling_experiment(torus, sw['kind'], float(sw['f']), sw.get('f_prime'),
                                   [int(s) for s in sw['seeds']], float(sw['amplitude']),
                                   int(sw['max_iters']), float(sw['reducible_norm']))
    body = report.to_dict()
    verdict = SOLUTION if report.agrees else 'BranchMismatch'
    return RunResult(verdict, EXIT_OK if report.agrees else EXIT_ERROR, body, {'runs': report.frame()})


RUNNERS = {
    'solve-vortex': run_solve_vortex,
    'solve-coupled': run_solve_coupled,
    'solve-framed': run_solve_framed,
    'scan-tau': run_scan_tau,
    'check-identities': run_check_identities,
    'stability': run_stability,
    'transform-u': run_transform_u,
    'sw-decouple': run_sw_decouple,
}


def precheck_constraints(config, torus):
    """耦合系統在任何迭代之前先檢查線性約束"""
    experiment = config['experiment']
    if experiment == 'solve-coupled':
        spec_e, spec_l = bundle_from(config), bundle_from(config, 'L')
        params = ParamSet(tau=config['params']['tau'], tau_prime=config['params']['tau_prime'],
                          t=param_field(torus, config, 't'), t_prime=param_field(torus, config, 't_prime'),
                          torus=torus)
        degrees = {'rank': spec_e.rank, 'deg_E': degree(torus, spec_e), 'deg_L': degree(torus, spec_l)}
        result = constraint_check('t-tprime', params, degrees)
        if not result.ok:
            raise ConstraintViolation("r·t̄ + t̄′ ≠ deg E + deg L，拒絕求解",
                                      violation=result.violation, required_t_prime=result.required)
        return result.to_dict()
    if experiment == 'sw-decouple' and config['sw']['kind'] == 'coupled' and config['sw'].get('f_prime') is not None:
        params = ParamSet(f=float(config['sw']['f']), f_prime=float(config['sw']['f_prime']), torus=torus)
        result = constraint_check('ff', params, {'rank': 1, 'deg_E': 0.0, 'deg_L': 0.0})
        if not result.ok:
            raise ConstraintViolation("f、f′ 約束不成立：f̄ + f̄′ 必須為 0 (平凡 E、L)",
                                      violation=result.violation, required_f_prime=result.required)
        return result.to_dict()
    return None


def _write_outputs(config, result, out_dir, torus):
    output = config['output']
    written = []
    for name, table in result.tables.items():
        filename = 'trace.csv' if name == 'trace' else f"{name}.csv"
        written += report_io.write_table(table, os.path.join(out_dir, filename), output.get('xlsx', False))
    for name in _as_list(output.get('grids')):
        if name not in result.grids:
            logger.warning("⚠️ 此實驗沒有 grid '%s' (可用: %s)", name, sorted(result.grids))
            continue
        written.append(report_io.emit_grid(torus, result.grids[name], os.path.join(out_dir, f"grid_{name}.csv")))
    if output.get('checkpoint') and result.state is not None:
        written.append(save_state(os.path.join(out_dir, 'state.vtxf'), result.state))
    return written


def run(config, resume=None, ledger=True):
    """
    執行一個已解析的 config，回傳 (exit_code, report)
    report.json 一定會寫出 (錯誤時包含 error / message / details)
    """
    started = time.perf_counter()
    run_id = new_run_id()
    experiment = config['experiment']
    out_dir = os.path.join(config['output']['dir'], run_id)
    os.makedirs(out_dir, exist_ok=True)
    report = {'run_id': run_id, 'experiment': experiment, 'version': VERSION,
              'created_at': datetime.now().isoformat(timespec='seconds'), 'config': config,
              'delta_digest': None}
    logger.info("🚀 %s (%s) → %s", experiment, run_id, out_dir)

    verdict, exit_code = None, EXIT_ERROR
    try:
        torus = torus_from(config)
        report['delta_digest'] = delta_table_digest(torus)
        constraint = precheck_constraints(config, torus)
        if constraint is not None:
            report['constraint'] = constraint
        result = RUNNERS[experiment](config, torus, resume)
        verdict, exit_code = result.verdict, result.exit_code
        report.update(result.report)
        report['warnings'] = result.warnings
        report['artifacts'] = [os.path.basename(p) for p in _write_outputs(config, result, out_dir, torus)]
    except VortexLabError as exc:
        logger.error("❌ %s: %s %s", type(exc).__name__, exc.message, exc.details)
        report.update(exc.to_dict())
    except Exception as exc:
        logger.exception("❌ 未預期的錯誤")
        report.update({'error': type(exc).__name__, 'message': str(exc), 'details': {}})

    report['verdict'] = verdict
    report['exit_code'] = exit_code
    report['wall_time'] = time.perf_counter() - started
    report_io.write_json(os.path.join(out_dir, 'report.json'), report)

    if ledger:
        residual = report.get('solve', {}).get('residual', {}).get('total') if isinstance(report.get('solve'), dict) else None
        try:
            RunLedger(config=config).record_run(run_id, experiment, config, verdict, exit_code, residual,
                                                report['wall_time'], out_dir, report.get('error'), VERSION)
        except Exception as exc:
            logger.warning("⚠️ ledger 寫入失敗: %s", exc)
    icon = {EXIT_OK: '✅', EXIT_NONEXISTENCE: '⚠️'}.get(exit_code, '❌')
    logger.info("%s %s 結束: verdict=%s exit=%d (%.2fs)", icon, experiment, verdict, exit_code, report['wall_time'])
    return exit_code, report
