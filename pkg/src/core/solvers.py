"""
求解器：unitary 圖像的 YMH 梯度流、度量圖像的 Kazdan–Warner Newton 與矩陣 heat flow、
耦合系統與 τ 掃描

判決 (verdict) 只有三種：Solution / NonExistence / MaxIters，皆為資料而非例外。
"""
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
import scipy.sparse.linalg
from tqdm import tqdm

from src.core import geometry
from src.core.bundle_fields import (MetricField, chern_number, degree, holomorphic_basis,
                                    make_background, random_state, tensor_dual, values_of)
from src.core.errors import ConstraintViolation, InvalidModel
from src.core.functionals import (FieldState, ParamSet, ResidualReport, SystemKind,
                                  _h_norm, constraint_check, metric_density,
                                  metric_moment_residual, outer, residuals, ymh)
from src.core.operators import (chern_metric_curvature, curvature, dbar_cov, dbar_norm,
                                end_derivative, poisson_solve, unitary_shift)

logger = logging.getLogger(__name__)

SOLUTION = 'Solution'
NONEXISTENCE = 'NonExistence'
MAX_ITERS = 'MaxIters'
CONSTRAINT_TOL = 1e-8


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_iters: int = 4000
    step: float = None              # None → 0.1 / (1 + τ)
    max_step: float = 2.0
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    step_growth: float = 1.5
    collapse_tol: float = 1e-6
    plateau_window: int = 200
    plateau_rtol: float = 1e-3
    use_obstruction: bool = False   # True → 積分障礙直接判 NonExistence，不跑 flow
    newton_max: int = 80
    cg_rtol: float = 1e-12
    precondition: bool = True
    log_every: int = 200

    def __post_init__(self):
        if self.tol <= 0 or self.collapse_tol <= 0 or self.plateau_window < 1:
            raise InvalidModel("SolveOptions 的門檻必須為正", tol=self.tol,
                               collapse_tol=self.collapse_tol)

    @classmethod
    def from_config(cls, config):
        section = (config or {}).get('solver', {}) or {}
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in section.items() if k in known})

    def initial_step(self, tau):
        return self.step if self.step is not None else 0.1 / (1.0 + abs(float(np.mean(tau))))

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    verdict: str
    residual: ResidualReport
    iterations: int = 0
    trace: list = field(default_factory=list)
    wall_time: float = 0.0
    reason: str = ''
    warnings: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.verdict == SOLUTION

    def trace_frame(self):
        return pd.DataFrame(self.trace, columns=['iter', 'energy', 'residual_total', 'step'])

    def to_dict(self):
        return {
            'converged': self.converged,
            'verdict': self.verdict,
            'reason': self.reason,
            'iterations': self.iterations,
            'wall_time': self.wall_time,
            'residual': self.residual.to_dict(),
            'warnings': list(self.warnings),
            'diagnostics': {k: _plain(v) for k, v in self.diagnostics.items()},
        }


def _plain(value):
    if isinstance(value, (np.generic,)):
        return value.item()
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def _finish(verdict, residual, started, iterations, trace, reason='', **diagnostics):
    report = SolveReport(verdict, residual, iterations, trace,
                         time.perf_counter() - started, reason, diagnostics=diagnostics)
    icon = '✅' if verdict == SOLUTION else '⚠️'
    logger.info("%s %s (%s) iters=%d residual=%.3e", icon, verdict, reason or '-',
                iterations, residual.total)
    return report


def _plateaued(history, window, rtol):
    if len(history) <= window:
        return False
    old, new = history[-window - 1], history[-1]
    return new > (1.0 - rtol) * old


# --- Hermitian 小工具 ---
def _herm(m, rank):
    if rank == 1:
        return np.real(m)
    return 0.5 * (m + np.swapaxes(m.conj(), -1, -2))


def _outer(u, v, rank):
    """u v^† (r=1 為 u·conj(v))"""
    if rank == 1:
        return u * np.conj(v)
    return np.einsum('...p,...q->...pq', u, v.conj())


def _act(matrix, vec, rank):
    if rank == 1:
        return matrix * vec
    return np.einsum('...pq,...q->...p', matrix, vec)


def _expm_hermitian(m, scale):
    """exp(scale·M)，M 為逐點 Hermitian"""
    w, v = np.linalg.eigh(m)
    return np.einsum('...ik,...k,...jk->...ij', v, np.exp(scale * w), v.conj())


def _precondition_components(torus, field, precond):
    # 連絡擾動的第一軸是分量軸，逐分量作用
    return np.stack([geometry.apply_multiplier(torus, comp, precond) for comp in field])


def _real_inner(torus, u, v):
    return float(np.real(np.vdot(u, v)) * torus.cell_volume)


# --- unitary 圖像：Bogomolny 泛函的梯度 ---
def curvature_adjoint(gauge, lam, g02=None):
    """
    泛函 ∫tr(lam·iΛF) + 4Re∫tr(g02^†·F^{0,2}) 對擾動 a 的梯度
    (lam Hermitian；∇ 為完整連絡 C = twist + a 的 End 導數)
    """
    torus = gauge.torus
    r = gauge.rank
    shape = (torus.real_dim,) + torus.grid + (() if r == 1 else (r, r))
    grad = np.zeros(shape, dtype=float if r == 1 else complex)

    def nabla(x, axis):
        return end_derivative(gauge, x, axis)

    for a, b in torus.complex_pairs():
        grad[b] -= nabla(lam, a)
        grad[a] += nabla(lam, b)

    if g02 is not None:
        if r == 1:
            gr, gi = np.real(g02), np.imag(g02)
        else:
            gh = np.swapaxes(g02.conj(), -1, -2)
            gr, gi = 0.5 * (g02 + gh), (g02 - gh) / 2j
        grad[3] -= 2.0 * nabla(gr, 0)
        grad[0] += 2.0 * nabla(gr, 3)
        grad[2] -= 2.0 * nabla(gr, 1)
        grad[1] += 2.0 * nabla(gr, 2)
        grad[2] += 2.0 * nabla(gi, 0)
        grad[0] -= 2.0 * nabla(gi, 2)
        grad[3] -= 2.0 * nabla(gi, 1)
        grad[1] += 2.0 * nabla(gi, 3)
    return grad


def _identity_times(t, rank):
    t = np.asarray(t, dtype=float)
    return t if rank == 1 else t[..., None, None] * np.eye(rank)


def bogomolny_gradient(gauge, phi, t):
    """
    回傳 (B, ∇_a B, ∇_φ B, residual)，
    B = 4‖F^{0,2}‖² + 4‖∂̄φ‖² + ‖iΛF + φφ* - t‖²
    """
    torus = gauge.torus
    r = gauge.rank
    curv = curvature(gauge)
    chi = dbar_cov(gauge, phi)
    mu = curv.ilambda + outer(phi, r) - _identity_times(t, r)

    f02_sq = 0.0 if curv.f02 is None else geometry.norm_sq(torus, curv.f02)
    chi_sq = sum(geometry.norm_sq(torus, c) for c in chi)
    mu_sq = geometry.norm_sq(torus, mu)
    value = 4.0 * f02_sq + 8.0 * chi_sq + mu_sq

    grad_a = curvature_adjoint(gauge, 2.0 * mu, None if curv.f02 is None else 2.0 * curv.f02)
    deriv = gauge.derivative()
    grad_phi = 4.0 * _act(mu, phi, r)
    for j, (a, b) in enumerate(torus.complex_pairs()):
        grad_a[a] += 8.0 * _herm(1j * _outer(chi[j], phi, r), r)
        grad_a[b] += 8.0 * _herm(_outer(chi[j], phi, r), r)
        del_chi = 0.5 * (deriv.apply(chi[j], a) - 1j * deriv.apply(chi[j], b))
        grad_phi = grad_phi - 16.0 * del_chi

    residual = ResidualReport(r_holo=float(np.sqrt(2.0 * chi_sq)), r_02=float(np.sqrt(f02_sq)),
                              r_moment=float(np.sqrt(mu_sq)))
    return value, grad_a, grad_phi, residual


def minimize_ymh(gauge, phi, tau, opts=None):
    """
    在固定 bundle 上以 preconditioned 梯度下降 + Armijo backtracking 最小化 Bogomolny 泛函
    (與 YMH_τ 只差拓樸常數)。tau 可為常數或函數 t。
    回傳 ((gauge, phi), SolveReport)
    """
    opts = opts or SolveOptions()
    started = time.perf_counter()
    torus = gauge.torus
    r = gauge.rank
    if gauge.frame is not None:
        raise InvalidModel("minimize_ymh 需要無 gauge frame 的場")
    t = np.asarray(tau, dtype=float) * np.ones(torus.grid)
    t_bar = geometry.mean(torus, t)
    deg = degree(torus, gauge.spec)
    chern_before = chern_number(gauge)
    phi = values_of(phi).astype(complex)
    logger.info("🚀 YMH flow 開始: rank=%d deg=%.4f t̄=%.4f grid=%s", r, deg, t_bar, torus.grid)

    if gauge.perturbation is None:
        shape = (torus.real_dim,) + torus.grid + (() if r == 1 else (r, r))
        a = np.zeros(shape, dtype=float if r == 1 else complex)
    else:
        a = np.array(gauge.perturbation)

    current = gauge.with_perturbation(a)
    value, grad_a, grad_phi, res = bogomolny_gradient(current, phi, t)

    if opts.use_obstruction and r * t_bar <= deg + 1e-12:
        return (current, phi), _finish(NONEXISTENCE, res, started, 0, [], 'obstruction',
                                       deg=deg, t_bar=t_bar)

    precond = geometry.sobolev_preconditioner(torus) if opts.precondition else np.ones(torus.grid)
    step = opts.initial_step(t_bar)
    trace = [(0, value, res.total, 0.0)]
    sup_history = []
    energy_history = [value]
    prev = None

    for it in range(1, opts.max_iters + 1):
        if res.total < opts.tol:
            return (current, phi), _finish(
                SOLUTION, res, started, it - 1, trace, 'converged',
                ymh=ymh(current, phi, t_bar), chern=chern_number(current), chern_before=chern_before)

        pa = _precondition_components(torus, grad_a, precond)
        pp = geometry.apply_multiplier(torus, grad_phi, precond)
        slope = _real_inner(torus, grad_a, pa) + _real_inner(torus, grad_phi, pp)

        if prev is not None:
            # Barzilai–Borwein 試探步長 (preconditioned)
            s_a, s_p, y_a, y_p = prev
            sy = _real_inner(torus, s_a, y_a) + _real_inner(torus, s_p, y_p)
            ypy = (_real_inner(torus, y_a, _precondition_components(torus, y_a, precond))
                   + _real_inner(torus, y_p, geometry.apply_multiplier(torus, y_p, precond)))
            if sy > 0 and ypy > 0:
                step = min(max(sy / ypy, 1e-6), opts.max_step)
            else:
                step = min(step * opts.step_growth, opts.max_step)

        accepted = False
        for _ in range(opts.max_backtracks):
            trial_a = a - step * pa
            trial_phi = phi - step * pp
            trial = gauge.with_perturbation(trial_a)
            new_value, new_ga, new_gp, new_res = bogomolny_gradient(trial, trial_phi, t)
            if new_value <= value - opts.armijo * step * slope:
                accepted = True
                break
            step *= opts.backtrack

        if not accepted:
            logger.debug("line search 失敗 @ iter %d", it)
            verdict = NONEXISTENCE if _collapsed(phi, opts) else MAX_ITERS
            return (current, phi), _finish(verdict, res, started, it - 1, trace, 'line-search stalled',
                                           sup_phi=float(np.abs(phi).max()), chern_before=chern_before)

        prev = (trial_a - a, trial_phi - phi, new_ga - grad_a, new_gp - grad_phi)
        a, phi, current = trial_a, trial_phi, trial
        value, grad_a, grad_phi, res = new_value, new_ga, new_gp, new_res
        trace.append((it, value, res.total, step))
        energy_history.append(value)
        sup_history.append(float(np.abs(phi).max()))

        if it % opts.log_every == 0:
            logger.debug("iter %d: B=%.6e residual=%.3e step=%.3e sup|φ|=%.3e",
                         it, value, res.total, step, sup_history[-1])

        if _collapsed(phi, opts) and _plateaued(energy_history, min(opts.plateau_window, 50), opts.plateau_rtol):
            return (current, phi), _finish(NONEXISTENCE, res, started, it, trace, 'collapse',
                                           sup_phi=sup_history[-1], chern_before=chern_before)

    verdict = NONEXISTENCE if _collapsed(phi, opts) else MAX_ITERS
    return (current, phi), _finish(verdict, res, started, opts.max_iters, trace, 'max-iters',
                                   sup_phi=float(np.abs(phi).max()), chern_before=chern_before)


def _collapsed(phi, opts):
    return float(np.abs(phi).max()) < opts.collapse_tol


# --- 度量圖像：純量 Kazdan–Warner ---
@dataclass
class _KWResult:
    w: np.ndarray
    status: str
    iterations: int
    trace: list


def kazdan_warner(torus, c, rho, target, opts, w0=None):
    """
    damped Newton 解 Δw + c + ρe^w = target (ρ >= 0)
    線性化 Δ + ρe^w 以 cg 求解，preconditioner 為 (λ(k) + mean ρe^w)^{-1}
    """
    rho = np.asarray(rho, dtype=float)
    gap = geometry.mean(torus, target - c)
    trace = []
    if w0 is None:
        if float(rho.max()) <= 0 or (opts.use_obstruction and gap <= 0):
            return _KWResult(None, 'obstruction', 0, trace)
        v = poisson_solve(torus, (target - c) - gap)
        base = geometry.mean(torus, rho * np.exp(v))
        # gap <= 0 時沒有合理的起點，從 mean ρe^w = 1 出發讓 Newton 自己走向 collapse
        w = v + np.log((gap if gap > 0 else 1.0) / base)
    else:
        w = np.array(w0, dtype=float)

    lam = geometry.delta_symbol(torus)
    n = torus.n_sites
    shape = torus.grid

    def defect(w_try):
        return geometry.apply_delta(torus, w_try) + c + rho * np.exp(w_try) - target

    g = defect(w)
    res = geometry.l2_norm(torus, g)
    for it in range(opts.newton_max):
        m = rho * np.exp(w)
        trace.append((it, float(geometry.mean(torus, m)), res, 1.0))
        # |φ|²_H 的平均值等於 t̄ - deg；趨近 0 代表度量退化
        if float(geometry.mean(torus, m)) < opts.collapse_tol:
            return _KWResult(w, 'collapse', it, trace)
        if res < opts.tol:
            return _KWResult(w, 'converged', it, trace)

        jac = scipy.sparse.linalg.LinearOperator(
            (n, n), dtype=float,
            matvec=lambda x: (geometry.apply_delta(torus, x.reshape(shape)) + m * x.reshape(shape)).ravel())
        inv = 1.0 / (lam + max(float(m.mean()), 1e-12))
        pre = scipy.sparse.linalg.LinearOperator(
            (n, n), dtype=float,
            matvec=lambda x: geometry.apply_multiplier(torus, x.reshape(shape), inv).ravel())
        delta, info = scipy.sparse.linalg.cg(jac, -g.ravel(), rtol=opts.cg_rtol, atol=0.0,
                                             maxiter=1000, M=pre)
        if info > 0:
            logger.debug("cg 未在 %d 次內收斂", info)
        delta = delta.reshape(shape)

        damping = 1.0
        while damping > 1.0 / 1024:
            w_try = w + damping * delta
            g_try = defect(w_try)
            res_try = geometry.l2_norm(torus, g_try)
            if np.isfinite(res_try) and res_try < (1.0 - 1e-4 * damping) * res:
                break
            damping *= 0.5
        else:
            return _KWResult(w, 'stalled', it, trace)
        w, g, res = w_try, g_try, res_try

    status = 'converged' if res < opts.tol else 'max-iters'
    return _KWResult(w, status, opts.newton_max, trace)


def _t_array(torus, t):
    return np.asarray(t, dtype=float) * np.ones(torus.grid)


def _dbar_warning(gauge, phi, report_warnings):
    value = dbar_norm(gauge, phi)
    if value > 1e-4:
        logger.warning("⚠️ NonHolomorphicInput: ‖∂̄φ‖ = %.3e，仍以此 φ 求解度量", value)
        report_warnings.append({'warning': 'NonHolomorphicInput', 'dbar_norm': value})
    return value


def _metric_picture_report(residual, dbar_value):
    # 度量求解只控制 moment 方程；∂̄φ 是輸入資料
    return ResidualReport(r_holo=0.0, r_02=residual.r_02, r_moment=residual.r_moment,
                          r_second=residual.r_second, extra={'dbar_input': dbar_value})


def solve_metric_line(gauge, phi, metric0=None, t_field=2.0, opts=None, weight=None):
    """
    r=1 的度量圖像：求 H = H₀e^w 使 iΛF_H + w_φ·|φ|²_H = t
    weight 為額外的逐點權重 (framed 系統的 e^{-u})
    """
    opts = opts or SolveOptions()
    started = time.perf_counter()
    torus = gauge.torus
    if gauge.rank != 1:
        raise InvalidModel("solve_metric_line 只處理線叢", rank=gauge.rank)
    t = _t_array(torus, t_field)
    phi = values_of(phi)
    warnings = []
    dbar_value = _dbar_warning(gauge, phi, warnings)
    metric0 = metric0 or MetricField.identity(torus)

    c = chern_metric_curvature(gauge, metric0).ilambda
    rho = metric_density(phi, metric0)
    if weight is not None:
        rho = rho * weight
    t_bar = geometry.mean(torus, t)
    deg = degree(torus, gauge.spec)
    logger.info("🚀 Kazdan–Warner 開始: deg=%.4f t̄=%.4f", deg, t_bar)

    if opts.use_obstruction and t_bar <= deg + 1e-12:
        result = _KWResult(None, 'obstruction', 0, [])
    else:
        result = kazdan_warner(torus, c, rho, t, opts)

    w = result.w if result.w is not None else np.zeros(torus.grid)
    metric = MetricField(torus, 1, metric0.log_scale + 0.5 * w)
    state = FieldState(gauge=gauge, phi=phi, metric=metric,
                       frame_u=None if weight is None else -np.log(weight))
    kind = SystemKind.TMVE if weight is None else SystemKind.FVE
    res = _metric_picture_report(residuals(kind, state, ParamSet(t=t, torus=torus)), dbar_value)

    if result.status == 'converged' and res.total < opts.tol:
        verdict = SOLUTION
    elif result.status in ('obstruction', 'collapse', 'stalled'):
        verdict = NONEXISTENCE
    else:
        verdict = MAX_ITERS
    report = _finish(verdict, res, started, result.iterations, result.trace, result.status,
                     deg=deg, t_bar=t_bar, integral_obstruction=bool(t_bar <= deg + 1e-12))
    report.warnings.extend(warnings)
    return metric, report


def solve_framed(gauge, phi, frame_u, tau, opts=None, metric0=None):
    """framed 系統 iΛF_H + e^{-u}φφ^{*H} = τ (L₀ 上凍結的度量 e^u)"""
    weight = np.exp(-np.asarray(frame_u, dtype=float))
    return solve_metric_line(gauge, phi, metric0, tau, opts, weight=weight)


# --- 度量圖像：矩陣 heat flow ---
def _heat_step(metric, x, eps, precond):
    torus = metric.torus
    root, inv_root = metric.sqrt_and_inverse_sqrt()
    xt = root @ x @ inv_root
    xt = 0.5 * (xt + np.swapaxes(xt.conj(), -1, -2))
    px = geometry.apply_multiplier(torus, xt, precond)
    h = root @ _expm_hermitian(px, -eps) @ root
    return MetricField(torus, metric.rank, h)


def solve_metric_matrix(gauge, phi, t_field=1.5, opts=None, metric0=None):
    """
    r >= 2：h ← h^{1/2} exp(-ε·P·X̃) h^{1/2}，X̃ = h^{1/2} X h^{-1/2}
    X = iΛF_h + φφ^{*h} - t
    """
    opts = opts or SolveOptions()
    started = time.perf_counter()
    torus = gauge.torus
    r = gauge.rank
    if r < 2:
        raise InvalidModel("solve_metric_matrix 需要 rank >= 2", rank=r)
    t = _t_array(torus, t_field)
    phi = values_of(phi)
    warnings = []
    dbar_value = _dbar_warning(gauge, phi, warnings)
    t_bar = geometry.mean(torus, t)
    deg = degree(torus, gauge.spec)
    metric = metric0 or MetricField.identity(torus, r)
    logger.info("🚀 heat flow 開始: rank=%d deg=%.4f t̄=%.4f", r, deg, t_bar)

    def measure(m):
        x = metric_moment_residual(gauge, phi, m, t)
        return x, _h_norm(torus, x, m)

    x, res = measure(metric)
    trace = [(0, res, res, 0.0)]

    def final(verdict, reason, it):
        st = FieldState(gauge=gauge, phi=phi, metric=metric)
        report = _metric_picture_report(residuals(SystemKind.TMVE, st, ParamSet(t=t, torus=torus)),
                                        dbar_value)
        out = _finish(verdict, report, started, it, trace, reason, deg=deg, t_bar=t_bar,
                      log_spread=metric.log_eigen_spread(),
                      integral_obstruction=bool(r * t_bar <= deg + 1e-12))
        out.warnings.extend(warnings)
        return metric, out

    if opts.use_obstruction and r * t_bar <= deg + 1e-12:
        return final(NONEXISTENCE, 'obstruction', 0)

    precond = geometry.sobolev_preconditioner(torus) if opts.precondition else np.ones(torus.grid)
    eps = min(1.0, opts.max_step)
    spread_limit = np.log(1.0 / opts.collapse_tol)
    window = min(opts.plateau_window, 50)
    residual_history = [res]
    spread_history = [metric.log_eigen_spread()]

    def phi_mass(m):
        return geometry.mean(torus, metric_density(phi, m))

    def spread_growing():
        # log 特徵值差距在最近一個視窗內持續增加
        if len(spread_history) <= window:
            return False
        return spread_history[-1] > spread_history[-window - 1] + 0.05

    for it in range(1, opts.max_iters + 1):
        if res < opts.tol:
            return final(SOLUTION, 'converged', it - 1)
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = _heat_step(metric, x, eps, precond)
            x_new, res_new = measure(trial)
            # 允許殘差持平 (不可約的常數部分)
            if res_new <= res * (1.0 + 1e-12):
                accepted = True
                break
            eps *= opts.backtrack
        if not accepted:
            verdict = NONEXISTENCE if phi_mass(metric) < opts.collapse_tol or spread_growing() else MAX_ITERS
            return final(verdict, 'stalled', it - 1)

        metric, x, res = trial, x_new, res_new
        eps = min(eps * opts.step_growth, opts.max_step)
        spread = metric.log_eigen_spread()
        residual_history.append(res)
        spread_history.append(spread)
        trace.append((it, res, res, eps))

        if it % opts.log_every == 0:
            logger.debug("iter %d: ‖X‖_H=%.3e ε=%.3e spread=%.3f", it, res, eps, spread)

        if spread > spread_limit:
            return final(NONEXISTENCE, 'metric-degenerate', it)
        if phi_mass(metric) < opts.collapse_tol:
            return final(NONEXISTENCE, 'collapse', it)
        if _plateaued(residual_history, window, opts.plateau_rtol) and spread_growing():
            return final(NONEXISTENCE, 'slope-collapse', it)

    return final(MAX_ITERS, 'max-iters', opts.max_iters)


# --- 耦合系統 ---
def solve_coupled(gauge_e, gauge_l, phi, t_field, t_prime_field, opts=None):
    """
    iΛF_H + φφ^{*} = t, iΛF_K - |φ|² = t′，φ ∈ E ⊗ L*
    r=1：v = w_H - w_K 滿足 Kazdan–Warner，s = w_H + w_K 由 Poisson 決定
    r>=2：(h, K) 的聯合 heat flow
    回傳 (metric_E, metric_L, SolveReport)
    """
    opts = opts or SolveOptions()
    started = time.perf_counter()
    torus = gauge_e.torus
    r = gauge_e.rank
    t = _t_array(torus, t_field)
    t_prime = _t_array(torus, t_prime_field)
    params = ParamSet(t=t, t_prime=t_prime, torus=torus)
    deg_e = degree(torus, gauge_e.spec)
    deg_l = degree(torus, gauge_l.spec)

    check = constraint_check('t-tprime', params, {'rank': r, 'deg_E': deg_e, 'deg_L': deg_l})
    if abs(check.violation) > CONSTRAINT_TOL:
        raise ConstraintViolation("t 與 t′ 不滿足 r·t̄ + t̄′ = deg E + deg L",
                                  violation=check.violation, required_t_prime=check.required)

    phi = values_of(phi)
    combined = tensor_dual(gauge_e, gauge_l)
    warnings = []
    dbar_value = _dbar_warning(combined, phi, warnings)
    logger.info("🚀 耦合系統開始: r=%d deg E=%.3f deg L=%.3f", r, deg_e, deg_l)

    if r == 1:
        c_e = curvature(gauge_e).ilambda
        c_l = curvature(gauge_l).ilambda
        rho = np.abs(phi) ** 2
        s = poisson_solve(torus, t + t_prime - c_e - c_l - geometry.mean(torus, t + t_prime - c_e - c_l))
        if opts.use_obstruction and geometry.mean(torus, t - t_prime - c_e + c_l) <= 1e-12:
            result = _KWResult(None, 'obstruction', 0, [])
        else:
            result = kazdan_warner(torus, c_e - c_l, 2.0 * rho, t - t_prime, opts)
        v = result.w if result.w is not None else np.zeros(torus.grid)
        metric_e = MetricField.from_exponent(torus, 0.5 * (s + v))
        metric_l = MetricField.from_exponent(torus, 0.5 * (s - v))
        status, iterations, trace = result.status, result.iterations, result.trace
    else:
        metric_e, metric_l, status, iterations, trace = _coupled_flow(
            gauge_e, gauge_l, phi, t, t_prime, opts, deg_e)

    state = FieldState(gauge=gauge_e, gauge_L=gauge_l, phi=phi, metric=metric_e, metric_L=metric_l)
    res = _metric_picture_report(residuals(SystemKind.TMCVE, state, params), dbar_value)
    if status == 'converged' and res.total < opts.tol:
        verdict = SOLUTION
    elif status in ('obstruction', 'collapse', 'stalled', 'metric-degenerate'):
        verdict = NONEXISTENCE
    else:
        verdict = MAX_ITERS
    report = _finish(verdict, res, started, iterations, trace, status,
                     deg_E=deg_e, deg_L=deg_l, constraint_violation=check.violation)
    report.warnings.extend(warnings)
    return metric_e, metric_l, report


def _coupled_flow(gauge_e, gauge_l, phi, t, t_prime, opts, deg_e):
    torus = gauge_e.torus
    r = gauge_e.rank
    metric_e = MetricField.identity(torus, r)
    metric_l = MetricField.identity(torus, 1)
    precond = geometry.sobolev_preconditioner(torus) if opts.precondition else np.ones(torus.grid)

    if opts.use_obstruction and r * geometry.mean(torus, t) <= deg_e + 1e-12:
        return metric_e, metric_l, 'obstruction', 0, []

    def measure(me, ml):
        k_weight = np.exp(-ml.exponent)
        x1 = metric_moment_residual(gauge_e, phi, me, t, k_weight)
        x2 = (chern_metric_curvature(gauge_l, ml).ilambda
              - metric_density(phi, me) * k_weight - t_prime)
        total = np.hypot(_h_norm(torus, x1, me), geometry.l2_norm(torus, x2))
        return x1, x2, total

    x1, x2, res = measure(metric_e, metric_l)
    trace = [(0, res, res, 0.0)]
    eps = 1.0
    for it in range(1, opts.max_iters + 1):
        if res < opts.tol:
            return metric_e, metric_l, 'converged', it - 1, trace
        for _ in range(opts.max_backtracks):
            trial_e = _heat_step(metric_e, x1, eps, precond)
            trial_l = MetricField(torus, 1, metric_l.log_scale
                                  - 0.5 * eps * geometry.apply_multiplier(torus, x2, precond))
            n1, n2, new_res = measure(trial_e, trial_l)
            if new_res < res:
                break
            eps *= opts.backtrack
        else:
            return metric_e, metric_l, 'stalled', it - 1, trace
        metric_e, metric_l, x1, x2, res = trial_e, trial_l, n1, n2, new_res
        eps = min(eps * opts.step_growth, opts.max_step)
        trace.append((it, res, res, eps))
        if metric_e.log_eigen_spread() > np.log(1.0 / opts.collapse_tol):
            return metric_e, metric_l, 'metric-degenerate', it, trace
    return metric_e, metric_l, 'max-iters', opts.max_iters, trace


# --- 兩種圖像之間 ---
def metric_to_unitary(gauge, phi, metric):
    """
    以 H^{1/2} 的複規範變換把度量圖像的解搬到 unitary 圖像 (r=1)
    a_{2j} += ½∂_{2j+1}w，a_{2j+1} -= ½∂_{2j}w，φ′ = e^{w/2}φ
    """
    if gauge.rank != 1:
        raise InvalidModel("metric_to_unitary 目前只支援線叢", rank=gauge.rank)
    w = metric.exponent
    return unitary_shift(gauge, w), np.exp(0.5 * w) * values_of(phi)


# --- τ 掃描 ---
@dataclass
class ScanModel:
    """掃描用模型：背景 bundle、可選的 φ、t 的 Fourier 擾動與穩定性 oracle"""
    torus: object
    spec: object
    name: str = ''
    twist: object = None
    phi: object = None
    phi_support: tuple = None
    t_terms: tuple = ()
    route: str = 'metric'
    seed: int = 0
    amplitude: float = 0.3
    split: object = None


def generic_phi(gauge, support=None):
    """背景全純基底的和 (support 限制在指定的 summand)"""
    if support is None:
        basis = holomorphic_basis(gauge)
        return sum(basis) if basis else np.zeros(gauge.torus.grid + gauge.fiber, dtype=complex)
    per = holomorphic_basis(gauge, per_summand=True)
    arrays = [v for p in support for v in per[p]]
    return sum(arrays) if arrays else np.zeros(gauge.torus.grid + gauge.fiber, dtype=complex)


def _scan_entry(model, tau, opts):
    torus = model.torus
    t = geometry.field_from_modes(torus, model.t_terms, mean_value=tau, key='scan.t')
    background = make_background(torus, model.spec, model.twist)
    deg = degree(torus, model.spec)
    r = model.spec.rank

    if model.route == 'unitary':
        gauge, phi = random_state(torus, model.spec, model.seed, model.amplitude, twist=model.twist)
        (gauge, phi), report = minimize_ymh(gauge, phi, t, opts)
        density = outer(phi, r) if r == 1 else np.sum(np.abs(phi) ** 2, axis=-1)
    else:
        phi = model.phi if model.phi is not None else generic_phi(background, model.phi_support)
        phi = values_of(phi)
        if r == 1:
            metric, report = solve_metric_line(background, phi, None, t, opts)
        else:
            metric, report = solve_metric_matrix(background, phi, t, opts)
        density = metric_density(phi, metric)

    stable = None
    if model.split is not None:
        from src.core.stability import pair_stable
        stable = pair_stable(model.split, tau).stable

    return {
        'tau': float(tau),
        'verdict': report.verdict,
        'stable': stable,
        'phi_norm_sq': geometry.integrate(torus, density),
        'predicted_phi_norm_sq': 2.0 * np.pi * (r * tau - deg),
        'residual': report.residual.total,
        'iterations': report.iterations,
        'reason': report.reason,
        'wall_time': report.wall_time,
    }


def scan_threads(jobs):
    limit = int(os.environ.get('VORTEXLAB_THREADS', os.cpu_count() or 1))
    return max(1, min(limit, jobs))


def tau_scan(model, tau_grid, opts=None, threads=None, progress=True):
    """每個 τ 一次獨立求解；輸出依輸入順序排列，與串行結果相同"""
    opts = opts or SolveOptions()
    grid = [float(t) for t in tau_grid]
    workers = threads or scan_threads(len(grid))
    logger.info("🚀 τ 掃描 %s: %d 個點, %d 個 worker", model.name or model.spec.to_dict(), len(grid), workers)

    rows = [None] * len(grid)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_scan_entry, model, tau, opts): i for i, tau in enumerate(grid)}
        for future in tqdm(futures, total=len(grid), desc='tau-scan', disable=not progress):
            rows[futures[future]] = future.result()
    return pd.DataFrame(rows)
