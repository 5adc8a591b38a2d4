"""
平坦 T⁴ 上 Kähler 化的 Seiberg–Witten 系統 (rank 1)

Ψ = (φ, β)：φ 是 0-形式部分，β 是 (0,2) 部分在單位標架 ½dz̄₁∧dz̄₂ 下的係數。
方程 (fixed)：
  iΛF + |φ|² - |β|² = f
  F^{0,2} = βφ̄
  ∂̄φ + ∂̄^*β = 0
coupled 另外帶 L 上的連絡 b (Dirac 連絡為 A + ½b)：
  iΛF_b + 2(|φ|² - |β|²) + 2f′ = 0，F_b^{0,2} = 2βφ̄
"""
import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.optimize
from tqdm import tqdm

from src.core import geometry
from src.core.bundle_fields import BundleSpec, GaugeField, degree, make_background, values_of
from src.core.errors import ConstraintViolation, InvalidModel, MissingField, ParityError
from src.core.functionals import (CONSTRAINT_TOL, FieldState, ParamSet, ResidualReport,
                                  SystemKind, constraint_check)
from src.core.operators import curvature, dbar_cov, dbar_star_02, dcov_norms, form01_norm_sq
from src.core.solvers import curvature_adjoint, scan_threads

logger = logging.getLogger(__name__)

BRANCH_RATIO = 1e-3
ENERGY_SCALE = 10.0
MIXED_RATIO = 0.1


@dataclass
class SpinorPair:
    torus: object
    phi: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if self.torus.complex_dim != 2:
            raise InvalidModel("Kähler SW 系統只定義在 T⁴")
        self.phi = np.asarray(values_of(self.phi), dtype=complex)
        self.beta = np.asarray(values_of(self.beta), dtype=complex)
        if self.phi.shape != self.torus.grid or self.beta.shape != self.torus.grid:
            raise InvalidModel("φ 與 β 必須是同一環面上的 rank 1 場",
                               phi=list(self.phi.shape), beta=list(self.beta.shape))

    def norms(self):
        return (geometry.l2_norm(self.torus, self.phi), geometry.l2_norm(self.torus, self.beta))


@dataclass
class SelfDualForm:
    """ω 係數、(0,2) 係數；(2,0) 係數為 -conj(comp02)"""
    scalar: np.ndarray
    comp02: np.ndarray

    @property
    def comp20(self):
        return -np.conj(self.comp02)


def quadratic_form(psi):
    """i(Ψ⊗Ψ*)₀ ↦ (|φ|² - |β|²)ω + βφ̄ - φβ̄"""
    return SelfDualForm(np.abs(psi.phi) ** 2 - np.abs(psi.beta) ** 2, psi.beta * np.conj(psi.phi))


def _kind(kind):
    if isinstance(kind, SystemKind):
        return 'coupled' if kind is SystemKind.SW_KAHLER_COUPLED else 'fixed'
    if kind in ('fixed', 'fixed_b', 'sw_fixed'):
        return 'fixed'
    if kind in ('coupled', 'sw_coupled'):
        return 'coupled'
    raise InvalidModel("未知的 SW 系統", kind=kind)


def _field(torus, value, default=0.0):
    value = default if value is None else value
    return np.asarray(value, dtype=float) * np.ones(torus.grid)


def dirac_connection(gauge_a, gauge_b):
    """A + ½b (L 的 Chern 數必須為偶數)"""
    if any(n % 2 for n in gauge_b.spec.chern):
        raise ParityError("b 的 Chern 數為奇數，A + ½b 不是連絡", chern=list(gauge_b.spec.chern))
    spec = BundleSpec(1, tuple(na + nb // 2 for na, nb in zip(gauge_a.spec.chern, gauge_b.spec.chern)), 'Lhat')
    pa, pb = gauge_a.perturbation, gauge_b.perturbation
    if pa is None and pb is None:
        pert = None
    else:
        pert = (0.0 if pa is None else np.array(pa)) + (0.0 if pb is None else 0.5 * np.array(pb))
    return GaugeField(gauge_a.torus, spec, np.array(gauge_a.theta) + 0.5 * np.array(gauge_b.theta),
                      np.array(gauge_a.twist) + 0.5 * np.array(gauge_b.twist), pert)


@dataclass
class _Pieces:
    curv: object
    dirac: object
    rho: np.ndarray
    prod: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    chi: np.ndarray
    curv_b: object = None
    mu_b: np.ndarray = None
    g_b: np.ndarray = None


def _assemble(kind, gauge, phi, beta, f, gauge_b=None, f_prime=None):
    if kind == 'coupled':
        if gauge_b is None:
            raise MissingField("coupled 系統需要 L 上的連絡 b", field='gauge_L')
        dirac = dirac_connection(gauge, gauge_b)
        curv = curvature(gauge)
    else:
        dirac = gauge if gauge_b is None else dirac_connection(gauge, gauge_b)
        curv = curvature(dirac)
    rho = np.abs(phi) ** 2 - np.abs(beta) ** 2
    prod = beta * np.conj(phi)
    chi = dbar_cov(dirac, phi) + dbar_star_02(dirac, beta)
    pieces = _Pieces(curv, dirac, rho, prod, curv.ilambda + rho - f, curv.f02 - prod, chi)
    if kind == 'coupled':
        curv_b = curvature(gauge_b)
        pieces.curv_b = curv_b
        pieces.mu_b = curv_b.ilambda + 2.0 * rho + 2.0 * f_prime
        pieces.g_b = curv_b.f02 - 2.0 * prod
    return pieces


def _unpack_state(state, params, kind):
    if state.gauge is None or state.phi is None or state.beta is None:
        missing = [n for n in ('gauge', 'phi', 'beta') if getattr(state, n) is None]
        raise MissingField("SW 狀態缺少欄位", field=missing[0])
    torus = state.gauge.torus
    phi = np.asarray(values_of(state.phi), dtype=complex)
    beta = np.asarray(values_of(state.beta), dtype=complex)
    f = _field(torus, params.f)
    f_prime = _field(torus, params.f_prime) if kind == 'coupled' else None
    return torus, phi, beta, f, f_prime


def check_ff_constraint(state, params):
    torus = state.gauge.torus
    params = dataclasses.replace(params, torus=params.torus or torus)
    degrees = {'rank': 1, 'deg_E': degree(torus, state.gauge.spec),
               'deg_L': degree(torus, state.gauge_L.spec)}
    result = constraint_check('ff', params, degrees)
    if abs(result.violation) > CONSTRAINT_TOL:
        raise ConstraintViolation("f、f′ 約束不成立：deg E - ½deg L ≠ f̄ + f̄′",
                                  violation=result.violation, required_f_prime=result.required)
    return result


def sw_residuals(kind, state, params):
    kind = _kind(kind)
    torus, phi, beta, f, f_prime = _unpack_state(state, params, kind)
    if kind == 'coupled':
        if state.gauge_L is None:
            raise MissingField("coupled 系統需要 L 上的連絡 b", field='gauge_L')
        check_ff_constraint(state, params)
    p = _assemble(kind, state.gauge, phi, beta, f, state.gauge_L, f_prime)

    r_02 = geometry.norm_sq(torus, p.g)
    extra = {'r_20': geometry.l2_norm(torus, p.curv.f20 + phi * np.conj(beta))}
    report = ResidualReport(r_holo=float(np.sqrt(form01_norm_sq(torus, p.chi))),
                            r_moment=geometry.l2_norm(torus, p.mu), extra=extra)
    if kind == 'coupled':
        r_02 += geometry.norm_sq(torus, p.g_b)
        report.r_second = geometry.l2_norm(torus, p.mu_b)
    elif state.gauge_L is not None:
        extra['b_f02'] = geometry.l2_norm(torus, curvature(state.gauge_L).f02)
    report.r_02 = float(np.sqrt(r_02))
    return report


# --- 泛函 ---
def _value(torus, p, kind):
    value = (0.5 * geometry.norm_sq(torus, p.mu) + 2.0 * geometry.norm_sq(torus, p.g)
             + 4.0 * sum(geometry.norm_sq(torus, c) for c in p.chi))
    if kind == 'coupled':
        value += 0.125 * geometry.norm_sq(torus, p.mu_b) + 0.5 * geometry.norm_sq(torus, p.g_b)
    return value


def sw_functional(state, params, kind='fixed', s=None):
    """
    direct:   ½‖μ‖² + 2‖F^{0,2} - βφ̄‖² + 2‖∂̄φ + ∂̄^*β‖²  (coupled 另加 b 的兩項)
    expanded: Weitzenböck 展開後的曲率、梯度與位能項 (+ ∫(s/4)(|φ|²+|β|²))
    """
    kind = _kind(kind)
    torus, phi, beta, f, f_prime = _unpack_state(state, params, kind)
    p = _assemble(kind, state.gauge, phi, beta, f, state.gauge_L, f_prime)
    direct = _value(torus, p, kind)

    grads_phi = dcov_norms(p.dirac, phi)['d']
    grads_beta = dcov_norms(p.dirac, beta)['d']
    terms = {
        'curvature_lambda': 0.5 * geometry.norm_sq(torus, p.curv.ilambda),
        'curvature_02': 2.0 * geometry.norm_sq(torus, p.curv.f02),
        'potential': 0.5 * geometry.norm_sq(torus, p.rho - f),
        'product': 2.0 * geometry.norm_sq(torus, p.prod),
        'gradient': grads_phi + grads_beta,
        'flux': -geometry.integrate(torus, f * p.curv.ilambda),
    }
    if kind == 'coupled':
        terms['curvature_lambda_b'] = 0.125 * geometry.norm_sq(torus, p.curv_b.ilambda)
        terms['curvature_02_b'] = 0.5 * geometry.norm_sq(torus, p.curv_b.f02)
        terms['potential_b'] = 0.5 * geometry.norm_sq(torus, p.rho + f_prime)
        terms['product'] = 4.0 * geometry.norm_sq(torus, p.prod)
        terms['flux_b'] = 0.5 * geometry.integrate(torus, f_prime * p.curv_b.ilambda)
    if s is not None:
        terms['scalar_curvature'] = geometry.integrate(
            torus, 0.25 * np.asarray(s, dtype=float) * (np.abs(phi) ** 2 + np.abs(beta) ** 2))

    expanded = float(sum(terms.values()))
    gap = direct - expanded
    return {'direct': direct, 'expanded': expanded, 'gap': gap,
            'relative_gap': abs(gap) / direct if direct > 0 else abs(gap), 'terms': terms}


def self_dual_pairing(torus, curv, form):
    """⟨F⁺, q⟩ = ∫ iΛF·q_ω + 4Re∫ conj(F^{0,2})·q_{02}"""
    return (geometry.integrate(torus, curv.ilambda * form.scalar)
            + 4.0 * float(np.real(np.sum(np.conj(curv.f02) * form.comp02)) * torus.cell_volume))


def cross_term_identity(state):
    """⟨F⁺_A, q⟩ + ½⟨F⁺_b, q⟩ 與 ⟨F⁺_{A,b}, q⟩ (A + ½b 的曲率)"""
    torus = state.gauge.torus
    q = quadratic_form(SpinorPair(torus, state.phi, state.beta))
    lhs = (self_dual_pairing(torus, curvature(state.gauge), q)
           + 0.5 * self_dual_pairing(torus, curvature(state.gauge_L), q))
    rhs = self_dual_pairing(torus, curvature(dirac_connection(state.gauge, state.gauge_L)), q)
    return {'lhs': lhs, 'rhs': rhs, 'defect': abs(lhs - rhs)}


# --- 梯度 ---
def _chi_gauge_gradient(chi, phi, beta, shape):
    c1, c2 = chi
    grad = np.zeros(shape)
    grad[0] = -4.0 * np.imag(c1 * np.conj(phi)) + 4.0 * np.imag(c2 * np.conj(beta))
    grad[1] = 4.0 * np.real(c1 * np.conj(phi)) + 4.0 * np.real(c2 * np.conj(beta))
    grad[2] = -4.0 * np.imag(c1 * np.conj(beta)) - 4.0 * np.imag(c2 * np.conj(phi))
    grad[3] = -4.0 * np.real(c1 * np.conj(beta)) + 4.0 * np.real(c2 * np.conj(phi))
    return grad


def sw_gradient(kind, gauge, phi, beta, f, gauge_b=None, f_prime=None):
    """回傳 (SW, ∇_a, ∇_b 或 None, ∇_φ, ∇_β)"""
    torus = gauge.torus
    p = _assemble(kind, gauge, phi, beta, f, gauge_b, f_prime)
    value = _value(torus, p, kind)
    shape = (torus.real_dim,) + torus.grid
    deriv = p.dirac.derivative()

    def del_(x, j):
        return 0.5 * (deriv.apply(x, 2 * j) - 1j * deriv.apply(x, 2 * j + 1))

    def dbar_(x, j):
        return 0.5 * (deriv.apply(x, 2 * j) + 1j * deriv.apply(x, 2 * j + 1))

    chi_grad = _chi_gauge_gradient(p.chi, phi, beta, shape)
    curv_gauge = gauge if kind == 'coupled' else p.dirac
    grad_a = curvature_adjoint(curv_gauge, p.mu, p.g) + chi_grad
    grad_phi = (2.0 * p.mu * phi - 4.0 * np.conj(p.g) * beta
                - 8.0 * (del_(p.chi[0], 0) + del_(p.chi[1], 1)))
    grad_beta = (-2.0 * p.mu * beta - 4.0 * p.g * phi
                 - 8.0 * dbar_(p.chi[0], 1) + 8.0 * dbar_(p.chi[1], 0))

    grad_b = None
    if kind == 'coupled':
        grad_b = curvature_adjoint(gauge_b, 0.25 * p.mu_b, 0.25 * p.g_b) + 0.5 * chi_grad
        grad_phi = grad_phi + p.mu_b * phi - 2.0 * np.conj(p.g_b) * beta
        grad_beta = grad_beta - p.mu_b * beta - 2.0 * p.g_b * phi
    return value, grad_a, grad_b, grad_phi, grad_beta


# --- 對稱與分支預測 ---
def _conjugate_gauge(gauge):
    pert = None if gauge.perturbation is None else -np.array(gauge.perturbation)
    return GaugeField(gauge.torus, gauge.spec.dual(), -np.array(gauge.theta), -np.array(gauge.twist), pert)


def hodge_dual(state, params):
    """(A, φ, β, f, f′) ↦ (Ā, β̄, -φ̄, -f, -f′)"""
    phi = np.asarray(values_of(state.phi), dtype=complex)
    beta = np.asarray(values_of(state.beta), dtype=complex)
    dual = FieldState(gauge=_conjugate_gauge(state.gauge), phi=np.conj(beta), beta=-np.conj(phi),
                      gauge_L=None if state.gauge_L is None else _conjugate_gauge(state.gauge_L))

    def neg(value):
        return None if value is None else -np.asarray(value, dtype=float)

    return dual, dataclasses.replace(params, f=neg(params.f), f_prime=neg(params.f_prime))


def predicted_branch(deg_e, rank, deg_l, f_bar, f_prime_bar=None, kind='fixed'):
    """
    fixed:   μ(E) - ½deg L - f̄ < 0 → phi；> 0 → beta；= 0 → reducible
    coupled: μ(E) < f̄ 且 deg L > 2f̄′ → phi；兩者皆反向 → beta
    """
    mu_e = deg_e / rank
    if _kind(kind) == 'fixed':
        x = mu_e - 0.5 * deg_l - f_bar
        if abs(x) < 1e-12:
            return 'reducible'
        return 'phi' if x < 0 else 'beta'
    a = mu_e - f_bar
    b = deg_l - 2.0 * f_prime_bar
    if abs(a) < 1e-12 and abs(b) < 1e-12:
        return 'reducible'
    if a <= 0 and b >= 0:
        return 'phi'
    if a >= 0 and b <= 0:
        return 'beta'
    return 'indeterminate'


def classify(norm_phi, norm_beta, reducible_norm, ratio=BRANCH_RATIO, energy=0.0):
    """
    小的分量低於門檻即視為零：門檻 = max(ratio·大者, ENERGY_SCALE·√SW)，
    但不超過 MIXED_RATIO·大者 (L-BFGS 停在 SW > 0 時，輸的一支約為 √SW 的量級)
    """
    big = max(norm_phi, norm_beta)
    floor = ENERGY_SCALE * np.sqrt(max(float(energy), 0.0))
    if big < max(reducible_norm, floor):
        return 'reducible'
    cut = min(max(ratio * big, floor), MIXED_RATIO * big)
    if norm_beta < cut:
        return 'phi'
    if norm_phi < cut:
        return 'beta'
    return 'mixed'


# --- 最小化與分支實驗 ---
class _Layout:
    """實向量 [a, (b), Re φ, Im φ, Re β, Im β] 與場之間的轉換"""

    def __init__(self, torus, with_b):
        self.torus = torus
        self.with_b = with_b
        self.gauge_shape = (torus.real_dim,) + torus.grid
        self.n_gauge = int(np.prod(self.gauge_shape))
        self.n_site = torus.n_sites

    def pack(self, a, b, phi, beta):
        parts = [np.ravel(a)]
        if self.with_b:
            parts.append(np.ravel(b))
        for z in (phi, beta):
            parts += [np.real(z).ravel(), np.imag(z).ravel()]
        return np.concatenate(parts).astype(float)

    def unpack(self, x):
        offset = 0

        def take(n, shape):
            nonlocal offset
            out = x[offset:offset + n].reshape(shape)
            offset += n
            return out

        a = take(self.n_gauge, self.gauge_shape)
        b = take(self.n_gauge, self.gauge_shape) if self.with_b else None
        grid = self.torus.grid
        phi = take(self.n_site, grid) + 1j * take(self.n_site, grid)
        beta = take(self.n_site, grid) + 1j * take(self.n_site, grid)
        return a, b, phi, beta


def _perturbation_or_zero(gauge):
    if gauge is None:
        return None
    if gauge.perturbation is None:
        return np.zeros((gauge.torus.real_dim,) + gauge.torus.grid)
    return np.array(gauge.perturbation, dtype=float)


def minimize_sw(kind, state, params, max_iters=500, gtol=1e-10):
    """
    以 L-BFGS 在固定拓撲上最小化 SW 泛函
    fixed 且帶 gauge_L 時 b 視為凍結，只對 (a, φ, β) 最小化
    回傳 (FieldState, info)
    """
    kind = _kind(kind)
    torus, phi, beta, f, f_prime = _unpack_state(state, params, kind)
    coupled = kind == 'coupled'
    if coupled and state.gauge_L is None:
        raise MissingField("coupled 系統需要 L 上的連絡 b", field='gauge_L')
    layout = _Layout(torus, coupled)
    base_a, base_b = state.gauge, state.gauge_L

    def build(x):
        a, b, ph, be = layout.unpack(x)
        gauge = base_a.with_perturbation(a)
        gauge_b = base_b.with_perturbation(b) if coupled else base_b
        return gauge, gauge_b, ph, be

    def objective(x):
        gauge, gauge_b, ph, be = build(x)
        value, ga, gb, gp, gbe = sw_gradient(kind, gauge, ph, be, f, gauge_b, f_prime)
        return value, layout.pack(ga, gb, gp, gbe) * torus.cell_volume

    x0 = layout.pack(_perturbation_or_zero(base_a), _perturbation_or_zero(base_b), phi, beta)
    started = time.perf_counter()
    result = scipy.optimize.minimize(objective, x0, jac=True, method='L-BFGS-B',
                                     options={'maxiter': int(max_iters), 'maxfun': 4 * int(max_iters),
                                              'ftol': 0.0, 'gtol': gtol})
    gauge, gauge_b, ph, be = build(result.x)
    final = FieldState(gauge=gauge, phi=ph, beta=be, gauge_L=gauge_b)
    info = {'value': float(result.fun), 'iterations': int(result.nit),
            'message': str(result.message), 'wall_time': time.perf_counter() - started}
    logger.debug("L-BFGS (%s): SW=%.3e, iters=%d, %s", kind, info['value'], info['iterations'], info['message'])
    return final, info


def random_sw_state(torus, seed, amplitude=0.3, chern=None, chern_l=None, max_mode=2):
    """A、b 為背景加光滑擾動，φ、β 為頻寬受限的隨機場 (完全由 seed 決定)"""
    chern = tuple(chern or (0,) * torus.complex_dim)
    rng = np.random.default_rng(seed)

    def gauge_for(spec):
        pert = np.stack([geometry.band_limited_noise(torus, rng, max_mode) for _ in range(torus.real_dim)])
        return make_background(torus, spec).with_perturbation(amplitude * pert)

    def spinor():
        return amplitude * geometry.band_limited_noise(torus, rng, max_mode, complex_valued=True)

    gauge = gauge_for(BundleSpec(1, chern, 'E'))
    gauge_l = None if chern_l is None else gauge_for(BundleSpec(1, tuple(chern_l), 'L'))
    if any(chern) and gauge_l is None:
        logger.warning("⚠️ 非平凡 A 上的隨機 φ、β 不是光滑截面，只在 chern=0 時使用")
    return FieldState(gauge=gauge, phi=spinor(), beta=spinor(), gauge_L=gauge_l)


@dataclass
class DecouplingReport:
    kind: str
    f_bar: float
    f_prime_bar: float
    predicted: str
    runs: list = field(default_factory=list)

    @property
    def branch(self):
        labels = [run['branch'] for run in self.runs]
        return max(set(labels), key=labels.count) if labels else 'none'

    @property
    def agrees(self):
        return all(run['branch'] == self.predicted for run in self.runs)

    def frame(self):
        return pd.DataFrame(self.runs)

    def to_dict(self):
        return {
            'kind': self.kind,
            'f_bar': self.f_bar,
            'f_prime_bar': self.f_prime_bar,
            'branch': self.branch,
            'predicted': self.predicted,
            'agrees': self.agrees,
            'ratios': [run['ratio'] for run in self.runs],
            'sup_product': max((run['sup_product'] for run in self.runs), default=0.0),
            'seeds': [run['seed'] for run in self.runs],
            'iterations': [run['iterations'] for run in self.runs],
        }


def _decouple_one(kind, torus, params, seed, amplitude, max_iters, reducible_norm, chern_l):
    state = random_sw_state(torus, seed, amplitude, chern_l=chern_l if kind == 'coupled' else None)
    final, info = minimize_sw(kind, state, params, max_iters)
    norm_phi = geometry.l2_norm(torus, final.phi)
    norm_beta = geometry.l2_norm(torus, final.beta)
    residual = sw_residuals(kind, final, params)
    return {
        'seed': int(seed),
        'branch': classify(norm_phi, norm_beta, reducible_norm, energy=info['value']),
        'norm_phi': norm_phi,
        'norm_beta': norm_beta,
        'ratio': min(norm_phi, norm_beta) / max(norm_phi, norm_beta, 1e-300),
        'sup_product': float(np.abs(final.beta * np.conj(final.phi)).max()),
        'sw_value': info['value'],
        'residual': residual.total,
        'iterations': info['iterations'],
        'wall_time': info['wall_time'],
    }


def decoupling_experiment(torus, kind='fixed', f_bar=0.5, f_prime_bar=None, seeds=(0, 1, 2),
                          amplitude=0.3, max_iters=500, reducible_norm=1e-6, threads=None,
                          progress=True):
    """
    平凡拓撲、常數 f (與 f′) 下從多個隨機初值最小化，
    檢查每個極小點是否落在 φ ≡ 0 或 β ≡ 0 其中一支
    """
    kind = _kind(kind)
    chern_l = (0,) * torus.complex_dim
    if kind == 'coupled' and f_prime_bar is None:
        # 平凡 E、L 時 f、f′ 約束要求 f̄ + f̄′ = 0
        f_prime_bar = -float(f_bar)
    params = ParamSet(f=float(f_bar), f_prime=None if f_prime_bar is None else float(f_prime_bar),
                      torus=torus)
    predicted = predicted_branch(0, 1, 0, float(f_bar), f_prime_bar, kind)
    report = DecouplingReport(kind, float(f_bar), f_prime_bar, predicted)

    seeds = [int(s) for s in seeds]
    workers = threads or scan_threads(len(seeds))
    logger.info("🚀 SW 分支實驗 (%s, f̄=%s): %d 個 seed, 預測 %s", kind, f_bar, len(seeds), predicted)
    runs = [None] * len(seeds)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_decouple_one, kind, torus, params, seed, amplitude, max_iters,
                               reducible_norm, chern_l): i for i, seed in enumerate(seeds)}
        for future in tqdm(futures, total=len(seeds), desc='sw-decouple', disable=not progress):
            runs[futures[future]] = future.result()
    report.runs = runs

    icon = '✅' if report.agrees else '⚠️'
    logger.info("%s 分支 %s (預測 %s)", icon, report.branch, predicted)
    return report
