"""
能量泛函、各方程系統的殘差、積分約束與 moment map

標準正規化為不含 ½ 的形式 iΛF + φφ* = t·I；
abelian vortex 方程的 ½ 版本由 φ → √2·φ 對應 (half_factor_rescale)。
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.core import geometry
from src.core.bundle_fields import MetricField, degree, tensor_dual, values_of
from src.core.errors import MissingField, ShapeMismatch
from src.core.operators import (chern_metric_curvature, curvature, dbar_cov, dcov_norms,
                                form01_norm_sq)

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-8


class SystemKind(Enum):
    VE_ABELIAN = 've'
    NAVE = 'nave'
    TMVE = 'tmve'
    CVE = 'cve'
    TMCVE = 'tmcve'
    FVE = 'fve'
    SW_KAHLER_FIXED = 'sw_fixed'
    SW_KAHLER_COUPLED = 'sw_coupled'


REQUIRED_FIELDS = {
    SystemKind.VE_ABELIAN: ('gauge', 'phi'),
    SystemKind.NAVE: ('gauge', 'phi'),
    SystemKind.TMVE: ('gauge', 'phi', 'metric'),
    SystemKind.CVE: ('gauge', 'gauge_L', 'phi'),
    SystemKind.TMCVE: ('gauge', 'gauge_L', 'phi', 'metric', 'metric_L'),
    SystemKind.FVE: ('gauge', 'phi', 'metric', 'frame_u'),
    SystemKind.SW_KAHLER_FIXED: ('gauge', 'phi', 'beta'),
    SystemKind.SW_KAHLER_COUPLED: ('gauge', 'gauge_L', 'phi', 'beta'),
}


@dataclass
class ParamSet:
    """τ, τ′ 與參數函數 (t, t′, f, f′, s 可為常數或格點場)"""
    tau: float = None
    tau_prime: float = None
    t: object = None
    t_prime: object = None
    f: object = None
    f_prime: object = None
    s: object = None
    sigma: float = None
    torus: object = None

    def grid_value(self, name, fallback=None):
        value = getattr(self, name)
        if value is None and fallback is not None:
            value = getattr(self, fallback)
        if value is None:
            return None
        if np.ndim(value) == 0:
            if self.torus is None:
                return float(value)
            return np.full(self.torus.grid, float(value))
        return np.asarray(value, dtype=float)

    def bar(self, name, fallback=None):
        """平均值 (1/2π)∫ f"""
        value = getattr(self, name)
        if value is None and fallback is not None:
            value = getattr(self, fallback)
        if value is None:
            raise MissingField(f"參數 {name} 未提供", field=name)
        if np.ndim(value) == 0:
            return float(value)
        return geometry.mean(self.torus, np.asarray(value, dtype=float))

    def t_field(self):
        return self.grid_value('t', 'tau')

    def t_prime_field(self):
        return self.grid_value('t_prime', 'tau_prime')


@dataclass
class FieldState:
    gauge: object = None
    phi: object = None
    beta: object = None
    metric: object = None
    gauge_L: object = None
    metric_L: object = None
    frame_u: object = None

    def require(self, names):
        for name in names:
            if getattr(self, name) is None:
                raise MissingField(f"狀態缺少欄位 {name}", field=name)


@dataclass
class ResidualReport:
    r_holo: float = 0.0
    r_02: float = 0.0
    r_moment: float = 0.0
    r_second: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def total(self):
        return float(np.sqrt(self.r_holo ** 2 + self.r_02 ** 2 + self.r_moment ** 2 + self.r_second ** 2))

    def to_dict(self):
        out = {'r_holo': self.r_holo, 'r_02': self.r_02, 'r_moment': self.r_moment,
               'r_second': self.r_second, 'total': self.total}
        out.update(self.extra)
        return out


# --- 逐點代數 ---
def outer(phi, rank):
    """φφ* (r=1 時為 |φ|²)"""
    phi = values_of(phi)
    if rank == 1:
        return np.abs(phi) ** 2
    return np.einsum('...p,...q->...pq', phi, phi.conj())


def identity_like(torus, rank):
    if rank == 1:
        return np.ones(torus.grid)
    return np.broadcast_to(np.eye(rank), torus.grid + (rank, rank))


def _scalar_times_identity(value, rank):
    value = np.asarray(value, dtype=float)
    if rank == 1:
        return value
    return value[..., None, None] * np.eye(rank)


def _norm(torus, array):
    return float(np.sqrt(geometry.norm_sq(torus, array)))


def _h_norm(torus, matrix, metric):
    """H-範數：|X|_H = |h^{1/2} X h^{-1/2}|"""
    if metric.rank == 1:
        return _norm(torus, matrix)
    root, inv_root = metric.sqrt_and_inverse_sqrt()
    return _norm(torus, root @ matrix @ inv_root)


def half_factor_rescale(phi):
    """abelian 方程 ½ 正規化解 ↦ 標準正規化解"""
    return np.sqrt(2.0) * values_of(phi)


# --- YMH 與 Kähler 恆等式 ---
def _curvature_sq(torus, curv):
    dim = torus.real_dim
    return sum(geometry.norm_sq(torus, curv.components[a, b])
               for a in range(dim) for b in range(a + 1, dim))


def ymh_terms(gauge, phi, tau, dealias=False):
    torus = gauge.torus
    r = gauge.rank
    phi = values_of(phi)
    curv = curvature(gauge)
    if r == 1 and dealias:
        density = geometry.dealiased_product(torus, phi, phi.conj()).real
    else:
        density = outer(phi, r)
    potential = density - _scalar_times_identity(np.full(torus.grid, tau), r)
    return {
        'curvature': _curvature_sq(torus, curv),
        'kinetic': 2.0 * dcov_norms(gauge, phi)['d'],
        'potential': geometry.norm_sq(torus, potential),
    }


def ymh(gauge, phi, tau, dealias=False):
    """YMH_τ = ‖F‖² + 2‖dφ‖² + ‖φφ* - τI‖²"""
    return float(sum(ymh_terms(gauge, phi, tau, dealias).values()))


def bogomolny_terms(gauge, phi, tau, dealias=False, half_factor=False):
    torus = gauge.torus
    r = gauge.rank
    phi = values_of(phi)
    curv = curvature(gauge)
    if r == 1 and dealias:
        density = geometry.dealiased_product(torus, phi, phi.conj()).real
    else:
        density = outer(phi, r)
    if half_factor:
        density = 0.5 * density
    moment = curv.ilambda + density - _scalar_times_identity(np.full(torus.grid, tau) if np.ndim(tau) == 0 else tau, r)
    f02 = 0.0 if curv.f02 is None else geometry.norm_sq(torus, curv.f02)
    return {
        'f02': 4.0 * f02,
        'dbar': 4.0 * form01_norm_sq(torus, dbar_cov(gauge, phi)),
        'moment': geometry.norm_sq(torus, moment),
    }


def bogomolny(gauge, phi, tau, dealias=False):
    """4‖F^{0,2}‖² + 4‖∂̄φ‖² + ‖iΛF + φφ* - τI‖²"""
    return float(sum(bogomolny_terms(gauge, phi, tau, dealias).values()))


def energy_identity_gap(gauge, phi, tau, dealias=False):
    return ymh(gauge, phi, tau, dealias) - bogomolny(gauge, phi, tau, dealias)


def topological_constant(gauge, tau):
    """4πτ·deg E + ∫ tr F∧F (T² 上只有第一項)"""
    torus = gauge.torus
    value = 4.0 * np.pi * tau * degree(torus, gauge.spec)
    if torus.complex_dim == 2:
        f = curvature(gauge).components
        pf = f[0, 1] @ f[2, 3] - f[0, 2] @ f[1, 3] + f[0, 3] @ f[1, 2] if gauge.rank > 1 else \
            f[0, 1] * f[2, 3] - f[0, 2] * f[1, 3] + f[0, 3] * f[1, 2]
        tr = pf if gauge.rank == 1 else np.trace(pf, axis1=-2, axis2=-1).real
        value -= 2.0 * geometry.integrate(torus, np.real(tr))
    return float(value)


# --- 殘差 ---
def _moment_unitary(gauge, phi, t_field, half_factor=False):
    curv = curvature(gauge)
    density = outer(phi, gauge.rank)
    if half_factor:
        density = 0.5 * density
    return curv, curv.ilambda + density - _scalar_times_identity(t_field, gauge.rank)


def metric_density(phi, metric):
    """|φ|²_H"""
    phi = values_of(phi)
    if metric.rank == 1:
        return np.abs(phi) ** 2 * metric.density()
    return np.einsum('...p,...pq,...q->...', phi.conj(), metric.values, phi).real


def metric_outer(phi, metric):
    """φ⊗φ^{*H} (r=1 為 |φ|²_H)"""
    phi = values_of(phi)
    if metric.rank == 1:
        return np.abs(phi) ** 2 * metric.density()
    return np.einsum('...p,...q,...qs->...ps', phi, phi.conj(), metric.values)


def metric_moment_residual(gauge, phi, metric, t_field, weight=None):
    """X = iΛF_H + w·φφ^{*H} - t (w 為 frame 權重，例如 e^{-u})"""
    curv = chern_metric_curvature(gauge, metric)
    rho = metric_outer(phi, metric)
    if weight is not None:
        rho = rho * (weight if metric.rank == 1 else np.asarray(weight)[..., None, None])
    return curv.ilambda + rho - _scalar_times_identity(t_field, metric.rank)


def residuals(kind, state, params, half_factor=False):
    kind = SystemKind(kind)
    state.require(REQUIRED_FIELDS[kind])
    if kind in (SystemKind.SW_KAHLER_FIXED, SystemKind.SW_KAHLER_COUPLED):
        from src.core.swkahler import sw_residuals
        return sw_residuals(kind, state, params)

    gauge = state.gauge
    torus = gauge.torus
    phi = values_of(state.phi)

    if kind in (SystemKind.VE_ABELIAN, SystemKind.NAVE):
        if kind is SystemKind.VE_ABELIAN and gauge.rank != 1:
            raise ShapeMismatch("VE_ABELIAN 需要線叢", rank=gauge.rank)
        curv, moment = _moment_unitary(gauge, phi, params.t_field(), half_factor)
        return ResidualReport(
            r_holo=_norm_01(gauge, phi),
            r_02=0.0 if curv.f02 is None else _norm(torus, curv.f02),
            r_moment=_norm(torus, moment),
        )

    if kind is SystemKind.TMVE:
        x = metric_moment_residual(gauge, phi, state.metric, params.t_field())
        return ResidualReport(r_holo=_norm_01(gauge, phi), r_02=_f02_norm(gauge),
                              r_moment=_h_norm(torus, x, state.metric))

    if kind is SystemKind.FVE:
        weight = np.exp(-np.asarray(state.frame_u, dtype=float))
        x = metric_moment_residual(gauge, phi, state.metric, params.t_field(), weight)
        return ResidualReport(r_holo=_norm_01(gauge, phi), r_02=_f02_norm(gauge),
                              r_moment=_h_norm(torus, x, state.metric))

    combined = tensor_dual(gauge, state.gauge_L)
    if kind is SystemKind.CVE:
        curv_e, moment = _moment_unitary(gauge, phi, params.t_field())
        curv_l = curvature(state.gauge_L)
        second = curv_l.ilambda - np.abs(phi) ** 2 if gauge.rank == 1 else \
            curv_l.ilambda - np.sum(np.abs(phi) ** 2, axis=-1)
        second = second - params.t_prime_field()
        f02 = 0.0
        if curv_e.f02 is not None:
            f02 = np.sqrt(geometry.norm_sq(torus, curv_e.f02) + geometry.norm_sq(torus, curv_l.f02))
        return ResidualReport(r_holo=_norm_01(combined, phi), r_02=float(f02),
                              r_moment=_norm(torus, moment), r_second=_norm(torus, second))

    # TMCVE
    k_weight = np.exp(-state.metric_L.exponent)
    x1 = metric_moment_residual(gauge, phi, state.metric, params.t_field(), k_weight)
    curv_l = chern_metric_curvature(state.gauge_L, state.metric_L)
    x2 = curv_l.ilambda - metric_density(phi, state.metric) * k_weight - params.t_prime_field()
    return ResidualReport(r_holo=_norm_01(combined, phi), r_02=_f02_norm(gauge),
                          r_moment=_h_norm(torus, x1, state.metric), r_second=_norm(torus, x2))


def _norm_01(gauge, phi):
    return float(np.sqrt(form01_norm_sq(gauge.torus, dbar_cov(gauge, phi))))


def _f02_norm(gauge):
    curv = curvature(gauge)
    return 0.0 if curv.f02 is None else _norm(gauge.torus, curv.f02)


# --- 積分約束 ---
@dataclass
class ConstraintResult:
    name: str
    ok: bool
    violation: float
    required: float

    def to_dict(self):
        return {'constraint': self.name, 'ok': self.ok,
                'violation': self.violation, 'required': self.required}


CONSTRAINT_FOR_KIND = {
    SystemKind.CVE: 'parameters',
    SystemKind.TMCVE: 't-tprime',
    SystemKind.SW_KAHLER_COUPLED: 'ff',
}


def constraint_check(kind, params, degrees, tol=CONSTRAINT_TOL):
    """
    線性積分約束 (Vol = 2π，因此 ∫ = 2π·平均)
      parameters: τ·r + τ′ = deg E + deg L
      t-tprime:   r·t̄ + t̄′ = deg E + deg L
      ff:         deg E - ½deg L = r·f̄ + f̄′
      t1-t2:      r₁t̄₁ + r₂t̄₂ = deg E  (α = t̄₁ - t̄₂)
    violation = 左式 - 右式；required 為讓約束成立的第二個參數值
    """
    if isinstance(kind, SystemKind):
        kind = CONSTRAINT_FOR_KIND.get(kind)
        if kind is None:
            return ConstraintResult('none', True, 0.0, float('nan'))

    r = degrees.get('rank', 1)
    deg_e = degrees.get('deg_E', 0.0)
    deg_l = degrees.get('deg_L', 0.0)

    if kind == 'parameters':
        lhs = params.tau * r + params.tau_prime
        rhs = deg_e + deg_l
        required = rhs - params.tau * r
    elif kind == 't-tprime':
        t_bar = params.bar('t', 'tau')
        lhs = r * t_bar + params.bar('t_prime', 'tau_prime')
        rhs = deg_e + deg_l
        required = rhs - r * t_bar
    elif kind == 'ff':
        f_bar = params.bar('f')
        lhs = r * f_bar + params.bar('f_prime')
        rhs = deg_e - 0.5 * deg_l
        required = rhs - r * f_bar
    elif kind == 't1-t2':
        r1, r2 = degrees['r1'], degrees['r2']
        t1 = params.bar('t', 'tau')
        lhs = r1 * t1 + r2 * params.bar('t_prime', 'tau_prime')
        rhs = deg_e
        required = (rhs - r1 * t1) / r2
    else:
        raise MissingField(f"未知的約束 {kind}", field='kind')

    violation = float(lhs - rhs)
    return ConstraintResult(kind, abs(violation) <= tol, violation, float(required))


def integral_identities(state, params):
    """
    解應滿足的積分恆等式：
      ∫|φ|²_H = 2π(r·t̄ - deg E)，耦合系統另有 ∫|φ|² = 2π(deg L - t̄′)
    """
    gauge = state.gauge
    torus = gauge.torus
    if state.metric is not None:
        density = metric_density(state.phi, state.metric)
        if state.metric_L is not None:
            density = density * np.exp(-state.metric_L.exponent)
        if state.frame_u is not None:
            density = density * np.exp(-np.asarray(state.frame_u, dtype=float))
    else:
        density = outer(state.phi, 1) if gauge.rank == 1 else np.sum(np.abs(values_of(state.phi)) ** 2, axis=-1)
    out = {
        'phi_norm_sq': geometry.integrate(torus, density),
        'predicted_E': 2.0 * np.pi * (gauge.rank * params.bar('t', 'tau') - degree(torus, gauge.spec)),
    }
    if state.gauge_L is not None:
        out['predicted_L'] = 2.0 * np.pi * (degree(torus, state.gauge_L.spec)
                                            - params.bar('t_prime', 'tau_prime'))
    return out


# --- moment map ---
def moment_map(gauge, phi, metric):
    """μ_{H,H}(∂̄, φ) = ΛF_H - iφ⊗φ^{*H}"""
    curv = chern_metric_curvature(gauge, metric)
    return curv.lambdaF - 1j * metric_outer(phi, metric)


def moment_map_pair(gauge, phi, metric, u):
    """μ_{H,K}(∂̄, φ_u)，K = He^u，φ_u = e^{-u/2}φ"""
    u = np.asarray(u, dtype=float)
    k_metric = MetricField(metric.torus, metric.rank,
                           metric.values + 0.5 * u if metric.rank == 1
                           else metric.values * np.exp(u)[..., None, None])
    phi_u = np.exp(-0.5 * u) * values_of(phi) if metric.rank == 1 else \
        np.exp(-0.5 * u)[..., None] * values_of(phi)
    return moment_map(gauge, phi_u, k_metric)


def moment_level_defect(torus, mu, level, rank=1):
    """‖μ + i·level·I‖ (level 可為常數或函數)"""
    lvl = np.asarray(level, dtype=float) * np.ones(torus.grid)
    shift = lvl if rank == 1 else lvl[..., None, None] * np.eye(rank)
    return _norm(torus, mu + 1j * shift)
