"""
t ↔ τ 的 u-transform、L̂ = (K⊗L)^{1/2} 的 Chern 算術與參數函數的建構

慣例：Δu = τ - t，K = He^u，φ_u = e^{-u/2}φ
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.core import geometry
from src.core.bundle_fields import BundleSpec, GaugeField, MetricField, Section, values_of
from src.core.errors import InvalidModel, NonIntegrableFrame, NonPositiveSigma, ParityError
from src.core.operators import curvature, dbar_cov, form01_norm_sq, poisson_solve

logger = logging.getLogger(__name__)

INTEGRABLE_TOL = 1e-8
DIRECTIONS = ('t_to_tau', 'tau_to_t')


@dataclass
class UTransform:
    u: np.ndarray
    tau: float
    t: np.ndarray
    defect: float = 0.0

    def to_dict(self):
        return {'tau': self.tau, 'defect': self.defect,
                'u_sup': float(np.abs(self.u).max())}


def u_from_t(torus, t_field):
    """τ := t̄，u := Δ^{-1}(τ - t)"""
    t = np.asarray(t_field, dtype=float) * np.ones(torus.grid)
    tau = geometry.mean(torus, t)
    u = poisson_solve(torus, tau - t)
    defect = float(np.abs(geometry.apply_delta(torus, u) - (tau - t)).max())
    logger.debug("u-transform: τ=%.6f, sup|Δu-(τ-t)|=%.2e", tau, defect)
    return UTransform(u, tau, t, defect)


def _scale_section(phi, factor):
    values = values_of(phi)
    scaled = factor * values if values.ndim == np.ndim(factor) else factor[..., None] * values
    return phi.with_values(scaled) if isinstance(phi, Section) else scaled


def apply_u_transform(metric, phi, u, direction='t_to_tau'):
    """t_to_tau: (H, φ) ↦ (He^u, e^{-u/2}φ)；tau_to_t 為其逆"""
    if direction not in DIRECTIONS:
        raise InvalidModel("未知的 direction", direction=direction, allowed=list(DIRECTIONS))
    u = np.asarray(u, dtype=float)
    sign = 1.0 if direction == 't_to_tau' else -1.0
    if metric.rank == 1:
        moved = MetricField(metric.torus, 1, metric.log_scale + 0.5 * sign * u)
    else:
        moved = MetricField(metric.torus, metric.rank, metric.values * np.exp(sign * u)[..., None, None])
    return moved, _scale_section(phi, np.exp(-0.5 * sign * u))


def dbar_defect(gauge, phi, u):
    """‖∂̄φ_u + ½(∂̄u)φ_u‖：φ 全純時應只剩 φ 本身的殘差"""
    torus = gauge.torus
    u = np.asarray(u, dtype=float)
    phi_u = _scale_section(values_of(phi), np.exp(-0.5 * u))
    dbar_phi_u = dbar_cov(gauge, phi_u)
    out = []
    for j, (a, b) in enumerate(torus.complex_pairs()):
        du = 0.5 * (geometry.spectral_derivative(torus, u, a) + 1j * geometry.spectral_derivative(torus, u, b))
        out.append(dbar_phi_u[j] + 0.5 * _scale_section(phi_u, du))
    return float(np.sqrt(form01_norm_sq(torus, out)))


def u_preserves_vanishing(torus, s, phi, u, tol=1e-12):
    """逐點 e^{-u/2} 可逆：‖sφ‖ = 0 ⇔ ‖sφ_u‖ = 0"""
    s = np.asarray(s)
    phi = values_of(phi)
    phi_u = _scale_section(phi, np.exp(-0.5 * np.asarray(u, dtype=float)))
    if s.ndim == phi.ndim + 1:
        s_phi = np.einsum('...pq,...q->...p', s, phi)
        s_phi_u = np.einsum('...pq,...q->...p', s, phi_u)
    else:
        s_phi, s_phi_u = s * phi, s * phi_u
    left = geometry.l2_norm(torus, s_phi)
    right = geometry.l2_norm(torus, s_phi_u)
    return {'norm_s_phi': left, 'norm_s_phi_u': right,
            'consistent': (left <= tol) == (right <= tol)}


def rescale_constant_u(torus, u):
    """把 frame 函數拆成平均值 (併入 τ) 與零平均部分"""
    u = np.asarray(u, dtype=float)
    c = geometry.mean(torus, u)
    return u - c, c


def frame_metric_to_t(torus, frame_u, tau):
    """framed 系統的參數函數 t = τ - Δu"""
    return float(tau) - geometry.apply_delta(torus, np.asarray(frame_u, dtype=float))


# --- L̂ = (K ⊗ L)^{1/2} ---
def hat_bundle(spec_l, spec_k=None, gauge_l=None, gauge_k=None):
    """
    chern(L̂) = (chern K + chern L) / 2，連絡取 Â = ½(A + a_K)
    回傳 (BundleSpec, GaugeField 或 None)
    """
    chern_k = spec_k.chern if spec_k is not None else (0,) * len(spec_l.chern)
    total = [nk + nl for nk, nl in zip(chern_k, spec_l.chern)]
    if any(n % 2 for n in total):
        raise ParityError("K ⊗ L 的 Chern 數為奇數，平方根不存在", chern=total)
    spec = BundleSpec(1, tuple(n // 2 for n in total), 'Lhat')
    if gauge_l is None:
        return spec, None

    theta = 0.5 * np.array(gauge_l.theta)
    twist = 0.5 * np.array(gauge_l.twist)
    pert = None if gauge_l.perturbation is None else 0.5 * np.array(gauge_l.perturbation)
    if gauge_k is not None:
        theta = theta + 0.5 * np.array(gauge_k.theta)
        twist = twist + 0.5 * np.array(gauge_k.twist)
        if gauge_k.perturbation is not None:
            pert = 0.5 * np.array(gauge_k.perturbation) if pert is None else pert + 0.5 * np.array(gauge_k.perturbation)
    return spec, GaugeField(gauge_l.torus, spec, theta, twist, pert)


# --- 參數函數 ---
def parameter_from_perturbation(torus, mode, f, s=None, gauge_b=None):
    """
    mode='scalar-curvature': t = f - s/2
    mode='connection':       t = f + (i/2)ΛF_b = f + ½·iΛF_b (b 必須可積)
    回傳 (t, t̄)
    """
    f = np.asarray(f, dtype=float) * np.ones(torus.grid)
    if mode == 'scalar-curvature':
        s = np.zeros(torus.grid) if s is None else np.asarray(s, dtype=float)
        t = f - 0.5 * s
    elif mode == 'connection':
        curv = curvature(gauge_b)
        if curv.f02 is not None:
            residual = geometry.l2_norm(torus, curv.f02)
            if residual > INTEGRABLE_TOL:
                raise NonIntegrableFrame("固定連絡 b 不可積 (F_b^{0,2} ≠ 0)", f02_norm=residual)
        t = f + 0.5 * curv.ilambda
    else:
        raise InvalidModel("未知的參數 mode", mode=mode)
    return t, geometry.mean(torus, t)


def sigma_from(tau, tau_prime):
    """σ = 4π / (τ - τ′)"""
    diff = float(tau) - float(tau_prime)
    if diff <= 0:
        raise NonPositiveSigma("σ 需要 τ > τ′", tau=tau, tau_prime=tau_prime)
    return 4.0 * np.pi / diff


def sigma_from_fields(torus, t_field, t_prime_field):
    t = np.asarray(t_field, dtype=float) * np.ones(torus.grid)
    tp = np.asarray(t_prime_field, dtype=float) * np.ones(torus.grid)
    return sigma_from(geometry.mean(torus, t), geometry.mean(torus, tp))
