"""
離散協變微分算子、曲率的 Kähler 分解、Laplacian/Poisson 與度量圖像的 Chern 曲率

慣例：
  D_a = g (D^bg_a - iτ_a - i a_a) g^†，D^bg 為沿格線平行移動後的頻譜導數
  ∂̄_j = ½(D_{2j} + i D_{2j+1})，∂_j = ½(D_{2j} - i D_{2j+1})
  (0,1)-形式範數 |dz̄_j|² = 2；(0,2) 係數取單位標架 ½ dz̄₁∧dz̄₂
  Δ := iΛ∂̄∂，頻譜 ½|k|²，滿足 iΛF_{He^u} = iΛF_H + Δu
"""
import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from src.core import geometry
from src.core.bundle_fields import (MetricField, check_branch, plaquettes, principal,
                                    values_of)
from src.core.errors import InvalidModel, NonPositiveMetric, NonZeroMean, ShapeMismatch

logger = logging.getLogger(__name__)


class CovariantDerivative:
    """每個規範場組裝一次的協變導數資料 (平行移動相位與 drift)"""

    def __init__(self, gauge):
        torus = gauge.torus
        self.gauge = gauge
        self.torus = torus
        self.phases = []
        self.drifts = []
        for a in range(torus.real_dim):
            theta = gauge.theta[a]
            running = np.cumsum(theta, axis=a) - theta
            total = theta.sum(axis=a, keepdims=True)
            eta = principal(-total)
            x = torus.axis_profile(np.arange(torus.grid[a]) * torus.spacings[a], a, torus.real_dim)
            self.phases.append(np.exp(1j * (running + eta * x / torus.side_lengths[a])))
            self.drifts.append(1j * eta / torus.side_lengths[a])
        self.connections = [gauge.connection_matrix(a) for a in range(torus.real_dim)]

    def _lift(self, array, values):
        return np.reshape(array, array.shape + (1,) * (values.ndim - self.torus.real_dim))

    def background(self, values, axis):
        phase = self._lift(self.phases[axis], values)
        drift = self._lift(self.drifts[axis], values)
        q = phase.conj() * values
        dq = geometry.spectral_derivative(self.torus, q, axis) + drift * q
        return phase * dq

    def _act(self, matrix, values):
        if self.gauge.rank == 1:
            return self._lift(matrix, values) * values
        return np.einsum('...pq,...q->...p', matrix, values)

    def apply(self, values, axis):
        values = np.asarray(values, dtype=complex)
        frame = self.gauge.frame
        if frame is not None:
            values = self._act(np.swapaxes(frame.conj(), -1, -2) if self.gauge.rank > 1 else frame.conj(), values)
        out = self.background(values, axis) - 1j * self._act(self.connections[axis], values)
        if frame is not None:
            out = self._act(frame, out)
        return out


def _check_section(gauge, values):
    values = values_of(values)
    expected = gauge.torus.grid + gauge.fiber
    if values.shape != expected:
        raise ShapeMismatch("截面與規範場不相容", expected=list(expected), got=list(values.shape))
    return values


def d_cov(gauge, section):
    values = _check_section(gauge, section)
    deriv = gauge.derivative()
    return np.stack([deriv.apply(values, a) for a in range(gauge.torus.real_dim)])


def dbar_cov(gauge, section):
    full = d_cov(gauge, section)
    return np.stack([0.5 * (full[2 * j] + 1j * full[2 * j + 1])
                     for j in range(gauge.torus.complex_dim)])


def del_cov(gauge, section):
    full = d_cov(gauge, section)
    return np.stack([0.5 * (full[2 * j] - 1j * full[2 * j + 1])
                     for j in range(gauge.torus.complex_dim)])


def form01_norm_sq(torus, coeffs):
    """(0,1) 或 (1,0) 形式的 L² 範數平方 (|dz̄|² = 2)"""
    return 2.0 * sum(geometry.norm_sq(torus, c) for c in coeffs)


def dbar_norm(gauge, section):
    return float(np.sqrt(form01_norm_sq(gauge.torus, dbar_cov(gauge, section))))


def dcov_norms(gauge, section):
    """回傳 ‖dφ‖², ‖∂φ‖², ‖∂̄φ‖²"""
    torus = gauge.torus
    full = d_cov(gauge, section)
    dbar = [0.5 * (full[2 * j] + 1j * full[2 * j + 1]) for j in range(torus.complex_dim)]
    dlt = [0.5 * (full[2 * j] - 1j * full[2 * j + 1]) for j in range(torus.complex_dim)]
    return {
        'd': sum(geometry.norm_sq(torus, c) for c in full),
        'del': form01_norm_sq(torus, dlt),
        'dbar': form01_norm_sq(torus, dbar),
    }


def _del_component(gauge, values, j):
    deriv = gauge.derivative()
    return 0.5 * (deriv.apply(values, 2 * j) - 1j * deriv.apply(values, 2 * j + 1))


def _dbar_component(gauge, values, j):
    deriv = gauge.derivative()
    return 0.5 * (deriv.apply(values, 2 * j) + 1j * deriv.apply(values, 2 * j + 1))


def dbar_adjoint_coeffs(gauge, psi):
    """係數層級的伴隨 -Σ_j ∂_j ψ_j (Euclidean 內積)"""
    return -sum(_del_component(gauge, psi[j], j) for j in range(gauge.torus.complex_dim))


def dbar_adjoint(gauge, psi):
    """∂̄^*ψ = -2 Σ_j ∂_j ψ_j，對 (0,1) 形式範數為 ∂̄ 的伴隨"""
    return 2.0 * dbar_adjoint_coeffs(gauge, psi)


def dbar_star_02(gauge, beta):
    """(0,2) 形式 (單位標架係數) 的 ∂̄^*，回傳 (0,1) 係數 (∂_2β, -∂_1β)"""
    beta = values_of(beta)
    return np.stack([_del_component(gauge, beta, 1), -_del_component(gauge, beta, 0)])


# --- 曲率 ---
@dataclass
class CurvatureDecomp:
    """
    components: f_ab = iF_ab，形狀 (D, D, *grid) 或 (D, D, *grid, r, r)
    ilambda:    iΛF (Hermitian)
    f02:        F^{0,2} 的單位標架係數 (僅 T⁴)
    plaquette:  原始 plaquette 曲率 (det links，除以 rank)
    """
    components: np.ndarray
    ilambda: np.ndarray
    f02: np.ndarray = None
    plaquette: np.ndarray = None
    rank: int = 1

    @property
    def lambdaF(self):
        return -1j * self.ilambda

    @property
    def f20(self):
        if self.f02 is None:
            return None
        if self.rank == 1:
            return -np.conj(self.f02)
        return -np.conj(np.swapaxes(self.f02, -1, -2))

    def F(self, a, b):
        return -1j * self.components[a, b]


def background_field_strength(gauge):
    """每個 slice 的常數 B_j = 2πn_j / A_j (線叢因子)"""
    torus = gauge.torus
    return [2.0 * np.pi * n / torus.slice_area(j) for j, n in enumerate(gauge.spec.line_chern())]


def end_derivative(gauge, matrix, axis, include_perturbation=True):
    """End 叢上的協變導數 ∂_a X - i[C_a, X] (C = twist + a)"""
    d = geometry.spectral_derivative(gauge.torus, matrix, axis)
    if gauge.rank == 1:
        return d
    c = gauge.connection_matrix(axis) if include_perturbation else _twist_matrix(gauge, axis)
    return d - 1j * (c @ matrix - matrix @ c)


def _twist_matrix(gauge, axis):
    r = gauge.rank
    c = np.zeros(gauge.torus.grid + (r, r), dtype=complex)
    idx = np.arange(r)
    c[..., idx, idx] = gauge.twist[axis]
    return c


def f02_from_components(components):
    """單位標架係數 F02 = ½[(F_02 - F_13) + i(F_03 + F_12)]，F = -i f"""
    f = components
    return 0.5 * (-1j * (f[0, 2] - f[1, 3]) + (f[0, 3] + f[1, 2]))


def curvature(gauge):
    torus = gauge.torus
    check_branch(gauge)
    dim = torus.real_dim
    r = gauge.rank
    shape = (dim, dim) + torus.grid + (() if r == 1 else (r, r))
    comps = np.zeros(shape, dtype=float if r == 1 else complex)
    strength = background_field_strength(gauge)
    eye = 1.0 if r == 1 else np.eye(r)

    for j, (a, b) in enumerate(torus.complex_pairs()):
        comps[a, b] = comps[a, b] + strength[j] * eye
        comps[b, a] = -comps[a, b]

    pert = gauge.perturbation
    if pert is not None:
        for a in range(dim):
            for b in range(a + 1, dim):
                if r == 1:
                    f = (geometry.spectral_derivative(torus, pert[b], a)
                         - geometry.spectral_derivative(torus, pert[a], b))
                else:
                    f = (end_derivative(gauge, pert[b], a, include_perturbation=False)
                         - end_derivative(gauge, pert[a], b, include_perturbation=False)
                         - 1j * (pert[a] @ pert[b] - pert[b] @ pert[a]))
                comps[a, b] = comps[a, b] + f
                comps[b, a] = -comps[a, b]

    if gauge.frame is not None and r > 1:
        g = gauge.frame
        comps = g @ comps @ np.swapaxes(g.conj(), -1, -2)

    ilambda = sum(comps[a, b] for a, b in torus.complex_pairs())
    f02 = f02_from_components(comps) if torus.complex_dim == 2 else None

    plaq = np.zeros((dim, dim) + torus.grid)
    for a in range(dim):
        for b in range(a + 1, dim):
            plaq[a, b] = plaquettes(gauge, a, b) / (torus.spacings[a] * torus.spacings[b] * r)
            plaq[b, a] = -plaq[a, b]
    return CurvatureDecomp(comps, ilambda, f02, plaq, r)


def degree_of(gauge):
    """(1/2π)∫ tr iΛF"""
    torus = gauge.torus
    il = curvature(gauge).ilambda
    tr = il if gauge.rank == 1 else np.trace(il, axis1=-2, axis2=-1).real
    return geometry.integrate(torus, tr) / (2.0 * np.pi)


def chern_metric_curvature(gauge, metric):
    """
    由 ∂̄-算子 (gauge) 與度量 H 決定的 Chern 連絡曲率
    r=1:  iΛF_H = iΛF₀ + Δw，H = H₀e^w
    r>1:  iΛF_h = iΛF_A - 2 Σ_j ∇̄_j(h^{-1} ∇_j h)
    """
    if not isinstance(metric, MetricField):
        raise NonPositiveMetric("需要 MetricField")
    if gauge.frame is not None:
        raise InvalidModel("度量圖像需要無 gauge frame 的場")
    base = curvature(gauge)
    torus = gauge.torus
    if gauge.rank == 1:
        il = base.ilambda + geometry.apply_delta(torus, metric.exponent)
        return CurvatureDecomp(base.components, il, base.f02, base.plaquette, gauge.rank)

    h = metric.values
    h_inv = np.linalg.inv(h)
    correction = np.zeros_like(h)
    for j, (a, b) in enumerate(torus.complex_pairs()):
        da = end_derivative(gauge, h, a)
        db = end_derivative(gauge, h, b)
        inner = h_inv @ (0.5 * (da - 1j * db))
        outer = 0.5 * (end_derivative(gauge, inner, a) + 1j * end_derivative(gauge, inner, b))
        correction = correction + outer
    il = base.ilambda - 2.0 * correction
    return CurvatureDecomp(base.components, il, base.f02, base.plaquette, gauge.rank)


# --- Poisson ---
def poisson_solve(torus, rhs, tol=1e-10):
    """唯一的零平均解 u，使 Δu = rhs"""
    rhs = np.asarray(rhs)
    total = geometry.integrate(torus, rhs)
    if abs(total) > tol:
        raise NonZeroMean("Poisson 右端項的積分不為零", integral=abs(total))
    lam = geometry.delta_symbol(torus)
    inv = np.zeros_like(lam)
    inv[lam > 0] = 1.0 / lam[lam > 0]
    return geometry.apply_multiplier(torus, rhs, inv)


def unitary_shift(gauge, u):
    """
    度量 H → He^u 在 unitary 圖像中對應的連絡擾動 (r=1)
    a_{2j} += ½∂_{2j+1}u，a_{2j+1} -= ½∂_{2j}u
    """
    torus = gauge.torus
    a = (np.zeros((torus.real_dim,) + torus.grid) if gauge.perturbation is None
         else np.array(gauge.perturbation, dtype=float))
    for p, q in torus.complex_pairs():
        a[p] += 0.5 * geometry.spectral_derivative(torus, u, q)
        a[q] -= 0.5 * geometry.spectral_derivative(torus, u, p)
    return gauge.with_perturbation(a)


def convention_lock_defect(gauge, metric, u):
    """
    sup |iΛF_{He^u} - iΛF_H - Δu| (r=1)
    左邊由 unitary 圖像的連絡曲率 (一階頻譜導數) 計算，右邊用 Δ 的符號表 ½|k|²
    """
    torus = gauge.torus
    u = np.asarray(u, dtype=float)
    w = metric.exponent
    shifted = (curvature(unitary_shift(gauge, w + u)).ilambda
               - curvature(unitary_shift(gauge, w)).ilambda)
    return float(np.abs(shifted - geometry.apply_delta(torus, u)).max())


def delta_table_digest(torus):
    lam = np.ascontiguousarray(geometry.delta_symbol(torus))
    return hashlib.sha256(lam.tobytes()).hexdigest()

