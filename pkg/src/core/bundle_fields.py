"""
格點上的 Hermitian bundle、連絡 (link variables)、截面與度量場

表示法：E = ℓ ⊗ C^r，其中 ℓ 是常曲率的背景線叢 (Chern 數 N/r)，
C^r 部分帶有常數對角 flat twist 與光滑的 Hermitian 擾動 a。
link 慣例 U_a(x) = e^{-iθ_a(x)}，iF_ab ≈ plaquette / (h_a h_b)。
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from src.core import geometry
from src.core.errors import (DegenerateSpectrum, InvalidModel, NearBranchCut,
                             NonPositiveMetric, ShapeMismatch)

logger = logging.getLogger(__name__)

ROLE_TAGS = ('E', 'L', 'L0', 'Lhat')
BRANCH_MARGIN = 0.1
DENSE_LIMIT = 1024
UNITARY_TOL = 1e-12


def principal(angle):
    """把角度映到 (-π, π]"""
    return -np.angle(np.exp(-1j * np.asarray(angle)))


@dataclass(frozen=True)
class BundleSpec:
    rank: int = 1
    chern: tuple = (0,)
    role_tag: str = 'E'

    def __post_init__(self):
        chern = self.chern
        if isinstance(chern, (int, np.integer)):
            chern = (int(chern),)
        object.__setattr__(self, 'chern', tuple(int(n) for n in chern))
        if self.rank < 1:
            raise InvalidModel("rank 必須 >= 1", rank=self.rank)
        if self.role_tag not in ROLE_TAGS:
            raise InvalidModel("未知的 role_tag", role_tag=self.role_tag)

    def line_chern(self):
        """背景線叢 ℓ 的 Chern 數 (det 的 Chern 數除以 rank)"""
        out = []
        for n in self.chern:
            if n % self.rank:
                raise InvalidModel("det Chern 數必須能被 rank 整除",
                                   chern=list(self.chern), rank=self.rank)
            out.append(n // self.rank)
        return tuple(out)

    def dual(self):
        return BundleSpec(self.rank, tuple(-n for n in self.chern), self.role_tag)

    def to_dict(self):
        return {'rank': self.rank, 'chern': list(self.chern), 'role_tag': self.role_tag}


def degree(torus, spec):
    """deg E = (1/2π)∫ tr iΛF (T² 上等於 N，T⁴ 上為 Σ_j 2πN_j / A_j)"""
    if torus.complex_dim == 1:
        return float(spec.chern[0])
    return float(sum(2.0 * np.pi * n / torus.slice_area(j) for j, n in enumerate(spec.chern)))


def _expm_hermitian(matrix, scale):
    """exp(-i·scale·X)，X 為逐點 Hermitian 矩陣"""
    w, v = np.linalg.eigh(matrix)
    phases = np.exp(-1j * scale * w)
    return np.einsum('...ik,...k,...jk->...ij', v, phases, v.conj())


class GaugeField:
    """
    不可變的格點規範場

    theta:        (D, *grid) 背景線叢的 link 角度
    twist:        (D, r) 常數對角 flat twist
    perturbation: r=1 時為實數 (D, *grid)；r>1 時為 Hermitian (D, *grid, r, r)
    frame:        lattice gauge frame g (r=1 為相位，r>1 為 unitary)
    """

    def __init__(self, torus, spec, theta, twist, perturbation=None, frame=None):
        self.torus = torus
        self.spec = spec
        self.rank = spec.rank
        self.theta = _frozen(theta)
        self.twist = _frozen(np.asarray(twist, dtype=float).reshape(torus.real_dim, spec.rank))
        self.perturbation = None if perturbation is None else _frozen(perturbation)
        self.frame = None if frame is None else _frozen(frame)
        self._derivative = None
        self._links = None

    @property
    def fiber(self):
        return () if self.rank == 1 else (self.rank,)

    @property
    def is_background(self):
        return self.perturbation is None and self.frame is None

    def replace(self, **changes):
        kwargs = dict(theta=self.theta, twist=self.twist,
                      perturbation=self.perturbation, frame=self.frame)
        kwargs.update(changes)
        spec = changes.pop('spec', None) or self.spec
        kwargs.pop('spec', None)
        return GaugeField(self.torus, spec, **kwargs)

    def with_perturbation(self, perturbation):
        return self.replace(perturbation=perturbation)

    def connection_matrix(self, axis):
        """C_a = diag(τ_a) + a_a (不含背景與 frame)"""
        if self.rank == 1:
            c = np.full(self.torus.grid, self.twist[axis, 0])
            if self.perturbation is not None:
                c = c + self.perturbation[axis]
            return c
        c = np.zeros(self.torus.grid + (self.rank, self.rank), dtype=complex)
        idx = np.arange(self.rank)
        c[..., idx, idx] = self.twist[axis]
        if self.perturbation is not None:
            c = c + self.perturbation[axis]
        return c

    @property
    def links(self):
        if self._links is None:
            self._links = _frozen(self._assemble_links())
        return self._links

    def _assemble_links(self):
        torus = self.torus
        out = []
        for a in range(torus.real_dim):
            h = torus.spacings[a]
            base = np.exp(-1j * self.theta[a])
            if self.rank == 1:
                link = base * np.exp(-1j * h * self.connection_matrix(a))
                if self.frame is not None:
                    link = self.frame * link * np.roll(self.frame, -1, axis=a).conj()
            else:
                link = base[..., None, None] * _expm_hermitian(self.connection_matrix(a), h)
                if self.frame is not None:
                    nxt = np.roll(self.frame, -1, axis=a)
                    link = self.frame @ link @ np.swapaxes(nxt.conj(), -1, -2)
            out.append(link)
        return np.stack(out)

    def det_angles(self):
        """θ = -arg det U (每個方向)"""
        links = self.links
        det = links if self.rank == 1 else np.linalg.det(links)
        return -np.angle(det)

    def derivative(self):
        from src.core.operators import CovariantDerivative
        if self._derivative is None:
            self._derivative = CovariantDerivative(self)
        return self._derivative

    def __repr__(self):
        return f"GaugeField(rank={self.rank}, chern={self.spec.chern}, grid={self.torus.grid})"


def _frozen(array):
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


class Section:
    """格點截面：r=1 時 values 形狀為 grid，r>1 時為 grid + (r,)"""

    def __init__(self, torus, spec, values, form_degree=0, residual=None):
        values = np.asarray(values, dtype=complex)
        expected = torus.grid + (() if spec.rank == 1 else (spec.rank,))
        if values.shape != expected:
            raise ShapeMismatch("截面形狀不符", expected=list(expected), got=list(values.shape))
        if form_degree not in (0, '02'):
            raise InvalidModel("form_degree 只能是 0 或 '02'", form_degree=form_degree)
        if form_degree == '02' and torus.complex_dim != 2:
            raise InvalidModel("(0,2) 截面只存在於 T⁴")
        self.torus = torus
        self.spec = spec
        self.values = _frozen(values)
        self.form_degree = form_degree
        self.residual = residual

    @classmethod
    def zeros(cls, torus, spec, form_degree=0):
        shape = torus.grid + (() if spec.rank == 1 else (spec.rank,))
        return cls(torus, spec, np.zeros(shape, dtype=complex), form_degree)

    def norm_sq(self):
        return geometry.norm_sq(self.torus, self.values)

    def pointwise_sq(self):
        v = np.abs(self.values) ** 2
        return v if self.spec.rank == 1 else v.sum(axis=-1)

    def with_values(self, values):
        return Section(self.torus, self.spec, values, self.form_degree)


def values_of(section):
    return section.values if isinstance(section, Section) else np.asarray(section)


class MetricField:
    """
    正定 Hermitian 度量場
    r=1: 以 log-scale u 儲存，H = H₀ e^{2u}
    r>1: 每個格點一個正定矩陣 h (相對於背景 H₀)
    """

    def __init__(self, torus, rank, values):
        values = np.asarray(values)
        self.torus = torus
        self.rank = rank
        if rank == 1:
            if values.shape != torus.grid:
                raise ShapeMismatch("度量 log-scale 形狀不符", got=list(values.shape))
            if not np.all(np.isfinite(values)):
                raise NonPositiveMetric("度量包含非有限值")
            self.values = _frozen(values.astype(float))
        else:
            if values.shape != torus.grid + (rank, rank):
                raise ShapeMismatch("度量矩陣形狀不符", got=list(values.shape))
            herm = 0.5 * (values + np.swapaxes(values.conj(), -1, -2))
            low = float(np.linalg.eigvalsh(herm).min())
            if not low > 0:
                raise NonPositiveMetric("度量不是正定", min_eigenvalue=low)
            self.values = _frozen(herm)

    @classmethod
    def identity(cls, torus, rank=1):
        if rank == 1:
            return cls(torus, 1, np.zeros(torus.grid))
        return cls(torus, rank, np.broadcast_to(np.eye(rank, dtype=complex),
                                                torus.grid + (rank, rank)).copy())

    @classmethod
    def from_exponent(cls, torus, w):
        """H = H₀ e^{w} (r=1)"""
        return cls(torus, 1, 0.5 * np.asarray(w))

    @property
    def log_scale(self):
        return self.values

    @property
    def exponent(self):
        """w = 2u，H/H₀ = e^{w}"""
        return 2.0 * self.values

    def density(self):
        return np.exp(self.exponent)

    def matrix(self):
        if self.rank == 1:
            return self.density()[..., None, None].astype(complex)
        return self.values

    def sqrt_and_inverse_sqrt(self):
        w, v = np.linalg.eigh(self.values)
        root = np.einsum('...ik,...k,...jk->...ij', v, np.sqrt(w), v.conj())
        inv_root = np.einsum('...ik,...k,...jk->...ij', v, 1.0 / np.sqrt(w), v.conj())
        return root, inv_root

    def log_eigen_spread(self):
        if self.rank == 1:
            w = self.exponent
            return float(w.max() - w.min())
        w = np.log(np.linalg.eigvalsh(self.values))
        return float(w.max() - w.min())


# --- 背景場 ---
def make_background(torus, spec, twist=None):
    if len(spec.chern) != torus.complex_dim:
        raise InvalidModel("Chern 資料數量必須等於複維度",
                           chern=list(spec.chern), complex_dim=torus.complex_dim)
    line = spec.line_chern()
    x = geometry.coordinates(torus)
    theta = np.zeros((torus.real_dim,) + torus.grid)
    for j, n in enumerate(line):
        a, b = 2 * j, 2 * j + 1
        if n == 0:
            continue
        field = 2.0 * np.pi * n / torus.slice_area(j)
        theta[b] = field * x[a] * torus.spacings[b]
        seam = np.zeros(torus.grid)
        last = [slice(None)] * torus.real_dim
        last[a] = torus.grid[a] - 1
        seam[tuple(last)] = (-field * torus.side_lengths[a] * x[b])[tuple(last)]
        theta[a] = seam

    if twist is None:
        twist = default_twist(torus, spec.rank)
    return GaugeField(torus, spec, theta, twist)


def default_twist(torus, rank):
    """讓 split model 的各 summand 彼此相異的常數 twist (r=1 時為零)"""
    twist = np.zeros((torus.real_dim, rank))
    if rank > 1:
        offsets = np.linspace(-0.5, 0.5, rank)
        for a in range(torus.real_dim):
            twist[a] = offsets * (0.6 if a % 2 == 0 else 0.35) * 2.0 * np.pi / torus.side_lengths[a]
    return twist


def plaquettes(gauge, a, b):
    """principal-branch plaquette 相位 P_ab (det links)"""
    th = gauge.det_angles()
    p = th[a] + np.roll(th[b], -1, axis=a) - np.roll(th[a], -1, axis=b) - th[b]
    return principal(p)


def check_branch(gauge):
    worst = 0.0
    for a in range(gauge.torus.real_dim):
        for b in range(a + 1, gauge.torus.real_dim):
            worst = max(worst, float(np.abs(plaquettes(gauge, a, b)).max()))
    if worst > np.pi - BRANCH_MARGIN:
        raise NearBranchCut("plaquette 相位接近 ±π", max_phase=worst)
    return worst


def chern_number(gauge):
    """
    每個 ω-slice (2j, 2j+1) 的 Chern 數：(1/2π)·Σ plaquette，對橫向位置取平均後四捨五入
    T² 回傳 int，T⁴ 回傳 tuple
    """
    check_branch(gauge)
    torus = gauge.torus
    out = []
    for a, b in torus.complex_pairs():
        p = plaquettes(gauge, a, b)
        transverse = torus.n_sites // (torus.grid[a] * torus.grid[b])
        out.append(int(round(float(p.sum()) / (2.0 * np.pi * transverse))))
    return out[0] if torus.complex_dim == 1 else tuple(out)


def unitarity_defect(gauge):
    links = gauge.links
    if gauge.rank == 1:
        return float(np.abs(np.abs(links) - 1.0).max())
    eye = np.eye(gauge.rank)
    prod = links @ np.swapaxes(links.conj(), -1, -2)
    return float(np.abs(prod - eye).max())


# --- 規範變換 ---
def random_gauge(torus, rank, seed):
    rng = np.random.default_rng(seed)
    if rank == 1:
        return np.exp(2j * np.pi * rng.random(torus.grid))
    z = rng.standard_normal(torus.grid + (rank, rank)) + 1j * rng.standard_normal(torus.grid + (rank, rank))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def gauge_transform(gauge, g, *sections):
    """(A, φ) ↦ (g·A, g·φ)；回傳新的 GaugeField 與轉換後的截面"""
    if gauge.frame is None:
        frame = g
    elif gauge.rank == 1:
        frame = g * gauge.frame
    else:
        frame = g @ gauge.frame
    new_gauge = gauge.replace(frame=frame)
    moved = []
    for s in sections:
        v = values_of(s)
        nv = g * v if gauge.rank == 1 else np.einsum('...ij,...j->...i', g, v)
        moved.append(s.with_values(nv) if isinstance(s, Section) else nv)
    return (new_gauge, *moved)


def tensor_dual(gauge_e, gauge_l):
    """E ⊗ L* 上的連絡 (L 必須為線叢，且兩者都不帶 frame)"""
    if gauge_l.rank != 1:
        raise InvalidModel("tensor_dual 的第二個 bundle 必須是線叢")
    if gauge_e.frame is not None or gauge_l.frame is not None:
        raise InvalidModel("tensor_dual 需要無 gauge frame 的場")
    r = gauge_e.rank
    spec = BundleSpec(r, tuple(ne - r * nl for ne, nl in zip(gauge_e.spec.chern, gauge_l.spec.chern)), 'E')
    twist = gauge_e.twist - gauge_l.twist
    pert = None
    if gauge_e.perturbation is not None or gauge_l.perturbation is not None:
        pe = gauge_e.perturbation
        pl = gauge_l.perturbation
        if r == 1:
            pert = (0 if pe is None else pe) - (0 if pl is None else pl)
        else:
            shape = (gauge_e.torus.real_dim,) + gauge_e.torus.grid + (r, r)
            pert = np.zeros(shape, dtype=complex) if pe is None else np.array(pe)
            if pl is not None:
                pert = pert - pl[..., None, None] * np.eye(r)
    return GaugeField(gauge_e.torus, spec, gauge_e.theta - gauge_l.theta, twist, pert)


# --- 光滑截面與全純截面 ---
def _theta_slice(torus, a, b, n, ta, tb):
    """背景線叢 (slice a,b 的 Chern 數 n > 0，flat twist ta, tb) 的 theta 函數基底"""
    x = geometry.coordinates(torus)
    la, lb = torus.side_lengths[a], torus.side_lengths[b]
    field = 2.0 * np.pi * n / (la * lb)
    shift = tb / field
    reach = 6 + int(abs(shift) / la) + int(6.0 / (np.sqrt(field) * la))
    basis = []
    for j in range(n):
        v = np.zeros(torus.grid, dtype=complex)
        for k in range(-reach, reach + 1):
            m = j + k * n
            center = m * la / n
            kappa = 2.0 * np.pi * m / lb
            v += np.exp(-0.5 * field * (x[a] + shift - center) ** 2
                        + 1j * kappa * x[b] + 1j * ta * x[a] - 1j * k * ta * la)
        basis.append(v)
    return basis


def _slice_functions(torus, j, n, ta, tb, holomorphic):
    a, b = 2 * j, 2 * j + 1
    if n > 0:
        return _theta_slice(torus, a, b, n, ta, tb)
    if n < 0:
        if holomorphic:
            return []
        return [np.conj(v) for v in _theta_slice(torus, a, b, -n, -ta, -tb)]
    if holomorphic and (abs(ta) > 1e-14 or abs(tb) > 1e-14):
        return []
    return [np.ones(torus.grid, dtype=complex)]


def _summand_functions(gauge, p, holomorphic):
    torus = gauge.torus
    funcs = [np.ones(torus.grid, dtype=complex)]
    for j, n in enumerate(gauge.spec.line_chern()):
        a, b = 2 * j, 2 * j + 1
        parts = _slice_functions(torus, j, n, gauge.twist[a, p], gauge.twist[b, p], holomorphic)
        funcs = [f * g for f in funcs for g in parts]
    return funcs


def _embed(gauge, p, values):
    if gauge.rank == 1:
        return values
    out = np.zeros(gauge.torus.grid + (gauge.rank,), dtype=complex)
    out[..., p] = values
    return out


def _orthonormalize(torus, arrays):
    if not arrays:
        return []
    mat = np.stack([a.reshape(-1) for a in arrays], axis=1) * np.sqrt(torus.cell_volume)
    q, _ = np.linalg.qr(mat)
    return [q[:, i].reshape(arrays[0].shape) / np.sqrt(torus.cell_volume) for i in range(q.shape[1])]


def holomorphic_basis(gauge, per_summand=False):
    """
    背景場的閉式全純截面 (theta 函數)，L² 正交歸一
    per_summand=True 時回傳 {summand: [values...]}，各 summand 內部歸一
    """
    if not gauge.is_background:
        raise InvalidModel("閉式全純基底只適用於背景場")
    if per_summand:
        return {p: [_embed(gauge, p, v) for v in _orthonormalize(gauge.torus, _summand_functions(gauge, p, True))]
                for p in range(gauge.rank)}
    arrays = []
    for p in range(gauge.rank):
        arrays.extend(_embed(gauge, p, v) for v in _summand_functions(gauge, p, True))
    return _orthonormalize(gauge.torus, arrays)


def smooth_frame(gauge):
    """任意 Chern 數下的光滑截面集合 (N<0 時使用共軛 theta 函數)"""
    arrays = []
    for p in range(gauge.rank):
        arrays.extend(_embed(gauge, p, v) for v in _summand_functions(gauge, p, False))
    return _orthonormalize(gauge.torus, arrays)


def random_state(torus, spec, seed, amplitude, max_mode=2, twist=None):
    """背景場乘上光滑隨機擾動，加上頻寬受限的隨機截面 (完全由 seed 決定)"""
    background = make_background(torus, spec, twist)
    if amplitude < 0:
        raise InvalidModel("amplitude 必須 >= 0", amplitude=amplitude)
    if amplitude == 0:
        return background, Section.zeros(torus, spec)

    rng = np.random.default_rng(seed)
    r = spec.rank
    if r == 1:
        pert = np.stack([geometry.band_limited_noise(torus, rng, max_mode)
                         for _ in range(torus.real_dim)])
    else:
        pert = np.zeros((torus.real_dim,) + torus.grid + (r, r), dtype=complex)
        for a in range(torus.real_dim):
            for i in range(r):
                for k in range(i, r):
                    z = geometry.band_limited_noise(torus, rng, max_mode, complex_valued=(i != k))
                    pert[a, ..., i, k] = z
                    pert[a, ..., k, i] = np.conj(z)
    gauge = background.with_perturbation(amplitude * pert)

    frames = smooth_frame(background)
    phi = np.zeros(torus.grid + background.fiber, dtype=complex)
    for v in frames:
        q = geometry.band_limited_noise(torus, rng, max_mode, complex_valued=True)
        phi += v * (q if r == 1 else q[..., None])
    rms = np.sqrt(np.mean(np.abs(phi) ** 2) * (1 if r == 1 else r))
    phi = amplitude * phi / rms if rms > 0 else phi
    return gauge, Section(torus, spec, phi)


# --- ∂̄ 的奇異向量 ---
def _dbar_linear_operator(gauge):
    """
    √2·∂̄_A 再疊上 Nyquist 模態的懲罰列：一階導數的 Nyquist 符號被歸零，
    不加懲罰時這些模態會變成假的 ∂̄ kernel
    """
    from src.core.operators import dbar_adjoint_coeffs, dbar_cov
    torus = gauge.torus
    shape = torus.grid + gauge.fiber
    n = int(np.prod(shape))
    scale = np.sqrt(2.0)
    penalty = 0.5 * scale * geometry.nyquist_symbol(torus)
    m = torus.complex_dim * n

    def matvec(x):
        phi = np.asarray(x).reshape(shape)
        nyq = geometry.apply_multiplier(torus, phi, penalty)
        return np.concatenate([scale * dbar_cov(gauge, phi).reshape(-1), nyq.reshape(-1)])

    def rmatvec(y):
        y = np.asarray(y).reshape(-1)
        psi = y[:m].reshape((torus.complex_dim,) + shape)
        nyq = geometry.apply_multiplier(torus, y[m:].reshape(shape), penalty)
        return scale * dbar_adjoint_coeffs(gauge, psi).reshape(-1) + nyq.reshape(-1)

    return scipy.sparse.linalg.LinearOperator((m + n, n), matvec=matvec, rmatvec=rmatvec,
                                              dtype=complex), n


def dbar_spectrum(gauge, count, seed=0):
    """
    ∂̄_A 最小的 count 個奇異值與對應的 L² 正交歸一右奇異向量
    小問題直接對 2M^†M 做 eigh，大問題改用 lobpcg (頻譜 preconditioner)
    """
    torus = gauge.torus
    op, n = _dbar_linear_operator(gauge)
    want = min(count + 1, n)
    if n <= DENSE_LIMIT:
        dense = op.matmat(np.eye(n, dtype=complex))
        gram = dense.conj().T @ dense
        evals, evecs = scipy.linalg.eigh(gram, subset_by_index=[0, want - 1])
    else:
        normal = scipy.sparse.linalg.LinearOperator(
            (n, n), matvec=lambda x: op.rmatvec(op.matvec(x)), dtype=complex)
        precond_symbol = 1.0 / (1.0 + 0.5 * geometry.squared_wavenumber(torus))
        shape = torus.grid + gauge.fiber

        def precond(x):
            x = np.asarray(x)
            cols = x.reshape(shape + (-1,))
            out = geometry.apply_multiplier(torus, cols, precond_symbol)
            return out.reshape(x.shape)

        rng = np.random.default_rng(seed)
        start = rng.standard_normal((n, want)) + 1j * rng.standard_normal((n, want))
        pre = scipy.sparse.linalg.LinearOperator((n, n), matvec=precond, matmat=precond, dtype=complex)
        evals, evecs = scipy.sparse.linalg.lobpcg(normal, start, M=pre, largest=False,
                                                  tol=1e-12, maxiter=2000)
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]

    singular = np.sqrt(np.clip(evals.real, 0.0, None))
    vectors = []
    for i in range(min(count, evecs.shape[1])):
        c = evecs[:, i]
        c = c / np.linalg.norm(c)
        big = np.argmax(np.abs(c))
        c = c * np.exp(-1j * np.angle(c[big]))
        vectors.append(c.reshape(torus.grid + gauge.fiber) / np.sqrt(torus.cell_volume))
    return singular, vectors


def project_holomorphic(gauge, count, seed=0):
    if count < 1:
        raise InvalidModel("count 必須 >= 1", count=count)
    singular, vectors = dbar_spectrum(gauge, count, seed)
    if len(singular) > count and abs(singular[count] - singular[count - 1]) < 1e-12:
        raise DegenerateSpectrum("第 count 與 count+1 個奇異值無法區分",
                                 count=count, values=[float(s) for s in singular[:count + 1]])
    logger.debug("∂̄ 最小奇異值: %s", singular[:count + 1])
    return [Section(gauge.torus, gauge.spec, v, residual=float(s))
            for v, s in zip(vectors, singular[:count])]


def holomorphic_sections(gauge, count=None):
    """背景場走閉式 theta 基底，其他情況退回 project_holomorphic"""
    from src.core.operators import dbar_norm
    if gauge.is_background:
        basis = holomorphic_basis(gauge)
        if count is not None:
            basis = basis[:count]
        return [Section(gauge.torus, gauge.spec, v, residual=dbar_norm(gauge, v)) for v in basis]
    return project_holomorphic(gauge, count or 1)
