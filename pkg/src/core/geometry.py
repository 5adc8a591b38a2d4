import logging

import numpy as np

from src.core.errors import ConfigError, OddGrid, ShapeMismatch

logger = logging.getLogger(__name__)

VOLUME = 2.0 * np.pi
MIN_SITES = 8


class LatticeTorus:
    """
    平坦格點環面 T² / T⁴ (Kähler 正規化 Vol = 2π)

    real axis 2j, 2j+1 組成第 j 個複座標 z_j = x_{2j} + i x_{2j+1}。
    """

    def __init__(self, complex_dim, grid, side_lengths):
        self.complex_dim = int(complex_dim)
        self.real_dim = 2 * self.complex_dim
        self.grid = tuple(int(n) for n in grid)
        raw = np.asarray(side_lengths, dtype=float)
        self.raw_lengths = tuple(float(v) for v in raw)

        # 將整個度量等比例縮放，使總體積恰為 2π
        self.vol_scale = float((VOLUME / np.prod(raw)) ** (1.0 / self.real_dim))
        self.side_lengths = tuple(float(v) for v in raw * self.vol_scale)
        self.spacings = tuple(l / n for l, n in zip(self.side_lengths, self.grid))
        self.cell_volume = float(np.prod(self.spacings))
        self.n_sites = int(np.prod(self.grid))

        self.wavenumbers = []
        self.first_order = []
        for n, h in zip(self.grid, self.spacings):
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
            ik = 1j * k
            ik[n // 2] = 0.0  # Nyquist 歸零，一階導數才是精確反對稱
            k.flags.writeable = False
            ik.flags.writeable = False
            self.wavenumbers.append(k)
            self.first_order.append(ik)

        self._delta = None

    @property
    def volume(self):
        return self.cell_volume * self.n_sites

    def complex_pairs(self):
        return [(2 * j, 2 * j + 1) for j in range(self.complex_dim)]

    def slice_area(self, j):
        a, b = 2 * j, 2 * j + 1
        return self.side_lengths[a] * self.side_lengths[b]

    def axis_profile(self, values, axis, ndim):
        """把第 axis 軸的一維表格 reshape 成可廣播到 ndim 維陣列的形狀"""
        shape = [1] * ndim
        shape[axis] = len(values)
        return np.reshape(values, shape)

    def describe(self):
        return {
            'complex_dim': self.complex_dim,
            'grid': list(self.grid),
            'side_lengths': list(self.side_lengths),
            'vol_scale': self.vol_scale,
        }

    def __repr__(self):
        return f"LatticeTorus(dim={self.complex_dim}, grid={self.grid})"


def build_torus(complex_dim, grid, side_lengths=None):
    if complex_dim not in (1, 2):
        raise ConfigError("complex_dim 只支援 1 或 2", key='torus.dim', value=complex_dim)
    grid = list(grid)
    if len(grid) != 2 * complex_dim:
        raise ConfigError("grid 長度必須等於實維度", key='torus.grid', value=grid)
    if side_lengths is None:
        side_lengths = [1.0] * len(grid)
    if len(side_lengths) != len(grid) or min(side_lengths) <= 0:
        raise ConfigError("side_lengths 必須為正且與 grid 等長",
                          key='torus.lengths', value=list(side_lengths))
    for n in grid:
        if int(n) != n or n < MIN_SITES or n % 2:
            raise OddGrid(f"格點數 {n} 不合法 (需為偶數且 >= {MIN_SITES})", grid=grid)

    torus = LatticeTorus(complex_dim, grid, side_lengths)
    logger.debug("建立 %s, vol_scale=%.6f", torus, torus.vol_scale)
    return torus


def _check_grid(torus, field):
    field = np.asarray(field)
    if field.shape[:torus.real_dim] != torus.grid:
        raise ShapeMismatch("場的形狀與環面格點不符",
                            expected=list(torus.grid), got=list(field.shape))
    return field


# --- 積分與內積 ---
def integrate(torus, field):
    field = _check_grid(torus, field)
    if field.ndim != torus.real_dim:
        raise ShapeMismatch("integrate 只接受純量場", got=list(field.shape))
    total = field.sum() * torus.cell_volume
    return float(total) if np.isrealobj(total) else complex(total)


def mean(torus, field):
    return integrate(torus, field) / VOLUME


def inner(torus, u, v):
    """⟨u, v⟩ = ∫ Σ u·conj(v)，多餘的分量軸一併加總"""
    u = _check_grid(torus, u)
    v = _check_grid(torus, v)
    return complex(np.vdot(v, u) * torus.cell_volume)


def norm_sq(torus, u):
    u = _check_grid(torus, u)
    return float(np.sum(np.abs(u) ** 2) * torus.cell_volume)


def l2_norm(torus, u):
    return float(np.sqrt(norm_sq(torus, u)))


# --- 頻譜工具 ---
def _fft_axes(torus):
    return tuple(range(torus.real_dim))


def spectral_derivative(torus, field, axis):
    field = _check_grid(torus, field)
    symbol = torus.axis_profile(torus.first_order[axis], axis, field.ndim)
    out = np.fft.ifft(symbol * np.fft.fft(field, axis=axis), axis=axis)
    return out.real if np.isrealobj(field) else out


def apply_multiplier(torus, field, symbol):
    """以格點上的頻譜乘子作用於場 (symbol 形狀 = grid)"""
    field = _check_grid(torus, field)
    axes = _fft_axes(torus)
    sym = np.reshape(symbol, symbol.shape + (1,) * (field.ndim - torus.real_dim))
    out = np.fft.ifftn(sym * np.fft.fftn(field, axes=axes), axes=axes)
    return out.real if np.isrealobj(field) else out


def squared_wavenumber(torus):
    mesh = np.meshgrid(*torus.wavenumbers, indexing='ij')
    return sum(k ** 2 for k in mesh)


def delta_symbol(torus):
    """Δ := iΛ∂̄∂ 的頻譜 λ(k) = ½|k|² (由 conformal identity 鎖定)"""
    if torus._delta is None:
        lam = 0.5 * squared_wavenumber(torus)
        lam.flags.writeable = False
        torus._delta = lam
    return torus._delta


def apply_delta(torus, u):
    return apply_multiplier(torus, u, delta_symbol(torus))


def nyquist_symbol(torus):
    """只在 Nyquist 模態上非零的乘子 |k_Nyq| (其他模態為 0)"""
    weight = np.zeros(torus.grid)
    for axis, (n, k) in enumerate(zip(torus.grid, torus.wavenumbers)):
        profile = np.zeros(n)
        profile[n // 2] = abs(k[n // 2])
        weight = weight + torus.axis_profile(profile, axis, torus.real_dim) ** 2
    return np.sqrt(weight)


def sobolev_preconditioner(torus, mass=1.0, weight=1.0):
    """(mass + weight·|k|²)^{-1}"""
    return 1.0 / (mass + weight * squared_wavenumber(torus))


# --- 座標與 Fourier 模態 ---
def coordinates(torus):
    axes = [np.arange(n) * h for n, h in zip(torus.grid, torus.spacings)]
    return np.meshgrid(*axes, indexing='ij')


def fourier_mode(torus, mode, kind='cos'):
    mode = list(mode) + [0] * (torus.real_dim - len(mode))
    phase = sum(2.0 * np.pi * m * x / l
                for m, x, l in zip(mode, coordinates(torus), torus.side_lengths))
    phase = np.asarray(phase, dtype=float) * np.ones(torus.grid)
    if kind == 'cos':
        return np.cos(phase)
    if kind == 'sin':
        return np.sin(phase)
    if kind == 'exp':
        return np.exp(1j * phase)
    raise ConfigError(f"未知的 Fourier 模態類型: {kind}", key='kind', value=kind)


def field_from_modes(torus, terms=(), mean_value=0.0, key='params'):
    """
    由有限 Fourier 模態清單建立實純量場
    terms: [{'mode': [k...], 'amp': a, 'kind': 'cos'|'sin'}, ...]
    """
    field = np.full(torus.grid, float(mean_value))
    for idx, term in enumerate(terms or []):
        mode = list(term.get('mode', []))
        for axis, m in enumerate(mode):
            if axis >= torus.real_dim or abs(m) >= torus.grid[axis] // 4:
                raise ConfigError("Fourier 模態超出頻寬限制 (需低於 Nyquist/2)",
                                  key=f"{key}[{idx}].mode", value=mode)
        field = field + float(term.get('amp', 0.0)) * fourier_mode(
            torus, mode, term.get('kind', 'cos'))
    return field


def band_limited_noise(torus, rng, max_mode=2, complex_valued=False):
    """低頻隨機場 (每軸 |m| <= max_mode)，振幅約為 1"""
    coeffs = np.zeros(torus.grid, dtype=complex)
    index = tuple(np.r_[0:max_mode + 1, n - max_mode:n] for n in torus.grid)
    block = np.ix_(*index)
    shape = coeffs[block].shape
    coeffs[block] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    field = np.fft.ifftn(coeffs, norm='forward')
    if not complex_valued:
        field = field.real
    scale = np.sqrt(np.mean(np.abs(field) ** 2))
    return field / scale if scale > 0 else field


# --- 去混疊乘積 (3/2 規則) ---
def _padded_size(n):
    return 2 * int(np.ceil(3 * n / 4))


def _resize_spectrum(coeffs, new_shape):
    old_shape = coeffs.shape
    shifted = np.fft.fftshift(coeffs)
    out = np.zeros(new_shape, dtype=complex)
    src, dst = [], []
    for n_old, n_new in zip(old_shape, new_shape):
        if n_new >= n_old:
            off = (n_new - n_old) // 2
            src.append(slice(0, n_old))
            dst.append(slice(off, off + n_old))
        else:
            off = (n_old - n_new) // 2
            src.append(slice(off, off + n_new))
            dst.append(slice(0, n_new))
    out[tuple(dst)] = shifted[tuple(src)]
    return np.fft.ifftshift(out)


def dealiased_product(torus, u, v):
    u = _check_grid(torus, u)
    v = _check_grid(torus, v)
    big = tuple(_padded_size(n) for n in torus.grid)
    uu = np.fft.ifftn(_resize_spectrum(np.fft.fftn(u, norm='forward'), big), norm='forward')
    vv = np.fft.ifftn(_resize_spectrum(np.fft.fftn(v, norm='forward'), big), norm='forward')
    prod = np.fft.fftn(uu * vv, norm='forward')
    out = np.fft.ifftn(_resize_spectrum(prod, torus.grid), norm='forward')
    if np.isrealobj(u) and np.isrealobj(v):
        return out.real
    return out
