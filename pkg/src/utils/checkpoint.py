"""
VTXF 二進位 checkpoint (little-endian)

header: 'VTXF', u32 version, u32 complex_dim, u32 rank, u32 x D grid,
        i32 x n chern, f64 x D side lengths (縮放前)
blocks: u32 name_len, name, u32 ndim, u64 x ndim shape, u8 dtype, payload
"""
import logging
import struct

import numpy as np

from src.core.bundle_fields import BundleSpec, MetricField, Section, make_background
from src.core.errors import CorruptCheckpoint, NonPositiveMetric, ShapeMismatch
from src.core.functionals import FieldState
from src.core.geometry import LatticeTorus
from src.utils.report_io import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b'VTXF'
VERSION = 1
DTYPES = {0: np.dtype('<f8'), 1: np.dtype('<c16')}
BLOCKS = ('twist', 'perturbation', 'frame', 'phi', 'beta', 'metric')
UNITARY_TOL = 1e-10


def _block(name, array):
    array = np.asarray(array)
    code = 1 if np.iscomplexobj(array) else 0
    array = np.ascontiguousarray(array, dtype=DTYPES[code])
    raw = name.encode('utf-8')
    head = struct.pack('<I', len(raw)) + raw + struct.pack('<I', array.ndim)
    head += struct.pack(f'<{array.ndim}Q', *array.shape) + struct.pack('<B', code)
    return head + array.tobytes()


def encode_state(state):
    gauge = state.gauge
    torus = gauge.torus
    spec = gauge.spec
    d = torus.real_dim
    out = [MAGIC, struct.pack('<III', VERSION, torus.complex_dim, spec.rank),
           struct.pack(f'<{d}I', *torus.grid),
           struct.pack(f'<{torus.complex_dim}i', *spec.chern),
           struct.pack(f'<{d}d', *torus.raw_lengths)]

    arrays = {'twist': gauge.twist, 'perturbation': gauge.perturbation, 'frame': gauge.frame}
    for name in ('phi', 'beta'):
        value = getattr(state, name)
        arrays[name] = None if value is None else (value.values if isinstance(value, Section) else value)
    arrays['metric'] = None if state.metric is None else state.metric.values
    for name in BLOCKS:
        if arrays[name] is not None:
            out.append(_block(name, arrays[name]))
    return b''.join(out)


def save_state(path, state):
    data = encode_state(state)
    atomic_write_bytes(path, data)
    logger.info("💾 checkpoint 已寫入 %s (%d bytes)", path, len(data))
    return path


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, section):
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint("checkpoint 被截斷", section=section,
                                    offset=self.pos, needed=n, size=len(self.data))
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, section):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), section))

    @property
    def done(self):
        return self.pos >= len(self.data)


def _read_block(reader):
    (name_len,) = reader.unpack('<I', 'block-name')
    name = reader.take(name_len, 'block-name').decode('utf-8', errors='replace')
    if name not in BLOCKS:
        raise CorruptCheckpoint("未知的 block", section=name)
    (ndim,) = reader.unpack('<I', name)
    shape = reader.unpack(f'<{ndim}Q', name)
    (code,) = reader.unpack('<B', name)
    if code not in DTYPES:
        raise CorruptCheckpoint("未知的 dtype", section=name, dtype=code)
    dtype = DTYPES[code]
    count = int(np.prod(shape)) if ndim else 1
    payload = reader.take(count * dtype.itemsize, name)
    return name, np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def _check_frame(frame, rank):
    if rank == 1:
        defect = float(np.abs(np.abs(frame) - 1.0).max())
    else:
        eye = np.eye(rank)
        defect = float(np.abs(frame @ np.swapaxes(frame.conj(), -1, -2) - eye).max())
    if defect > UNITARY_TOL:
        raise CorruptCheckpoint("frame 不是 unitary", section='frame', defect=defect)


def decode_state(data):
    reader = _Reader(data)
    if reader.take(4, 'magic') != MAGIC:
        raise CorruptCheckpoint("magic 不符，不是 VTXF 檔", section='magic')
    version, complex_dim, rank = reader.unpack('<III', 'header')
    if version != VERSION:
        raise CorruptCheckpoint("不支援的 VTXF 版本", section='header', version=version)
    if complex_dim not in (1, 2) or rank < 1:
        raise CorruptCheckpoint("header 內容不合法", section='header',
                                complex_dim=complex_dim, rank=rank)
    d = 2 * complex_dim
    grid = reader.unpack(f'<{d}I', 'header')
    chern = reader.unpack(f'<{complex_dim}i', 'header')
    lengths = reader.unpack(f'<{d}d', 'header')

    arrays = {}
    while not reader.done:
        name, array = _read_block(reader)
        arrays[name] = array
    if 'twist' not in arrays:
        raise CorruptCheckpoint("缺少 twist block", section='twist')

    torus = LatticeTorus(complex_dim, grid, lengths)
    spec = BundleSpec(rank, chern, 'E')
    try:
        background = make_background(torus, spec, arrays['twist'])
        if 'frame' in arrays:
            _check_frame(arrays['frame'], rank)
        gauge = background.replace(perturbation=arrays.get('perturbation'), frame=arrays.get('frame'))
        phi = Section(torus, spec, arrays['phi']) if 'phi' in arrays else None
    except (ShapeMismatch, ValueError) as exc:
        raise CorruptCheckpoint("block 形狀與 header 不符", section='fields', reason=str(exc)) from exc

    metric = None
    if 'metric' in arrays:
        try:
            metric = MetricField(torus, rank, arrays['metric'])
        except (NonPositiveMetric, ShapeMismatch) as exc:
            raise CorruptCheckpoint("metric block 無效", section='metric', **exc.details) from exc
    return FieldState(gauge=gauge, phi=phi, beta=arrays.get('beta'), metric=metric)


def load_state(path):
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as exc:
        raise CorruptCheckpoint("無法讀取 checkpoint", section='file', path=str(path)) from exc
    state = decode_state(data)
    logger.info("💾 checkpoint 已載入 %s", path)
    return state
