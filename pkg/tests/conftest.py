import numpy as np
import pytest
import yaml

from src.core.geometry import build_torus


@pytest.fixture
def t2():
    return build_torus(1, [16, 16])


@pytest.fixture
def t2_fine():
    return build_torus(1, [32, 32])


@pytest.fixture
def t4():
    # 12⁴：頻寬 2 的場相乘後仍低於 Nyquist
    return build_torus(2, [12, 12, 12, 12])


@pytest.fixture
def t4_small():
    return build_torus(2, [8, 8, 8, 8])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_config(tmp_path):
    """把 dict 寫成 YAML 設定檔，輸出目錄指向 tmp_path"""

    def _write(data, name='config.yaml'):
        data = dict(data)
        output = dict(data.get('output') or {})
        output.setdefault('dir', str(tmp_path / 'runs'))
        output.setdefault('ledger', str(tmp_path / 'runs.db'))
        data['output'] = output
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, allow_unicode=True), encoding='utf-8')
        return path

    return _write
