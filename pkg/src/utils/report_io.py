"""
報告輸出工具：原子寫入 (temp + os.replace)、JSON、CSV / Excel 表格與格點 CSV
"""
import json
import logging
import os
import tempfile
from fractions import Fraction

import numpy as np
import pandas as pd

from src.core.errors import InvalidModel

logger = logging.getLogger(__name__)


def _atomic_write(path, payload, mode):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, mode, **({'encoding': 'utf-8'} if 'b' not in mode else {})) as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def atomic_write_text(path, text):
    return _atomic_write(path, text, 'w')


def atomic_write_bytes(path, data):
    return _atomic_write(path, data, 'wb')


def to_jsonable(value):
    """numpy、Fraction 與巢狀容器轉成 JSON 可寫的型別"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path, data):
    text = json.dumps(to_jsonable(data), ensure_ascii=False, indent=2)
    atomic_write_text(path, text + '\n')
    logger.debug("💾 寫入 %s", path)
    return path


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_table(df, path, xlsx=False):
    """CSV 一定輸出；xlsx=True 時另存同名 .xlsx (openpyxl)"""
    atomic_write_text(path, df.to_csv(index=False))
    written = [path]
    if xlsx:
        xlsx_path = os.path.splitext(path)[0] + '.xlsx'
        directory = os.path.dirname(os.path.abspath(xlsx_path))
        fd, tmp = tempfile.mkstemp(prefix='.tmp-', suffix='.xlsx', dir=directory)
        os.close(fd)
        try:
            df.to_excel(tmp, index=False, engine='openpyxl')
            os.replace(tmp, xlsx_path)
        except Exception:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        written.append(xlsx_path)
    return written


def grid_frame(torus, field):
    """純量格點場 → 長表 (row-major)：i0.., x0.., value"""
    values = np.asarray(field)
    if values.shape != torus.grid:
        raise InvalidModel("emit_grid 只接受純量格點場", expected=list(torus.grid), got=list(values.shape))
    if np.iscomplexobj(values):
        if np.abs(values.imag).max() > 1e-12:
            raise InvalidModel("emit_grid 需要實數場 (請先取 |φ|² 等純量)")
        values = values.real
    index = np.indices(torus.grid).reshape(torus.real_dim, -1)
    data = {f"i{a}": index[a] for a in range(torus.real_dim)}
    for a in range(torus.real_dim):
        data[f"x{a}"] = index[a] * torus.spacings[a]
    data['value'] = values.reshape(-1)
    return pd.DataFrame(data)


def emit_grid(torus, field, path):
    df = grid_frame(torus, field)
    atomic_write_text(path, df.to_csv(index=False))
    return path
