"""
vortexlab 的領域例外

所有可預期的失敗都由 VortexLabError 衍生，並帶有 details 字典，
方便 CLI 直接寫入 report.json。NonExistence / MaxIters 屬於「判決」，不是例外。
"""


class VortexLabError(Exception):
    def __init__(self, message="", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {
            'error': type(self).__name__,
            'message': self.message,
            'details': {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(value):
    # numpy 純量與 Fraction 轉成 JSON 可接受的型別
    if hasattr(value, 'item'):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return str(value)


class ConfigError(VortexLabError):
    """設定檔驗證失敗 (details 內含 key 路徑與行號)"""


class OddGrid(VortexLabError):
    """格點數必須為偶數且 >= 8"""


class ShapeMismatch(VortexLabError):
    pass


class NearBranchCut(VortexLabError):
    """plaquette 相位距離 ±π 小於安全邊界"""


class NonZeroMean(VortexLabError):
    pass


class NonPositiveMetric(VortexLabError):
    pass


class MissingField(VortexLabError):
    pass


class ConstraintViolation(VortexLabError):
    pass


class DegenerateSpectrum(VortexLabError):
    pass


class ParityError(VortexLabError):
    pass


class NonIntegrableFrame(VortexLabError):
    pass


class NonPositiveSigma(VortexLabError):
    pass


class CorruptCheckpoint(VortexLabError):
    pass


class InvalidModel(VortexLabError):
    """分裂模型或 bundle 資料自相矛盾"""
