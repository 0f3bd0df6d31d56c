# coding=utf-8
"""
例外類別定義
每個例外帶有 exit_code，CLI 依此回傳對應的結束代碼
"""


class RollMatchError(Exception):
    """所有錯誤的基底類別"""

    exit_code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return self.message


class ValidationError(RollMatchError):
    """輸入資料或參數不合法"""

    exit_code = 2

    def __str__(self):
        return 'ValidationError: %s' % self.message


class ConfigError(ValidationError):
    """設定檔錯誤"""


class PanelValidationError(ValidationError):
    """面板資料驗證失敗"""


class InsufficientHistoryError(ValidationError):
    """落後期數不足，無法組出 L 期共變數歷史"""

    def __init__(self, trajectory_id, time, detail=''):
        message = 'insufficient history: trajectory %s at t=%s' % (trajectory_id, time)
        if detail:
            message = '%s (%s)' % (message, detail)
        super().__init__(message)
        self.trajectory_id = trajectory_id
        self.time = time


class DimensionMismatchError(ValidationError):
    """向量維度不一致"""


class SingularScalingError(ValidationError):
    """共變異數矩陣奇異且未啟用 ridge"""


class TooFewControlsError(ValidationError):
    """控制組樣本不足以擬合結果模型"""


class DegenerateDesignError(ValidationError):
    """設計矩陣退化（全為常數或秩不足）"""


class InsufficientPairsError(ValidationError):
    """證偽檢定的配對數不足"""


class ArtifactMismatchError(ValidationError):
    """設計檔與資料檔雜湊不符"""


class InfeasibleDesignError(RollMatchError):
    """無法建構可行的配對設計"""

    exit_code = 3

    def __init__(self, message, treated=None):
        super().__init__(message)
        self.treated = treated

    def __str__(self):
        return 'InfeasibleDesignError: %s' % self.message
