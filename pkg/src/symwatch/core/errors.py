"""异常体系：每类错误对应一个 CLI 退出码."""

# 退出码常量
EXIT_INPUT_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_DEGENERATE_DATA = 3


class SymwatchError(Exception):
    """所有领域错误的基类."""

    exit_code: int = EXIT_INPUT_ERROR


# ---- 输入错误（退出码 1） ----


class InputError(SymwatchError):
    """输入文件或输入数据不满足约定."""

    exit_code = EXIT_INPUT_ERROR


class RowFormatError(InputError):
    """CSV 行格式错误，携带行号."""

    def __init__(self, path: str, line: int, reason: str) -> None:
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


class DuplicateCellError(InputError):
    """同一 (week, area, keyword) 出现多次."""


class UnknownKeywordError(InputError):
    """关键词不在注册表中."""


class AreaAbsentError(InputError):
    """某区域在某周没有数据（被抑制或缺失）."""


class WeekNotFoundError(InputError):
    """面板中不存在所需的周."""


class MissingControlError(InputError):
    """对照区域在预测周缺失，模型无法应用."""

    def __init__(self, target: str, control: str, week: object) -> None:
        self.target = target
        self.control = control
        super().__init__(
            f"control area {control} of target {target} is absent in week {week}"
        )


class WeekMismatchError(InputError):
    """模型拟合周与预测周不相邻."""


class MissingRunsError(InputError):
    """评估时找不到检测结果."""


# ---- 配置错误（退出码 2） ----


class ConfigError(SymwatchError):
    """配置或情景参数无效."""

    exit_code = EXIT_CONFIG_ERROR


# ---- 退化数据（退出码 3） ----


class DegenerateDataError(SymwatchError):
    """数据退化，无法得到有意义的结果."""

    exit_code = EXIT_DEGENERATE_DATA


class NoEligibleCandidatesError(DegenerateDataError):
    """目标区域没有满足距离约束的候选对照区域."""


class EmptyReferencePoolError(DegenerateDataError):
    """告警阈值的参照值池为空."""


class NoAnalyzableWeeksError(DegenerateDataError):
    """面板中没有相邻的可分析周对."""


class UndefinedCorrelationError(DegenerateDataError):
    """所有滞后下相关系数均无定义."""


class DegenerateLabelsError(DegenerateDataError):
    """配对后缺少正例或负例，AUC 无定义."""
