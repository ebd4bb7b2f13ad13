class ParameterError(ValueError):
    """A precondition of a pure computation does not hold."""


class ConfigError(ValueError):
    """
    A configuration is inconsistent.

    :param violations: one message per violated rule, each naming the offending field
    """

    def __init__(self, violations: list[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ShapeError(ValueError):
    pass


class StatusError(ValueError):
    pass


class UnknownNodeError(LookupError):
    pass


class QueryError(LookupError):
    pass


class AuditError(RuntimeError):
    pass


class UndefinedMetricError(ValueError):
    pass


class ComparisonError(ValueError):
    pass
