class InfrastructureError(RuntimeError):
    """Transport-level failure; the affected episode is not scored."""


class UsageError(RuntimeError):
    pass
