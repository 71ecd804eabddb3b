"""Exception types shared across the pipeline.

Every error raised on a contract violation derives from :class:`MVPFError`
so the CLI can map it to exit code 1 and print the originating message.
"""


class MVPFError(Exception):
    """Base class for pipeline contract errors."""


class DimensionError(MVPFError, ValueError):
    pass


class ContractError(MVPFError, ValueError):
    pass


class ConfigError(MVPFError, ValueError):
    pass


class DegenerateFitError(MVPFError, ArithmeticError):
    pass


class InsufficientDataError(MVPFError, ValueError):
    pass


class DivergenceError(MVPFError, ArithmeticError):
    pass


class TrainingError(MVPFError, RuntimeError):
    pass


class ModelError(MVPFError, RuntimeError):
    pass
