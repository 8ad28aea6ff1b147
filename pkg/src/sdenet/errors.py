"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so experiment code should
raise the most specific class that applies.
"""


class SdeNetError(Exception):
    """Base class for all package errors."""


class ConfigError(SdeNetError):
    """Invalid configuration, arguments, or input files. Exit code 2."""


class NumericError(SdeNetError):
    """Non-finite values or numerically invalid state. Exit code 3."""


class UndefinedMetricError(SdeNetError):
    """A metric is undefined for the given inputs (e.g. single-class data). Exit code 4."""


class InsufficientSamplesError(ConfigError):
    """Too few stochastic samples for the requested statistic."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNDEFINED_METRIC = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UndefinedMetricError):
        return EXIT_UNDEFINED_METRIC
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    raise TypeError(f"not a package error: {exc!r}")
