"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class CrisisDynError(Exception):
    exit_code = 1


class ConfigError(CrisisDynError, ValueError):
    exit_code = 2


class DataError(CrisisDynError, ValueError):
    exit_code = 3


class IngestionError(DataError):
    pass


class DegenerateAssetError(DataError):
    """A column has zero variance inside the window being standardized."""

    def __init__(self, ticker: str, detail: str = ""):
        self.ticker = ticker
        msg = f"zero-variance asset {ticker!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class DegeneratePortfolioError(DataError):
    pass


class NumericalError(CrisisDynError, ArithmeticError):
    exit_code = 4
