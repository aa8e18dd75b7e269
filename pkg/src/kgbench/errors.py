class KGBenchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(KGBenchError):
    """Problem with input data: malformed files, bad ids, inconsistent types."""

    exit_code = 2


class LoadError(DataError):
    pass


class FetchError(DataError):
    pass


class IntegrityError(FetchError):
    """Downloaded or cached file does not match the expected digest."""


class RankingError(DataError):
    pass


class NumericError(KGBenchError):
    """Non-finite loss or gradient during training."""

    exit_code = 3
