"""Exception hierarchy shared across the package."""


class CatalogStitchError(Exception):
    """Base class for every error raised by this package."""


class FormatError(CatalogStitchError, ValueError):
    """File is not an 8-bit PNG of a supported color type."""


class EmptyMask(CatalogStitchError, ValueError):
    """Mask has no foreground pixel."""


class DimensionMismatch(CatalogStitchError, ValueError):
    """Two rasters that must share a size do not."""


class NonPositiveRatio(CatalogStitchError, ValueError):
    pass


class NoObjectFound(CatalogStitchError, ValueError):
    """No pixel in the evaluated region differs from the reference."""


class BackendFailure(CatalogStitchError, RuntimeError):
    """External backend crashed, exited non-zero, or left outputs missing/unreadable."""


class ContractViolation(CatalogStitchError, RuntimeError):
    """Backend produced output that breaks the stage contract."""


class IndexMissing(CatalogStitchError, FileNotFoundError):
    pass


class SchemaError(CatalogStitchError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DanglingPath(CatalogStitchError, FileNotFoundError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
