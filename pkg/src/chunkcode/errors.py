"""Exception types shared across the pipeline."""


class ChunkCodeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ChunkCodeError):
    """Invalid run configuration (bad chunk size, unknown mode, ...)."""


class IngestionError(ChunkCodeError):
    """A document or manifest could not be read or parsed."""


class CodebookError(ChunkCodeError):
    """A codebook file failed validation."""


class TransportError(ChunkCodeError):
    """HTTP transport failed after retries, or returned a non-retryable status."""


class CacheMissError(ChunkCodeError):
    """Strict replay was requested but the cache has no entry for the key."""


class CellError(ChunkCodeError):
    """A single (document, dimension, iteration[, chunk]) cell failed."""

    def __init__(self, message, *, doc_id, dimension_id, iteration, chunk_index=None):
        super().__init__(message)
        self.doc_id = doc_id
        self.dimension_id = dimension_id
        self.iteration = iteration
        self.chunk_index = chunk_index


class SubjectMismatchError(ChunkCodeError):
    """Two rating sources do not cover the same subjects."""

    def __init__(self, message, *, missing=(), extra=()):
        super().__init__(message)
        self.missing = tuple(missing)
        self.extra = tuple(extra)


class UndefinedMetricError(ChunkCodeError):
    """A confusion metric was requested whose denominator is zero."""


class DegenerateKappaError(ChunkCodeError):
    """Every rating falls in a single category, so kappa is undefined."""
