"""Exception types shared across the pipeline stages."""


class ShapeError(ValueError):
    """Array shapes incompatible with the requested operation."""


class SchemaError(ValueError):
    """Schema config and CSV contents disagree."""


class IngestError(ValueError):
    """A row-level parse failure; message carries the file line number."""


class StratificationError(ValueError):
    """A class is too small to be split across train/val/test."""


class ResampleError(ValueError):
    """Resampling preconditions violated (e.g. singleton class under SMOTE)."""


class CheckpointError(RuntimeError):
    """Checkpoint cannot be loaded or does not match the active schema."""


class PipelineError(RuntimeError):
    """A stage was invoked before its upstream artifacts exist."""
