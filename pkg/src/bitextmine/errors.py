"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class EncodingError(PipelineError):
    """Input is not valid Unicode text."""


class EmptyDocument(PipelineError):
    """No nonempty text block survived parsing."""


class LanguageMismatch(PipelineError):
    """Document text disagrees with the declared language."""


class ProviderUnavailable(PipelineError):
    """Embedding backend could not be reached after bounded retries."""


class DimensionMismatch(PipelineError):
    """Embedding backend returned vectors of an unexpected dimension."""


class CacheMiss(PipelineError):
    """Requested text is not in the embedding cache and no fallback is configured."""


class CorruptEntry(PipelineError):
    """Embedding cache record failed its checksum."""


class DegenerateBlock(PipelineError):
    """Summed block embedding has (near-)zero norm and cannot be normalized."""


class InputTooLarge(PipelineError):
    """Problem size exceeds the exact-DP limit."""


class MetadataMissing(PipelineError):
    """Translation pair lacks required lecture metadata."""


class LectureMismatch(PipelineError):
    """Pivot inputs come from different lectures."""


class UnescapableText(PipelineError):
    """Text contains characters the requested export format cannot represent."""


class ConfigInvalid(PipelineError):
    """Pipeline configuration failed validation."""


class MissingPriorStage(PipelineError):
    """A stage was run before the stage that produces its inputs."""


class InsufficientPairs(UserWarning):
    """Fewer pairs were available than requested (warning, not fatal)."""
