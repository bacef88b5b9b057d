"""Exception types shared across the package.

File-format and manifest errors get distinct classes because callers (CLI,
adapters) route them to exit codes and messages; numerical code raises plain
ValueError/IndexError where Python idiom expects it.
"""


class FormatError(ValueError):
    """Base for tensor-file format violations."""


class BadMagicError(FormatError):
    """File does not start with the FMAP magic header."""


class DimsOverflowError(FormatError):
    """Declared element count exceeds the 2**48 sanity bound."""


class TruncatedDataError(FormatError):
    """Header or payload ends before the declared length."""


class UnknownDtypeError(FormatError):
    """Dtype code in the header is not one of the supported kinds."""


class InvalidTensorError(FormatError):
    """Tensor violates its own invariants (empty dims, length mismatch)."""


class ManifestError(ValueError):
    """Base for architecture-manifest violations."""


class ManifestParseError(ManifestError):
    """Document is malformed or missing required fields."""


class DanglingPredecessorError(ManifestError):
    """A layer references a predecessor id that does not exist."""


class CycleError(ManifestError):
    """The layer graph contains a cycle."""


class JunctionChannelError(ManifestError):
    """Channel counts at an add/concat junction are inconsistent."""


class EmptyMaskError(ValueError):
    """A channel selection would leave a layer with zero output channels."""


class MaskConsistencyError(ValueError):
    """A mask plan does not match the manifest it is applied to."""


class ZeroVarianceWarning(UserWarning):
    """A response column is constant; correlations involving it are undefined."""
