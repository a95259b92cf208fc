"""Exception types shared across the package.

Validation of alignment data is reported, not raised (see
core.alignment_validate); the exceptions here cover hard failures:
malformed files, impossible decoder states, and exhausted searches.
"""


class PhraseAlignError(Exception):
    """Base class for all package-specific errors."""


class CoverageConflictError(PhraseAlignError):
    """Two coverage vectors mark the same source position."""


class LineFormatError(PhraseAlignError):
    """A delimited input line does not match its expected format."""


class MarkupError(PhraseAlignError):
    """Constraint tags are unpaired, crossing, or enclose nothing."""


class ConstraintOverlapError(PhraseAlignError):
    """Two lexical constraints claim overlapping source spans."""


class RuleNotApplicable(PhraseAlignError):
    """A deduction rule's precondition does not hold for an item."""


class NoDerivationError(PhraseAlignError):
    """Search finished without a complete hypothesis."""

    def __init__(self, message, uncovered=()):
        super().__init__(message)
        self.uncovered = tuple(uncovered)


class OracleSpaceError(PhraseAlignError):
    """Exhaustive search space exceeds the configured cap."""


class CorpusMismatchError(PhraseAlignError):
    """Parallel files disagree on line counts."""


class EmptyCorpusError(PhraseAlignError):
    """A training routine received no usable data."""
