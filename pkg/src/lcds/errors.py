"""Exception hierarchy shared across the pipeline.

Everything raised on purpose derives from LcdsError so callers can catch
pipeline failures without swallowing programming errors.
"""

from __future__ import annotations


class LcdsError(Exception):
    """Base class for all pipeline errors."""


# --- ingest ---------------------------------------------------------------

class UnrecognizedFormat(LcdsError):
    """No document-type signature matched the payload."""


class ConversionFailure(LcdsError):
    def __init__(self, doc_id: str, cause: str):
        super().__init__(f"cannot convert document {doc_id!r}: {cause}")
        self.doc_id = doc_id
        self.cause = cause


class DuplicateDocId(LcdsError):
    """Two documents in one record share a doc_id."""


# --- segmentation ----------------------------------------------------------

class SegmentationRejected(LcdsError):
    """Provider segmentation output could not be aligned to the input text."""


# --- retrieval -------------------------------------------------------------

class DuplicateId(LcdsError):
    """Two corpus documents share an id at index build time."""


class UnknownDoc(LcdsError):
    """Scoring was asked about a doc_id that was never indexed."""


# --- source mapping --------------------------------------------------------

class EmptyObservations(LcdsError):
    """Priority computation needs at least one observation."""


class EmptyCorpus(LcdsError):
    """Mapping-table construction needs at least one reference record."""


class NoEntry(LcdsError):
    """The mapping table has no entry for the requested field/segment."""


# --- logic engine ----------------------------------------------------------

class UnparseableRule(LcdsError):
    """Neither provider nor keyword classifier produced a logic type."""


class NoRuleForType(LcdsError):
    """A logic structure matched no rule in the department rulebook."""


class RuleNotEditable(LcdsError):
    """An edit targeted a rule whose editable flag is false."""


class EmptySources(LcdsError):
    """A non-knowledge plan was rendered with no source content."""


# --- gateway ---------------------------------------------------------------

class ProviderError(LcdsError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProviderTimeout(ProviderError):
    """The provider did not answer within the configured timeout."""


class TransientProviderError(ProviderError):
    """Transport-level failure worth retrying (connection reset, 5xx, timeout)."""


class RetriesExhausted(ProviderError):
    """All retry attempts failed."""


class MalformedStructuredOutput(LcdsError):
    """Provider text could not be parsed into the requested shape, even after repair."""


# --- summarizer ------------------------------------------------------------

class GenerationFailed(LcdsError):
    def __init__(self, field_errors: dict[str, str]):
        super().__init__(f"every field failed: {field_errors}")
        self.field_errors = field_errors


# --- evaluation ------------------------------------------------------------

class EmptyReference(LcdsError):
    """ROUGE-L needs a non-empty reference text."""


class ScoreOutOfRange(LcdsError):
    """A judge dimension score exceeded its maximum or went negative."""


class UnknownRuleId(LcdsError):
    """A human-sheet deduction named a rule missing from the catalog."""


class EmptyResults(LcdsError):
    """Report aggregation needs at least one per-record result."""


# --- review service --------------------------------------------------------

class UnknownSentence(LcdsError):
    """An edit or comment referenced a generated sentence id that does not exist."""


class NotGenerated(LcdsError):
    """Export requested before a summary was generated."""
