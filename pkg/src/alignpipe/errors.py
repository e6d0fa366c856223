"""Exception types raised across the pipeline.

Every error a stage can produce is a subclass of PipelineError so callers can
catch one type at the stage boundary and record the failure in the job store.
"""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


# --- text / metric ---------------------------------------------------------

class InvalidEncoding(PipelineError):
    """Input bytes are not decodable text."""


class OutOfRange(PipelineError):
    """A token slice exceeds the token sequence."""


class EmptyReference(PipelineError):
    """CER requested against an empty reference string."""


# --- transcript parsing ----------------------------------------------------

class UnknownFormat(PipelineError):
    """No registered parser for the requested format/extension."""


class NoCuesFound(PipelineError):
    """An SRT input contained zero parseable cues."""


class ExtractorFailed(PipelineError):
    """External text extractor exited non-zero."""


class ExtractorTimeout(PipelineError):
    """External text extractor exceeded its timeout."""


class HookFailed(PipelineError):
    """External cleaning hook failed (caller falls back to uncleaned text)."""


# --- audio / adapters ------------------------------------------------------

class EmptyAudio(PipelineError):
    """Audio input contained no samples."""


class AdapterFailed(PipelineError):
    """External adapter process exited non-zero or could not run."""


class MalformedAdapterOutput(PipelineError):
    """External adapter produced output violating its protocol."""


# --- alignment -------------------------------------------------------------

class EmptyTranscript(PipelineError):
    """Alignment requested against a transcript with no tokens."""


class NoCandidates(PipelineError):
    """Refined search invoked with an empty candidate list."""


# --- ingest / store --------------------------------------------------------

class SchemaError(PipelineError):
    """A structured input (CSV row, JSONL line) violates its schema."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DuplicateTranscript(PipelineError):
    """The same (session_id, transcript_id, format) appeared twice."""


class HandlerNotFound(PipelineError):
    """No download handler matches the URL."""


class DownloadFailed(PipelineError):
    """A download attempt failed (retryable)."""


class ConversionFailed(PipelineError):
    """Media-to-WAV conversion command failed."""


class StoreCorrupt(PipelineError):
    """Job store contents are unreadable; fail closed."""


class WriteFailed(PipelineError):
    """An output artifact could not be written."""


# --- CLI -------------------------------------------------------------------

class ConfigInvalid(PipelineError):
    """Pipeline configuration failed validation (CLI exit code 2)."""


class StageOrderViolation(PipelineError):
    """A stage was invoked before its predecessor completed (CLI exit code 3)."""
