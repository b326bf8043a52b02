"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class MalformedInput(PipelineError):
    """An input file violates its documented schema.

    ``pointer`` is a JSON-pointer-style path to the offending node, e.g.
    ``/pages/2/blocks/1/level``.
    """

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{message} (at {pointer})" if pointer else message)


class IoFailure(PipelineError):
    """An input file could not be read or an output could not be written."""


class SpanOutOfRange(PipelineError):
    """A requested page span lies outside the document's page range."""


class BackendUnavailable(PipelineError):
    """The text-generation backend could not be reached after retries."""


class RateLimited(PipelineError):
    """The backend kept rate-limiting us after backoff was exhausted."""


class SchemaViolation(PipelineError):
    """Backend output never validated against the response schema.

    Carries the last raw response text so callers or operators can inspect
    what the model actually produced.
    """

    def __init__(self, message: str, raw_text: str = ""):
        self.raw_text = raw_text
        super().__init__(message)


class TranscriptMiss(PipelineError):
    """The mock transcript holds no response for a request fingerprint."""

    def __init__(self, request_id: str, fingerprint: str):
        self.request_id = request_id
        self.fingerprint = fingerprint
        super().__init__(
            f"no transcript entry for request {request_id!r} (fingerprint {fingerprint})"
        )


class MismatchedCorpora(PipelineError):
    """Reports being compared do not cover the same document set."""


class ConfigError(PipelineError):
    """A run configuration file or flag set is invalid."""
