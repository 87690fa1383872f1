"""Exception hierarchy for streamslu.

Every error raised on purpose by the package derives from ``StreamSluError`` so
verbs can report it and pick an exit code without catching unrelated bugs.
"""
from __future__ import annotations


class StreamSluError(Exception):
    """Base class for all streamslu errors."""


class ShapeError(StreamSluError, ValueError):
    """Array dimensions do not fit the operation."""


class ConfigError(StreamSluError, ValueError):
    """Experiment, model or corpus configuration is invalid."""


class NoAlignmentError(StreamSluError):
    """CTC target cannot be aligned to the available frames."""

    def __init__(self, frames: int, required: int):
        super().__init__(f"no valid alignment: {frames} frames, target needs {required}")
        self.frames = frames
        self.required = required


class UnreachableTargetError(StreamSluError):
    """Every CTL emission path has probability zero."""

    def __init__(self, detail: str = ""):
        message = "unreachable target"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class InstanceTooLargeError(StreamSluError):
    """Brute-force oracle asked to enumerate too many paths."""

    def __init__(self, paths: int, limit: int):
        super().__init__(f"instance too large: {paths} paths exceeds limit {limit}")
        self.paths = paths
        self.limit = limit


class TapeError(StreamSluError):
    """Gradient requested against a tape that did not record the computation."""


class ContainerError(StreamSluError):
    """Binary feature or checkpoint container is malformed."""


class DigestMismatchError(StreamSluError):
    """Checkpoint was written for a different model configuration."""

    def __init__(self, expected: str, found: str):
        super().__init__(f"config digest mismatch: checkpoint {found[:12]}, config {expected[:12]}")
        self.expected = expected
        self.found = found


class SpeakerMismatchError(StreamSluError):
    """Two utterances from different speaker groups cannot be concatenated."""


class VerificationError(StreamSluError):
    """A verification suite failed."""

    def __init__(self, failing: list[str]):
        super().__init__("verification failed: " + ", ".join(failing))
        self.failing = failing
