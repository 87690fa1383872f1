"""VerbClass - base interface for all slu verbs."""
from __future__ import annotations

import logging
from typing import Any, Mapping

from streamslu.kernel.errors import StreamSluError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 2


class VerbClass:
    """Base class for verbs.

    Subclasses implement ``run(options)``; ``execute`` turns package errors into a
    printed ``❌`` line and a non-zero exit code.
    """

    name = "verb"

    def execute(self, options: Mapping[str, Any]) -> int:
        try:
            return self.run(options)
        except StreamSluError as exc:
            print(f"❌ {self.name}: {exc}")
            logger.debug("%s failed", self.name, exc_info=True)
            return EXIT_ERROR

    def run(self, options: Mapping[str, Any]) -> int:
        raise NotImplementedError("Verbs must implement run(options)")
