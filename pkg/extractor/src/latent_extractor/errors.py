"""Exception hierarchy for the extraction pipeline.

Everything raised on bad inputs or bad state derives from ExtractorError so
the CLI can map library failures to a single exit code. Item-level problems
(an unreadable image, a sentence that tokenizes to nothing) are collected and
raised together as one ExtractionFailure: the run either produces a complete
output or none at all, and every failing item is named.
"""

from __future__ import annotations


class ExtractorError(Exception):
    """Base class for all extraction failures."""


class ArgumentError(ExtractorError):
    """Invalid argument combination or value."""


class BackboneError(ExtractorError):
    """The checkpoint directory could not be loaded."""


class FormatError(ExtractorError):
    """A file on disk does not follow its declared layout."""


class ExtractionFailure(ExtractorError):
    """One or more inputs could not be processed.

    items holds (label, message) pairs, one per failing input, in input
    order. No output file is written when this is raised.
    """

    def __init__(self, items: list[tuple[str, str]]):
        self.items = list(items)
        lines = "; ".join(f"{label}: {message}" for label, message in self.items)
        super().__init__(f"{len(self.items)} input(s) failed: {lines}")
