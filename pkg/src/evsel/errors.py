"""Exception types shared across the package.

Two failure families, mapped to process exit codes by the CLI:

* ``InputError`` (exit 1): the input could not be read or parsed at all —
  bad magic bytes, truncated files, malformed JSON, missing side files.
* ``InvariantError`` (exit 2): the input parsed but violates a documented
  invariant or numeric precondition — inconsistent token segmentation,
  an all-zero relevance map, a percentile outside [0, 100], and so on.
"""


class EvselError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(EvselError):
    """Unreadable or structurally malformed input."""

    exit_code = 1


class InvariantError(EvselError):
    """Well-formed input that violates a documented invariant."""

    exit_code = 2
