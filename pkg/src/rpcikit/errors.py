"""Exception types shared across the toolkit.

The CLI maps :class:`InputError` to exit code 1 and OS-level I/O failures
to exit code 2, so library code should raise ``InputError`` (or a subclass)
for anything that is the caller's fault and let ``OSError`` propagate for
filesystem trouble.
"""


class InputError(ValueError):
    """Invalid argument, file content, or configuration supplied by the caller."""


class FormatError(InputError):
    """A volume file that cannot be interpreted (bad header, datatype, labels)."""
