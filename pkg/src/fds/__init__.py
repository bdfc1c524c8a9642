"""Few-shot defect segmentation engine.

Segments a defect class in query images from one or a few annotated support
images, by matching pre-trained dense features against foreground/background
prototypes and refining the result with zero-shot mask proposals.
"""

__version__ = "0.1.0"


class FdsError(Exception):
    """Base class for engine errors."""


class InputError(FdsError):
    """Bad input data or configuration (CLI exit code 2)."""


class BenchmarkError(FdsError):
    """Benchmark-level failure (CLI exit code 1)."""
