"""Training and dump tooling that produces the segmentation engine's inputs:
portable graph files, FMAP feature files, and RLE proposal files."""

__version__ = "0.1.0"


class DistillError(Exception):
    pass
