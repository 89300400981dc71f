"""Exception types shared across the pipeline.

Argument-contract violations raise plain ValueError; the classes here cover
failure modes a caller may want to catch individually.
"""


class HemopipeError(Exception):
    """Base class for pipeline-specific errors."""


class EmptyDatasetError(HemopipeError):
    """A dataset root contained zero decodable images."""


class UnlabeledSampleError(HemopipeError):
    """An image filename does not encode a class label."""


class DuplicateSampleError(HemopipeError):
    """The same path appears more than once across manifests."""


class InsufficientClassError(HemopipeError):
    """A class has too few samples to be split into train/val/test."""


class ManifestParseError(HemopipeError):
    """A manifest file is malformed; message carries the line number."""


class ShapeError(HemopipeError):
    """Image/mask/batch dimensions do not match the expected shape."""


class IntegrityError(HemopipeError):
    """A checkpoint or cached file failed its checksum verification."""


class SpecMismatchError(HemopipeError):
    """A checkpoint was produced for a different backbone spec."""


class DivergenceError(HemopipeError):
    """Training loss became non-finite; the last checkpoint is retained."""


class ConfigError(HemopipeError):
    """An experiment config file is invalid; message names the key."""


class MissingDependencyError(HemopipeError):
    """An optional backbone provider package is not installed."""
