"""Exception hierarchy shared across the package."""


class NeutralyzeError(Exception):
    """Base class for every error raised by this package."""


class InvalidImage(NeutralyzeError, ValueError):
    pass


class InvalidSize(NeutralyzeError, ValueError):
    pass


class InvalidAge(NeutralyzeError, ValueError):
    pass


class InvalidRatios(NeutralyzeError, ValueError):
    pass


class DegenerateExpected(NeutralyzeError, ValueError):
    pass


class EmptySample(NeutralyzeError, ValueError):
    pass


class EmptyTable(NeutralyzeError, ValueError):
    pass


class InvalidAlpha(NeutralyzeError, ValueError):
    pass


class ShapeError(NeutralyzeError, ValueError):
    pass


class NumericalError(NeutralyzeError, ArithmeticError):
    pass


class EmptyDataset(NeutralyzeError, ValueError):
    pass


class TrainingDiverged(NeutralyzeError, RuntimeError):
    """Raised when a loss becomes non-finite.

    ``checkpoint`` holds the last state whose losses were all finite.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class FormatError(NeutralyzeError, ValueError):
    pass


class DegenerateLabels(NeutralyzeError, ValueError):
    pass


class EmptyGroup(NeutralyzeError, ValueError):
    pass


class FairnessUndefined(NeutralyzeError, ValueError):
    pass


class UndefinedAuc(NeutralyzeError, ValueError):
    pass


class UndefinedPrAuc(NeutralyzeError, ValueError):
    pass


class PatchTooLarge(NeutralyzeError, ValueError):
    pass


class UndefinedCorrelation(NeutralyzeError, ValueError):
    pass


class InvalidP(NeutralyzeError, ValueError):
    pass


class ResamplingExhausted(NeutralyzeError, RuntimeError):
    pass


class TooFewMethods(NeutralyzeError, ValueError):
    pass


class UnsupportedK(NeutralyzeError, ValueError):
    pass


class InvalidLayer(NeutralyzeError, ValueError):
    pass


class ConfigError(NeutralyzeError, ValueError):
    pass


class MissingArtifact(NeutralyzeError, FileNotFoundError):
    """An upstream artifact is absent; ``producer`` names the subcommand that makes it."""

    def __init__(self, message, producer=None):
        super().__init__(message)
        self.producer = producer
