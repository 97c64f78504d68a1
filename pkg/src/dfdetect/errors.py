"""Exception hierarchy shared by every stage of the pipeline."""


class DfdetectError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit code."""


class MissingFile(DfdetectError, FileNotFoundError):
    pass


class SchemaViolation(DfdetectError, ValueError):
    pass


class DuplicateVideoId(DfdetectError, ValueError):
    pass


class EmptyClass(DfdetectError, ValueError):
    pass


class UnbalancedCatalog(DfdetectError, ValueError):
    pass


class DegenerateSplit(DfdetectError, ValueError):
    pass


class UndecodableVideo(DfdetectError):
    pass


class ZeroFrames(DfdetectError):
    pass


class DetectorFailure(DfdetectError):
    pass


class DegenerateBox(DfdetectError, ValueError):
    pass


class DegenerateInput(DfdetectError, ValueError):
    pass


class IndexWriteFailure(DfdetectError, OSError):
    pass


class UnknownBackbone(DfdetectError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class WeightsUnavailable(DfdetectError):
    pass


class ShapeMismatch(DfdetectError, ValueError):
    pass


class CorruptCheckpoint(DfdetectError):
    pass


class BackboneMismatch(DfdetectError):
    pass


class LeakageDetected(DfdetectError):
    pass


class NonFiniteLoss(DfdetectError, FloatingPointError):
    pass


class EmptyPartition(DfdetectError, ValueError):
    pass


class EmptyTestSet(DfdetectError, ValueError):
    pass


class WriteFailure(DfdetectError, OSError):
    pass


class ConfigMismatch(DfdetectError):
    """Chained commands were run with different run configurations."""
