"""Exception hierarchy shared by every stage of the fusion pipeline."""

from __future__ import annotations


class KpFusionError(Exception):
    """Base class for domain errors raised by kpfusion."""


class FormatError(KpFusionError, ValueError):
    """A file or in-memory record violates the expected layout."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidProfile(KpFusionError, ValueError):
    pass


class InvalidConfig(KpFusionError, ValueError):
    pass


class TooFewPoints(KpFusionError):
    pass


class SingletonCluster(KpFusionError):
    pass


class EmptyCluster(KpFusionError):
    pass


class TooFewVertices(KpFusionError):
    pass


class SizeMismatch(KpFusionError):
    pass


class ClusterCountMismatch(KpFusionError):
    pass


class RaggedClusters(KpFusionError):
    pass


class DimensionMismatch(KpFusionError):
    pass


class EmptyGallery(KpFusionError):
    pass


class BadK(KpFusionError):
    pass


class EmptyTrials(KpFusionError):
    pass


class MismatchedGrids(KpFusionError):
    pass


class StageError(KpFusionError):
    """Wraps an error with the pipeline stage (and cluster) where it happened."""

    def __init__(self, stage: str, cause: Exception, cluster: int | None = None):
        self.stage = stage
        self.cluster = cluster
        self.cause = cause
        where = stage if cluster is None else f"{stage} (cluster {cluster})"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
