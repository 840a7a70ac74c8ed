"""Exception types shared across the package."""


class LightSqError(Exception):
    """Base class for all package errors."""


class EmptyMesh(LightSqError):
    pass


class NonWatertightMesh(LightSqError):
    """Mesh has open or over-shared edges; parity signing may be unreliable."""


class MalformedFile(LightSqError):
    pass


class ResolutionMismatch(MalformedFile):
    pass


class EmptyNeighborhood(LightSqError):
    """No interior voxel inside the initial fitting neighborhood."""


class DegenerateWeights(LightSqError):
    pass


class NotAdjacent(LightSqError):
    pass


class UnknownPrimitive(LightSqError):
    pass


class DegenerateRegion(LightSqError):
    """Multiscale resampling recovered no interior voxels."""


class EmptyUnion(LightSqError):
    """No primitive covers any voxel of the evaluation lattice."""
