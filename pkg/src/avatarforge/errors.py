"""Exception hierarchy shared by every avatarforge module."""


class AvatarForgeError(Exception):
    """Base class for all library errors."""


class MeshError(AvatarForgeError, ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class NonManifoldEdgeError(MeshError):
    def __init__(self, edge, count):
        self.edge = tuple(int(v) for v in edge)
        self.count = int(count)
        super().__init__(
            f"edge {self.edge} is shared by {self.count} faces (at most 2 allowed)"
        )


class UnknownGroupError(MeshError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DimensionMismatchError(AvatarForgeError, ValueError):
    pass


class ModelFormatError(AvatarForgeError, ValueError):
    pass


class DegenerateSpreadError(AvatarForgeError, ValueError):
    """Raised when the z-spread of a point set is zero."""


class AlignmentNotConvergedError(AvatarForgeError, RuntimeError):
    """Alignment used up its iteration budget with an error still >= tol.

    The partially aligned result is kept on the exception so callers can
    report it.
    """

    def __init__(self, message, result):
        self.result = result
        super().__init__(message)


class EmptyLoopError(AvatarForgeError, ValueError):
    pass


class LoopsInterpenetrateError(AvatarForgeError, ValueError):
    pass


class StitchError(AvatarForgeError, RuntimeError):
    pass


class MissingJointError(AvatarForgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyMaskError(AvatarForgeError, ValueError):
    pass


class UVRangeError(AvatarForgeError, ValueError):
    pass


class RankDeficientError(AvatarForgeError, ValueError):
    pass


class GarmentError(AvatarForgeError, ValueError):
    pass
