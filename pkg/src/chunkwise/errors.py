"""Exception hierarchy shared by every chunkwise module."""


class ChunkwiseError(Exception):
    pass


# array structure
class StructureMismatch(ChunkwiseError, ValueError):
    pass


class LengthMismatch(ChunkwiseError, ValueError):
    pass


class TypeMismatch(ChunkwiseError, TypeError):
    pass


class CountMismatch(ChunkwiseError, ValueError):
    pass


class NegativeCount(ChunkwiseError, ValueError):
    pass


class MissingDefault(ChunkwiseError, ValueError):
    pass


class IndexOutOfBounds(ChunkwiseError, IndexError):
    def __init__(self, event, index, count):
        self.event = event
        self.index = index
        self.count = count
        super().__init__(
            f"index {index} out of bounds for event {event} with {count} elements"
        )


class DivisionByZero(ChunkwiseError, ZeroDivisionError):
    pass


# tables and collections
class DuplicateName(ChunkwiseError, ValueError):
    pass


class InvalidName(ChunkwiseError, ValueError):
    pass


class EmptyFieldSet(ChunkwiseError, ValueError):
    pass


# histograms
class DuplicateAxisName(ChunkwiseError, ValueError):
    pass


class EmptyAxisList(ChunkwiseError, ValueError):
    pass


class IncompatibleAxes(ChunkwiseError, ValueError):
    pass


class UnknownAxis(ChunkwiseError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class MalformedPayload(ChunkwiseError, ValueError):
    def __init__(self, message, field=None, position=None):
        self.field = field
        self.position = position
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if position is not None:
            where.append(f"position {position}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


# accumulators and lookups
class ShapeMismatch(ChunkwiseError, ValueError):
    def __init__(self, message, path=""):
        self.path = path
        if path:
            message = f"{message} at path {path!r}"
        super().__init__(message)


class NonMonotonicEdges(ChunkwiseError, ValueError):
    pass


class NaNInput(ChunkwiseError, ValueError):
    def __init__(self, dim, position):
        self.dim = dim
        self.position = position
        super().__init__(f"NaN input in dimension {dim!r} at position {position}")


# file format
class SchemaMismatch(ChunkwiseError, ValueError):
    pass


class BadMagic(ChunkwiseError, ValueError):
    pass


class UnsupportedVersion(ChunkwiseError, ValueError):
    pass


class MalformedHeader(ChunkwiseError, ValueError):
    pass


class UnknownColumn(ChunkwiseError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class RangeOutOfBounds(ChunkwiseError, IndexError):
    pass


# cache and engine
class CacheCorrupt(ChunkwiseError):
    pass


class ProcessorError(ChunkwiseError):
    def __init__(self, chunk_index, message):
        self.chunk_index = chunk_index
        self.message = message
        super().__init__(f"chunk {chunk_index}: {message}")

    def __reduce__(self):
        return (type(self), (self.chunk_index, self.message))
