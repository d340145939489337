"""Exception hierarchy shared by all oramig modules."""


class OramigError(Exception):
    """Base class for every error raised by this package."""


class TaxonomyError(OramigError):
    pass


class DialectMismatch(OramigError):
    pass


class UnmappedClass(OramigError):
    def __init__(self, name):
        super().__init__(f"no mapping row for source class {name!r}")
        self.name = name


class UnterminatedLiteral(OramigError):
    def __init__(self, line, kind="string literal"):
        super().__init__(f"unterminated {kind} starting on line {line}")
        self.line = line
        self.kind = kind


class MissingChunk(OramigError):
    pass


class DuplicateChunk(OramigError):
    pass


class EmbedderUnavailable(OramigError):
    pass


class EmbedderMismatch(OramigError):
    pass


class StoreMissing(OramigError):
    def __init__(self, store):
        super().__init__(f"knowledge-base store {store!r} is missing")
        self.store = store


class UnboundPlaceholder(OramigError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name


class BackendFailure(OramigError):
    pass


class ValidatorUnavailable(OramigError):
    pass


class EmptyCounts(OramigError):
    pass


class InvalidWeights(OramigError):
    pass


class SingularityError(OramigError):
    pass


class MissingCounterpart(OramigError):
    pass
