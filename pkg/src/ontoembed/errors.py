"""Exception hierarchy shared across the package."""


class OntoEmbedError(Exception):
    pass


class DataError(OntoEmbedError):
    """Input data is malformed or inconsistent. The CLI maps these to exit code 2."""


class ParseError(DataError):
    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


class CycleError(DataError):
    pass


class MultiParentError(DataError):
    pass


class OrphanError(DataError):
    pass


class UnknownNode(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownCode(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DimensionMismatch(OntoEmbedError, ValueError):
    pass


class EmptyDomain(OntoEmbedError, ValueError):
    """A quantifier was asked to aggregate over zero instances."""


class EmptyKnowledgeBase(OntoEmbedError, ValueError):
    pass


class UndefinedMetric(OntoEmbedError, ValueError):
    pass


class DivergenceError(OntoEmbedError, FloatingPointError):
    pass


class ConfigError(OntoEmbedError, ValueError):
    pass
