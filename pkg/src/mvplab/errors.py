"""Exception hierarchy shared by the library and the CLI exit-status mapping."""


class MvpLabError(Exception):
    """Base class for all library errors."""


class ValidationError(MvpLabError, ValueError):
    """Inputs violate a structural or parameter constraint (CLI exit status 2)."""


class DomainError(MvpLabError):
    """A well-formed request has no answer, e.g. no suboptimal actions (CLI exit status 3)."""


class NoGapsError(DomainError):
    def __init__(self, msg="no-gaps: the suboptimal set Z_sub is empty"):
        super().__init__(msg)


class UnreachableError(DomainError):
    pass


class EnumerationTooLarge(DomainError):
    pass
