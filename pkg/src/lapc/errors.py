"""Exception hierarchy shared by every stage of the translation pipeline."""


class LapError(Exception):
    """Base class for all translator errors."""


class TypeError(LapError):  # noqa: A001 - deliberate, always used as errors.TypeError
    """A term failed to typecheck; carries the failing subterm and rule."""

    def __init__(self, message, subterm=None, rule=None):
        super().__init__(message)
        self.subterm = subterm
        self.rule = rule


class ReductionBudgetError(LapError):
    """The reduction step budget was exhausted."""


class BudgetWarning(UserWarning):
    """isDefEq gave up because the step budget ran out (answer may be incomplete)."""


class NotQuasiMono(LapError):
    """A term fell outside the quasi-monomorphic fragment during abstraction."""

    def __init__(self, message, subterm=None, clause=None):
        super().__init__(message)
        self.subterm = subterm
        self.clause = clause


class SubstitutionIllFormed(LapError):
    """The extracted substitution triple violates its well-formedness condition."""


class CyclicUnfold(LapError):
    """The unfold instruction contains a cyclic dependency."""

    def __init__(self, cycle):
        super().__init__("cyclic unfold instruction: " + " -> ".join(cycle))
        self.cycle = list(cycle)


class UnknownConstant(LapError):
    """A referenced constant is not declared in the environment."""


class DuplicateName(LapError):
    """A declaration reuses a name that is already in scope."""


class UnsupportedInductive(LapError):
    """Nested, mutual, or dependently-indexed inductive declarations are rejected."""


class UnsupportedType(LapError):
    """Universe lifting was asked to lift a type outside the arrow/atom fragment."""


class LevelTooLow(LapError):
    """The lifting level does not dominate every universe level in the input."""


class ParseError(LapError):
    """Surface syntax error with a byte-precise location."""

    def __init__(self, line, column, expected, found=None):
        msg = f"{line}:{column}: expected {expected}"
        if found is not None:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found


class UnsupportedInEmission(LapError):
    """The emission target cannot express part of the plan."""


class ConfigError(LapError):
    """Bad CLI/pipeline configuration (missing solver, unknown preset, ...)."""
