"""Exception hierarchy.

Everything raised on purpose by stomakit derives from :class:`StomakitError`
and from :class:`ValueError`, so callers that only care about bad values can
catch the builtin. The CLI maps :class:`InputError` to exit code 2 and
:class:`ComputationError` to exit code 3.
"""


class StomakitError(ValueError):
    pass


class InputError(StomakitError):
    """Input could not be parsed or violates a structural precondition."""


class ComputationError(StomakitError):
    """Inputs were well formed but the requested quantity is undefined."""


# annotation / detection parsing
class MalformedXml(InputError):
    pass


class MalformedJson(InputError):
    pass


class MissingField(InputError):
    pass


class UnknownLabel(InputError):
    pass


class NonPositiveExtent(InputError):
    pass


class ScoreOutOfRange(InputError):
    pass


class CenterOutOfBounds(InputError):
    pass


# array shapes and parameters
class ShapeMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class WeightOutOfRange(InputError):
    pass


class BadParams(InputError):
    pass


class ImageTooSmall(InputError):
    pass


# undefined results
class NoGroundTruth(ComputationError):
    pass


class AllClassesSkipped(ComputationError):
    pass


class DegenerateSeries(ComputationError):
    pass


class NonPositiveReference(ComputationError):
    pass


class SampleTooSmall(ComputationError):
    pass


class NonPositiveInput(ComputationError):
    pass


class NoStomata(ComputationError):
    pass


class DegenerateAlpha(ComputationError):
    pass


class PackingInfeasible(ComputationError):
    pass
