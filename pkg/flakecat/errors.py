"""
Exception hierarchy of flakecat.

Every error carries an optional ``context`` dictionary which the experiment
harness fills with the hyperparameter setting and fold that failed.
"""


class FlakecatError(Exception):
    """Root of all errors raised by flakecat."""

    def __init__(self, message='', context=None):
        super().__init__(message)
        self.context = dict(context or {})

    def __str__(self):
        msg = super().__str__()
        if self.context:
            ctx = ', '.join('{}={}'.format(k, v) for k, v in sorted(self.context.items()))
            return '{} [{}]'.format(msg, ctx)
        return msg


# ---------------------------------------------------------------------------- #
#                                 Data errors                                  #
# ---------------------------------------------------------------------------- #


class DataError(FlakecatError, ValueError):
    """Input data is malformed or inconsistent."""


class MalformedRowError(DataError):
    def __init__(self, line_no, reason=''):
        super().__init__('malformed row at line {}: {}'.format(line_no, reason))
        self.line_no = line_no


class UnknownCategoryError(DataError):
    def __init__(self, line_no, text):
        super().__init__('unknown category {!r} at line {}'.format(text, line_no))
        self.line_no = line_no
        self.text = text


class MissingRowError(DataError):
    def __init__(self, test_id):
        super().__init__('no embedding row for test {!r}'.format(test_id))
        self.test_id = test_id


class DimensionMismatchError(DataError):
    def __init__(self, expected, got, line_no=None):
        where = '' if line_no is None else ' at line {}'.format(line_no)
        super().__init__('expected {} columns, got {}{}'.format(expected, got, where))
        self.expected = expected
        self.got = got
        self.line_no = line_no


class LengthMismatchError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class EmptyCorpusError(DataError):
    pass


class LexError(DataError):
    def __init__(self, line, col, reason):
        super().__init__('{} at {}:{}'.format(reason, line, col))
        self.line = line
        self.col = col


class MethodNotFoundError(DataError):
    def __init__(self, method_name):
        super().__init__('no declaration of method {!r}'.format(method_name))
        self.method_name = method_name


class UnbalancedBracesError(DataError):
    pass


class WrongDimensionalityError(DataError):
    pass


class DegenerateClassError(DataError):
    def __init__(self, label, count):
        super().__init__('class {} has {} sample(s), at least 2 required'.format(label, count))
        self.label = label


class TooFewSamplesError(DataError):
    def __init__(self, label, count):
        super().__init__('class {} has {} sample(s), cannot oversample'.format(label, count))
        self.label = label


class KTooLargeError(DataError):
    def __init__(self, k, n):
        super().__init__('k={} exceeds the {} training samples'.format(k, n))
        self.k = k
        self.n = n


class SingleClassError(DataError):
    pass


class ConfigOutOfBoundsError(DataError):
    def __init__(self, violations):
        super().__init__('configuration out of bounds: ' + '; '.join(violations))
        self.violations = list(violations)


class OutOfBoundsError(DataError):
    pass


class KLargerThanNError(DataError):
    def __init__(self, k, n):
        super().__init__('cannot split {} samples into {} folds'.format(n, k))


class PerplexityOutOfRangeError(DataError):
    pass


class ConfigError(DataError):
    pass


class ObjectiveError(FlakecatError):
    """An objective evaluation failed during tuning; ``point`` holds the parameters."""

    def __init__(self, point, cause):
        super().__init__('objective failed at {}: {}'.format(point, cause))
        self.point = point


# ---------------------------------------------------------------------------- #
#                                Source errors                                 #
# ---------------------------------------------------------------------------- #


class SourceError(FlakecatError):
    """Test source could not be obtained."""


class FetchError(SourceError):
    pass


class CacheMissError(SourceError):
    pass


class AmbiguousSourceError(SourceError):
    pass


# ---------------------------------------------------------------------------- #
#                               Numeric errors                                 #
# ---------------------------------------------------------------------------- #


class NumericError(FlakecatError, ArithmeticError):
    """A numerical procedure cannot produce a meaningful result."""


class ZeroInputEntropyError(NumericError):
    pass


class DisconnectedGraphError(NumericError):
    def __init__(self, n_components):
        super().__init__('neighbour graph has {} connected components'.format(n_components))
        self.n_components = n_components


class NoOrderedPairsError(NumericError):
    pass


class NumericalFailure(NumericError):
    pass
