"""Error types raised by the benchmark services.

All of them derive from ``ValueError`` so callers that only care about bad
input can keep catching that, while the CLI can render the structured form.
"""


class BenchmarkError(ValueError):
    """Base class for all benchmark errors."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self):
        """Structured representation used by the CLI error output."""
        data = {
            'success': False,
            'error': type(self).__name__,
            'message': self.message,
        }
        data.update(self.context)
        return data


class ConfigError(BenchmarkError):
    """Experiment configuration failed validation."""

    def __init__(self, message, errors=None):
        super().__init__(message, errors=errors or {})
        self.errors = errors or {}


class ParseError(BenchmarkError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        super().__init__(message, line=line)
        self.line = line


class MissingLabel(ParseError):
    """A record carries an empty label set."""


class UnknownLabel(ParseError):
    """A record names a label outside its language taxonomy."""


class DuplicateId(ParseError):
    """The same id occurs twice in one file."""


class DimMismatch(BenchmarkError):
    """A vector does not have the declared dimension."""

    def __init__(self, message, line=None, expected=None, actual=None):
        super().__init__(message, line=line, expected=expected, actual=actual)
        self.line = line
        self.expected = expected
        self.actual = actual


class EmptyVocabulary(BenchmarkError):
    """No token survived the document-frequency floor."""


class MissingEmbedding(BenchmarkError):
    """An embedding table has no vector for a sentence id."""

    def __init__(self, sentence_id):
        super().__init__(f'No embedding for sentence "{sentence_id}"', id=sentence_id)
        self.sentence_id = sentence_id


class PartnerError(BenchmarkError):
    """Contrastive pair sampling is impossible for some anchors."""

    kind = 'partner'

    def __init__(self, ids):
        ids = list(ids)
        preview = ', '.join(ids[:5]) + (' ...' if len(ids) > 5 else '')
        super().__init__(f'{len(ids)} sentence(s) have no {self.kind} partner: {preview}', ids=ids)
        self.ids = ids


class NoPositivePartner(PartnerError):
    kind = 'positive'


class NoNegativePartner(PartnerError):
    kind = 'negative'


class SingleClass(BenchmarkError):
    """Binary head training needs both classes."""


class NonFinite(BenchmarkError):
    """Inputs or optimisation state are not finite."""


class NoConvergence(BenchmarkError):
    """An iterative solver hit its iteration cap."""


class LengthMismatch(BenchmarkError):
    """Paired sequences differ in length."""


class MissingLabelScore(BenchmarkError):
    """Aggregation is missing a (language, label) score."""


class SeqTooLong(BenchmarkError):
    """Sequence length exceeds the encoder maximum."""


class WrongLanguageCount(BenchmarkError):
    """Cost aggregation needs exactly the three languages."""


class GridFailed(BenchmarkError):
    """Every grid point failed."""
