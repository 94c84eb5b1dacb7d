"""Exception hierarchy.  Each class carries the CLI exit code and category tag."""


class DocNmtError(Exception):
    exit_code = 1
    category = "internal"


class ContractError(DocNmtError):
    """An operation was called outside its preconditions."""
    category = "contract"


class DimensionError(DocNmtError, ValueError):
    category = "dimension"


class NumericError(DocNmtError, ArithmeticError):
    category = "numeric"


class MissingFileError(DocNmtError, FileNotFoundError):
    exit_code = 3
    category = "missing-file"


class IncompatibilityError(DocNmtError):
    """Vocabulary/embedding hashes disagree between pipeline artifacts."""
    exit_code = 4
    category = "hash-mismatch"


class ConfigError(DocNmtError):
    exit_code = 5
    category = "config"


class CorpusError(DocNmtError):
    """Malformed corpus, boundary sidecar, or merges file."""
    exit_code = 6
    category = "corpus"


class OversizeSentenceError(CorpusError):
    category = "oversize-sentence"


class EmptyDocumentError(CorpusError):
    category = "empty-document"


class UnsupportedMethodError(ConfigError):
    category = "unsupported-method"


class DivergenceError(DocNmtError):
    exit_code = 7
    category = "divergence"


class LengthError(DocNmtError):
    category = "length"


class MissingContextError(DocNmtError):
    exit_code = 8
    category = "missing-context"
