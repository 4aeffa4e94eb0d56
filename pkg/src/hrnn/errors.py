"""Exception hierarchy shared across the package."""


class HrnnError(Exception):
    pass


class DimensionError(HrnnError, ValueError):
    """Tensor shapes do not line up."""


class VocabularyError(HrnnError, IndexError):
    pass


class ConfigError(HrnnError, ValueError):
    pass


class CorpusError(HrnnError, ValueError):
    pass


class TrainingError(HrnnError, RuntimeError):
    pass
