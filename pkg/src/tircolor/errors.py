"""Exception hierarchy shared by every tircolor module."""


class TircolorError(Exception):
    """Base class for all library errors."""


class ConfigError(TircolorError, ValueError):
    pass


class InvalidSpec(ConfigError):
    """An architecture or loss specification with out-of-range fields."""


class ShapeError(TircolorError, ValueError):
    pass


# -- data ingestion ---------------------------------------------------------

class DatasetError(TircolorError):
    pass


class EmptyDataset(DatasetError):
    pass


class PairingAmbiguity(DatasetError):
    pass


class DecodeError(DatasetError):
    pass


class ChannelMismatch(DatasetError):
    pass


# -- models / metrics ---------------------------------------------------------

class ConditionMissing(TircolorError, ValueError):
    pass


class ImageTooSmall(TircolorError, ValueError):
    pass


class DegenerateInput(TircolorError, ValueError):
    pass


class MissingCounterpart(DatasetError):
    pass


# -- training -------------------------------------------------------------------

class NonFiniteLoss(TircolorError, RuntimeError):
    def __init__(self, message, iteration=None, dump_path=None):
        super().__init__(message)
        self.iteration = iteration
        self.dump_path = dump_path


class CheckpointCorrupt(TircolorError):
    pass


class FingerprintMismatch(TircolorError):
    pass
