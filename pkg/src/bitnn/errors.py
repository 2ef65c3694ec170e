"""Exception taxonomy shared across the toolkit."""


class BitnnError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BitnnError):
    """Invalid configuration: bad dimensions, hyperparameters, or layer specs."""


class DataError(BitnnError):
    """Invalid data values: out-of-range labels, non-code matrix elements."""


class FormatError(BitnnError):
    """Malformed file: bad magic, version, CRC, padding, or truncation."""


class TrainingDiverged(BitnnError):
    """Training produced a non-finite loss. Carries the failing location."""

    def __init__(self, message: str, epoch: int, batch_index: int, layer: int | None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index
        self.layer = layer
