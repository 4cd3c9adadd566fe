"""Exception types shared across the package."""


class LoRaINError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LoRaINError, ValueError):
    """An argument lies outside its valid domain."""


class LengthError(LoRaINError, ValueError):
    """A buffer or waveform has the wrong length."""


class RangeError(LoRaINError, IndexError):
    """A requested window falls outside the available data."""


class ConfigError(LoRaINError, ValueError):
    """A scenario or radio configuration is malformed.

    ``path`` names the offending field, e.g. ``"link.capture_threshold_db"``.
    """

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class IntegrityError(LoRaINError):
    """A frame failed its MIC check (corrupted or foreign frame)."""


class ProtocolViolation(LoRaINError, RuntimeError):
    """A state machine received an event that is impossible in its phase."""


class TraceIntegrityError(LoRaINError, ValueError):
    """A simulation trace is truncated or internally inconsistent."""


class DataError(LoRaINError, ValueError):
    """An aggregation input set is empty or malformed."""
