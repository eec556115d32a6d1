"""Exception hierarchy shared by all ppcc modules."""


class PPCCError(Exception):
    """Base class for every error raised by ppcc."""


class ModelError(PPCCError, ValueError):
    """Malformed or invalid process model."""


class UnsafeNetError(ModelError):
    """A reachable marking would put two tokens in one place."""


class UnfoldingLimitError(ModelError):
    """The unfolding grew past its event limit."""


class CapExceededError(ModelError):
    """Too many linearizations for the configured cap."""


class LabelMismatchError(PPCCError, ValueError):
    """Model and log label sets differ."""

    def __init__(self, difference):
        self.difference = frozenset(difference)
        super().__init__(
            "model and log labels differ: " + ", ".join(sorted(self.difference)))


class UnknownLabelError(PPCCError, KeyError):
    """A label is not part of the alphabet."""

    def __str__(self):
        return f"unknown label {self.args[0]!r}"


class IndexFormatError(PPCCError, ValueError):
    """Bad text or bad persisted index."""


class BudgetExhausted(PPCCError):
    """More log moves were needed than the mismatch budget allows."""


class CryptoError(PPCCError):
    pass


class UndecodableError(CryptoError):
    """The plaintext is outside the decryption table."""


class ProtocolError(PPCCError):
    """Peer violated the message protocol."""


class TransportError(PPCCError, ConnectionError):
    """Network failure while talking to the peer."""
