"""Exception types shared across the package."""


class RfcnetError(Exception):
    """Base class for all rfcnet errors."""


# --- IDX parsing ---

class IdxError(RfcnetError):
    """Malformed IDX byte stream."""


class BadMagic(IdxError):
    """Magic number is not a known IDX image/label magic."""


class Truncated(IdxError):
    """Stream ends before the declared payload."""


class UnsupportedDtype(IdxError):
    """IDX dtype code other than unsigned byte (0x08)."""


class CountMismatch(IdxError):
    """Paired image/label files declare different item counts."""


class SplitNotLoaded(RfcnetError):
    """Glyph sampling requested for a split that was never loaded."""


# --- scene simulation ---

class PlacementFailure(RfcnetError):
    """Rejection sampling could not place an object (over-dense config)."""


# --- dataset store ---

class ChecksumError(RfcnetError):
    """A shard's content does not match its manifest checksum."""


class UnknownSplit(RfcnetError):
    """Split name not present in the manifest."""


# --- networks ---

class ShapeMismatch(RfcnetError):
    """Tensor shape violates a module's declared contract."""


class StateCountMismatch(RfcnetError):
    """Recurrent state list length does not match the layer count."""


class BadAlpha(RfcnetError):
    """Encoder-decoder width multiplier yields zero hidden channels."""


class BadSpec(RfcnetError):
    """Model specification violates an invariant."""


class WrongSequenceLength(RfcnetError):
    """Temporal model fed a clip of the wrong length."""


# --- training / evaluation ---

class LabelOutOfRange(RfcnetError):
    """Label map contains a class id outside 0..n_classes-1."""


class DataMissing(RfcnetError):
    """Requested dataset directory or manifest does not exist."""


class NonFiniteLoss(RfcnetError):
    """Training loss became NaN/Inf; carries the offending batch index."""

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


# --- configuration / CLI ---

class ConfigError(RfcnetError):
    """Experiment config file is invalid (unknown key, bad value, ...)."""


class UsageError(RfcnetError):
    """CLI invoked with invalid arguments."""
