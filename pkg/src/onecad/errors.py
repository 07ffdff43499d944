"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the CLI uses when the error escapes a command.
"""


class OneCadError(Exception):
    code = "ONECAD"
    exit_status = 1


class ConfigError(OneCadError, ValueError):
    code = "CONFIG"
    exit_status = 2


class ConfigMismatch(ConfigError):
    code = "CONFIG_MISMATCH"


class DataError(OneCadError, ValueError):
    code = "DATA"
    exit_status = 3


class BadMagic(DataError):
    code = "BAD_MAGIC"


class TruncatedFile(DataError):
    code = "TRUNCATED_FILE"


class CountMismatch(DataError):
    code = "COUNT_MISMATCH"


class BadImage(DataError):
    code = "BAD_IMAGE"


class UnknownGlyph(OneCadError, ValueError):
    code = "UNKNOWN_GLYPH"
    exit_status = 4

    def __init__(self, character):
        super().__init__(f"character {character!r} is not in the font alphabet")
        self.character = character


class LabelTooLong(OneCadError, ValueError):
    code = "LABEL_TOO_LONG"
    exit_status = 4


class ShapeMismatch(OneCadError, ValueError):
    code = "SHAPE_MISMATCH"
    exit_status = 5


class DimensionMismatch(ShapeMismatch):
    code = "DIMENSION_MISMATCH"


class BadStripShape(ShapeMismatch):
    code = "BAD_STRIP_SHAPE"


class CheckpointError(OneCadError, ValueError):
    code = "CHECKPOINT"
    exit_status = 6


class InvalidFactor(OneCadError, ValueError):
    code = "INVALID_FACTOR"
    exit_status = 8


class NonScalarBackward(OneCadError, RuntimeError):
    code = "NON_SCALAR_BACKWARD"
    exit_status = 8


class EmptyMask(OneCadError, ValueError):
    code = "EMPTY_MASK"
    exit_status = 8


class MissingGrad(OneCadError, RuntimeError):
    code = "MISSING_GRAD"
    exit_status = 8


class StepOutOfRange(OneCadError, ValueError):
    code = "STEP_OUT_OF_RANGE"
    exit_status = 8


class EmptyLabel(OneCadError, ValueError):
    code = "EMPTY_LABEL"
    exit_status = 8
