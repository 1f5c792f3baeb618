"""Exception taxonomy shared by every module.

Every error carries a machine-parseable ``kind`` (used by the CLI for its
``error[kind]:`` prefix) and an ``exit_code`` in {1: usage, 2: data/format,
3: contract violation}.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""

    kind = "engine"
    exit_code = 3


class ParameterError(EngineError):
    """A caller-supplied value is outside its documented range."""

    kind = "parameter"
    exit_code = 1


class LabelError(ParameterError):
    kind = "label"


class SplitError(ParameterError):
    """A dataset split would leave one partition empty."""

    kind = "split"


class OracleSizeError(ParameterError):
    """A brute-force oracle instance exceeds its enforced size bound."""

    kind = "oracle-size"


class UndefinedAucError(ParameterError):
    """ROC-AUC requested with only one class present."""

    kind = "undefined-auc"


class QuantSchemeError(ParameterError):
    """A tensor was routed to a quantization scheme it does not fit."""

    kind = "scheme"


class ShapeError(EngineError):
    kind = "shape"
    exit_code = 3


class ContractError(EngineError):
    """A numeric invariant (finiteness, normalization) was violated."""

    kind = "contract"
    exit_code = 3


class InfeasibleTargetError(EngineError):
    """A CTC target cannot be emitted in the available frames."""

    kind = "infeasible-target"
    exit_code = 3


class NestingError(EngineError):
    kind = "unsupported-nesting"
    exit_code = 3


class InputTooShortError(EngineError):
    """Input audio is shorter than the conv stack's receptive field."""

    kind = "input-too-short"
    exit_code = 2


class FormatError(EngineError):
    """A file violates its declared format; message names the field."""

    kind = "format"
    exit_code = 2


class ParseError(FormatError):
    kind = "parse"


class IoError(EngineError):
    kind = "io"
    exit_code = 2


class ConfigError(EngineError):
    kind = "config"
    exit_code = 2


class CheckpointError(EngineError):
    kind = "checkpoint"
    exit_code = 2


class MagicError(CheckpointError):
    kind = "magic"


class VersionError(CheckpointError):
    kind = "version"


class CrcError(CheckpointError):
    kind = "crc"
