"""Exception hierarchy.

``ConfigError`` subclasses describe bad inputs (CLI exit code 2); everything
else deriving from ``VcltscError`` is a runtime failure (exit code 3).
"""


class VcltscError(Exception):
    pass


class ConfigError(VcltscError, ValueError):
    pass


# partition
class InvalidSpec(ConfigError):
    pass


class DegenerateDenominator(ConfigError):
    pass


class InfeasibleLayout(ConfigError):
    """The (d, l1, n) combination cannot yield positive, increasing cells."""


class NonMonotonicLayout(InfeasibleLayout):
    pass


class NonPositiveCell(InfeasibleLayout):
    pass


class LastCellInvalid(InfeasibleLayout):
    pass


class OutOfRange(VcltscError, IndexError):
    pass


# network / demand
class ParseError(ConfigError):
    pass


class TopologyError(ConfigError):
    pass


class DeadEnd(VcltscError):
    pass


# simulator
class ConsistencyError(VcltscError):
    pass


class InvalidPlan(ConfigError):
    pass


# neural nets / checkpoints
class ShapeMismatch(VcltscError, ValueError):
    pass


class NoForwardCache(VcltscError):
    pass


class NonFiniteGradient(VcltscError, FloatingPointError):
    pass


class ChecksumMismatch(VcltscError):
    pass


class ArchitectureMismatch(VcltscError):
    pass


# harness
class CheckpointMismatch(ConfigError):
    pass


class TransferIncompatible(CheckpointMismatch):
    pass


class MissingInput(ConfigError, FileNotFoundError):
    pass
