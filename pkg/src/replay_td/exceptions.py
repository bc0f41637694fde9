"""Exception hierarchy.

Input and hypothesis errors derive from :class:`InputError` so the CLI can map
them to exit code 2 in one place.
"""


class ReplayTDError(Exception):
    """Base class for every error raised by the package."""


class InputError(ReplayTDError, ValueError):
    """Invalid user input (malformed MDP, policy, config, ...)."""


class InvalidMDP(InputError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionMismatch(InputError):
    pass


class ChainNotErgodic(InputError):
    pass


class SingularSystem(ReplayTDError):
    pass


class NonConvergence(ReplayTDError):
    pass


class MixingCapExceeded(ReplayTDError):
    pass


class EmptyBuffer(ReplayTDError):
    pass


class EmptyBatch(ReplayTDError):
    pass


class HypothesisViolated(InputError):
    pass


class NonStationaryStart(HypothesisViolated):
    pass


class GenerationFailed(ReplayTDError):
    pass
