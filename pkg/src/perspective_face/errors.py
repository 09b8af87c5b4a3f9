"""Exception types raised across the package."""


class FaceReconError(Exception):
    """Base class for all errors raised by this package."""


class InputError(FaceReconError, ValueError):
    """Bad user input (malformed files, wrong sizes, invalid ranges)."""


class ParseError(InputError):
    pass


class SizeMismatch(InputError):
    pass


class FrameMismatch(InputError):
    pass


class NotARotation(InputError):
    pass


class RangeInvalid(InputError):
    pass


class TooFewPoints(InputError):
    pass


class EmptyDataset(InputError):
    pass


class TopologyInvalid(InputError):
    def __init__(self, reason, index=None):
        self.reason = reason
        self.index = index
        msg = reason if index is None else f"{reason} (entry {index})"
        super().__init__(msg)


class MissingInstance(InputError):
    def __init__(self, instance_id):
        self.instance_id = instance_id
        super().__init__(f"missing prediction for instance {instance_id!r}")


class NumericalError(FaceReconError, ArithmeticError):
    """A computation hit a numerically degenerate state."""


class BehindCamera(NumericalError):
    def __init__(self, index, depth=None):
        self.index = int(index)
        self.depth = depth
        super().__init__(f"point {self.index} has depth {depth!r} <= 1e-9")


class DegenerateEdge(NumericalError):
    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"predicted edge {self.index} has zero length")


class DegenerateConfiguration(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, step, details=""):
        self.step = step
        super().__init__(f"non-finite loss at step {step}" + (f": {details}" if details else ""))
