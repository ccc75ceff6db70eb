"""
Exception and warning types shared by every `sensorimotor` module.
"""

from collections.abc import Callable
from typing import Any


class SensorimotorError(Exception):
    """base class for all sensorimotor errors"""

    pass


class ConfigError(SensorimotorError, ValueError):
    """invalid parameters or experiment configuration"""

    pass


class WorkspaceRejectionError(ConfigError):
    """exploration rejects (almost) every draw: the working space is mis-sized"""

    def __init__(self, msg: str, draws: int = 0, accepted: int = 0) -> None:
        super().__init__(msg)
        self.draws = draws
        self.accepted = accepted


class ArtifactError(SensorimotorError, FileNotFoundError):
    """missing or unreadable run artifact"""

    pass


class DegenerateGeometryError(SensorimotorError, ValueError):
    """a light source coincides with a lens or a sensor"""

    pass


class NumericalError(SensorimotorError, ArithmeticError):
    pass


class SingularityError(NumericalError):
    """Jacobian kernel is not one-dimensional at this configuration"""

    def __init__(self, msg: str, singular_values: Any = None) -> None:
        super().__init__(msg)
        self.singular_values = singular_values


class SplitManifoldError(NumericalError):
    """retina closer to the base than one segment: the kernel loop splits in two"""

    pass


class NonClosureError(NumericalError):
    """continuation hit `max_steps` without returning to its seed"""

    def __init__(self, msg: str, steps: int = 0, gap: float = float("nan")) -> None:
        super().__init__(msg)
        self.steps = steps
        self.gap = gap


class ExplorationError(NumericalError):
    """numerical failures during exploration exceeded the retry budget"""

    pass


class MetricError(SensorimotorError, ValueError):
    def __init__(self, msg: str, pair: tuple[int, int] | None = None) -> None:
        self.detail = msg
        if pair is not None:
            msg = f"pair {pair}: {msg}"
        super().__init__(msg)
        self.pair = pair

    def __reduce__(self) -> tuple:
        return (type(self), (self.detail, self.pair))


class ProbeFamilyError(SensorimotorError, LookupError):
    pass


class SensorimotorWarning(Warning):
    """base class for all sensorimotor warnings.

    Used for conditions that do not stop a run, such as an unreachable
    working space or a diagnostic that does not apply to its input.
    """

    def __init__(
        self,
        msg: str,
        fp_write: Callable[[str], None] | None = None,
        *args: Any,
        **kwargs: Any,
    ) -> None:
        if fp_write is not None:
            fp_write("\n" + self.__class__.__name__ + ": " + str(msg).rstrip() + "\n")
        else:
            super().__init__(msg, *args, **kwargs)
