"""Exception hierarchy shared by services and command-line tools."""

from enum import Enum
from typing import NamedTuple


class HFUNetError(Exception):
    """Base error; the CLI maps it to a process exit code."""

    exit_code = 3
    code = "runtime_error"


class ConfigIssue(NamedTuple):
    """A single configuration problem with its source location."""

    line: int | None
    location: str
    message: str

    def __str__(self) -> str:
        """Render as 'line N: location: message'."""
        where = f"line {self.line}" if self.line is not None else "line ?"
        return f"{where}: {self.location}: {self.message}"


class ConfigError(HFUNetError):
    """Experiment configuration could not be parsed or validated."""

    exit_code = 2
    code = "config_error"

    def __init__(self, issues: list[ConfigIssue]) -> None:
        """Initialize with every issue found in one pass.

        Args:
            issues: All configuration issues
        """
        self.issues = issues
        super().__init__("; ".join(str(issue) for issue in issues))


class VolumeErrorCode(str, Enum):
    """Distinct failure codes for the volume file format."""

    BAD_MAGIC = "bad magic"
    BAD_DTYPE = "bad dtype"
    DIM_OVERFLOW = "dim overflow"
    TRUNCATED_HEADER = "truncated header"
    TRUNCATED_PAYLOAD = "truncated payload"
    TRAILING_DATA = "trailing data"


class VolumeFormatError(HFUNetError):
    """Volume file is malformed."""

    code = "volume_format_error"

    def __init__(self, error_code: VolumeErrorCode, detail: str) -> None:
        """Initialize with a format error code.

        Args:
            error_code: Which check failed
            detail: Human readable context
        """
        self.error_code = error_code
        super().__init__(f"{error_code.value}: {detail}")


class PhantomSpecError(HFUNetError, ValueError):
    """Phantom specification cannot be realised inside its volume."""


class GeometryError(HFUNetError, ValueError):
    """Volumes, labels or patches disagree in geometry."""


class ContourLabelError(HFUNetError, ValueError):
    """Contour extraction received invalid input."""


class TopologyError(HFUNetError, ValueError):
    """Network topology request is inconsistent."""


class CheckpointError(HFUNetError):
    """Checkpoint is unreadable or disagrees with the requested topology."""


class SurfaceError(HFUNetError, ValueError):
    """Surface distance is undefined for an empty mask."""


class LossValueError(HFUNetError, ValueError):
    """A loss component is NaN or infinite."""

    def __init__(self, component: str, value: float) -> None:
        """Initialize naming the offending component.

        Args:
            component: Loss component name
            value: Its non-finite value
        """
        self.component = component
        super().__init__(f"Loss component '{component}' is not finite ({value})")


class DivergenceError(HFUNetError):
    """Training diverged; the last good checkpoint was kept."""

    exit_code = 4
    code = "divergence"

    def __init__(self, message: str, checkpoint_path: str | None = None) -> None:
        """Initialize with the checkpoint saved before aborting.

        Args:
            message: What diverged
            checkpoint_path: Last good checkpoint, if one was written
        """
        self.checkpoint_path = checkpoint_path
        super().__init__(message)
