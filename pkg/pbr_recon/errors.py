"""Structured errors for the reconstruction pipeline

Every error a user can cause carries the process exit code the CLI returns.
"""
from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4


class PipelineError(Exception):
    """base class for user-facing pipeline errors"""
    exit_code = EXIT_IO

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(PipelineError):
    """invalid or unknown configuration keys"""
    exit_code = EXIT_CONFIG


class InputError(PipelineError):
    """missing or unreadable input file"""
    exit_code = EXIT_IO

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message}: {path}" if path else message)
        self.path = path


class MeshParseError(InputError):
    """wavefront parse failure, names the offending line"""

    def __init__(self, message: str, line: int, path: Optional[str] = None):
        where = f"{path}:{line}" if path else f"line {line}"
        PipelineError.__init__(self, f"{where}: {message}")
        self.line = line
        self.path = path


class MeshError(InputError):
    """mesh is structurally unusable (no UVs, empty)"""


class ProbeFormatError(InputError):
    """environment probe is not a Radiance RGBE file"""

    def __init__(self, magic: bytes, path: Optional[str] = None):
        PipelineError.__init__(
            self,
            f"unsupported probe format (magic bytes {magic!r}), expected '#?RADIANCE' or '#?RGBE'"
            + (f": {path}" if path else ""),
        )
        self.magic = magic
        self.path = path


class ProbeError(InputError):
    """probe decoded but cannot be used (zero energy)"""


class FrameSetError(InputError):
    """frame directory is inconsistent"""


class DivergenceError(PipelineError):
    """optimization produced a non-finite loss"""
    exit_code = EXIT_DIVERGENCE

    def __init__(self, iteration: int, value: float):
        super().__init__(f"loss became non-finite ({value}) at iteration {iteration}")
        self.iteration = iteration
        self.value = value
