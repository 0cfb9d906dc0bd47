from typing import Optional


class CoarseKitError(Exception):
    """Root of every toolkit error; `exit_code` is what the CLI returns for it."""

    exit_code = 1


class InstanceFormatError(CoarseKitError):
    exit_code = 1


class PreconditionError(CoarseKitError):
    exit_code = 2


class InvalidMetricError(PreconditionError):
    pass


class DisconnectedGraphError(PreconditionError):
    pass


class ImproperCoverError(PreconditionError):
    pass


class DegenerateCoverError(PreconditionError):
    pass


class NormPreservationError(PreconditionError):
    pass


class UnboundedProfileError(PreconditionError):
    pass


class ExtensionStageError(PreconditionError):
    def __init__(self, stage: str, index: Optional[int], cause: Exception):
        self.stage = stage
        self.index = index
        self.cause = cause
        where = stage if index is None else f"{stage}[{index}]"
        super().__init__(f"extension stage {where} failed: {cause}")


class CertificateViolation(CoarseKitError):
    exit_code = 3

    def __init__(self, name: str, worst_excess: float, detail: str = ""):
        self.name = name
        self.worst_excess = worst_excess
        msg = f"certificate '{name}' violated (worst excess {worst_excess:.3e})"
        super().__init__(f"{msg}: {detail}" if detail else msg)
