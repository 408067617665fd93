"""Exception hierarchy shared by every flowturbo module."""


class FlowTurboError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(FlowTurboError, ValueError):
    pass


class DomainError(FlowTurboError, ValueError):
    pass


class SingularityError(DomainError):
    """Raised where a quantity genuinely diverges (e.g. the loss weight at alpha=0)."""


class ConditionIndexError(FlowTurboError, IndexError):
    pass


class StateError(FlowTurboError, RuntimeError):
    """A gradient tape was used against a net it does not belong to."""


class CheckpointError(FlowTurboError, ValueError):
    pass


class ParameterBudgetError(FlowTurboError, ValueError):
    pass


class TrainingError(FlowTurboError, RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class SequencingError(FlowTurboError, RuntimeError):
    """A block that needs the velocity cache ran before anything populated it."""


class DegenerateInputError(FlowTurboError, ValueError):
    pass


class PlanParseError(FlowTurboError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class PlanValidationError(FlowTurboError, ValueError):
    def __init__(self, message: str, index: int | None = None):
        where = f" (block {index})" if index is not None else ""
        super().__init__(message + where)
        self.index = index
