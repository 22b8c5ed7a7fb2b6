"""Exception types raised by the simulator."""


class SimError(Exception):
    """Base class for simulator errors."""


class ConfigInvalid(SimError):
    """A configuration failed validation.

    ``problems`` maps each offending field (dotted path) to a message.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = {"config": problems}
        self.problems = dict(problems)
        detail = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid configuration: {detail}")


class SchedulingInPast(SimError):
    pass


class PlacementFailed(SimError):
    pass


class InvalidDistance(SimError):
    pass


class UnknownLink(SimError):
    pass


class EmptyQueue(SimError):
    pass


class HopOverflow(SimError):
    pass


class MalformedRank(SimError):
    pass


class NoViableParent(SimError):
    pass


class NoDeliveries(SimError):
    pass


class IoFailure(SimError):
    pass
