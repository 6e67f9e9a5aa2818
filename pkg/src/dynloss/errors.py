"""Error taxonomy shared by the engine, service, and CLI exit codes."""


class UsageError(Exception):
    """Bad flags, config keys, or request fields. CLI exit code 1."""


class DataError(Exception):
    """Unreadable or invalid data files and datasets. CLI exit code 2."""


class DivergedError(Exception):
    """Training aborted on a non-finite or exploding loss. CLI exit code 3."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
