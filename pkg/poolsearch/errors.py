from __future__ import annotations
from typing import Optional


class SearchError(Exception):
    """Base class for every error raised by poolsearch."""


class AllWeightsZero(SearchError):
    pass


class SubsampleTooLarge(SearchError):
    pass


class InvalidLength(SearchError):
    pass


class BudgetMismatch(SearchError):
    pass


class NoTerminalTrace(SearchError):
    pass


class ConstructionFailed(SearchError):
    pass


class EnvTooLarge(SearchError):
    pass


class MissingMetrics(SearchError):
    pass


class ConfigError(SearchError):
    pass


# ------------------------------- Backends ------------------------------------
class BackendError(SearchError):
    retryable = True


class BackendTimeout(BackendError):
    pass


class ServiceError(BackendError):
    def __init__(self, status: int, detail: Optional[str] = None):
        self.status = status
        self.detail = detail
        super().__init__(f"service returned HTTP {status}" + (f": {detail}" if detail else ""))

    @property
    def retryable(self) -> bool:  # type: ignore[override]
        return self.status == 429 or self.status >= 500


class MalformedResponse(BackendError):
    pass
