"""Operator-facing service: serialized live state, event log, HTTP API."""

from .state import ActionRejectedError, Event, OperatorAction, StateStore, replay_log
from .app import create_app

__all__ = [
    "ActionRejectedError",
    "Event",
    "OperatorAction",
    "StateStore",
    "replay_log",
    "create_app",
]
