"""
Thread-safe bookkeeping for batch runs.
"""

import logging
import threading
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)


class RunLedger:
    """
    Outcomes, errors and the stage timeline of one batch run, shared by worker threads.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._state: Dict[str, Any] = self._empty_state()

    @staticmethod
    def _empty_state() -> Dict[str, Any]:
        return {"outcomes": {}, "errors": [], "timeline": []}

    def clear(self) -> None:
        with self._lock:
            self._state = self._empty_state()

    def record_outcome(self, item_id: str, status: str, **details: Any) -> None:
        """Store the final status of one item ("ok", "fallback", "failed", ...)."""
        with self._lock:
            self._state["outcomes"][item_id] = {
                "status": status,
                "timestamp": datetime.now().isoformat(),
                **details,
            }

    def add_error(self, item_id: str, error: str, stage: Optional[str] = None) -> None:
        with self._lock:
            entry = {"item": item_id, "error": error, "timestamp": datetime.now().isoformat()}
            if stage:
                entry["stage"] = stage
            self._state["errors"].append(entry)

    def add_event(self, event: Dict[str, Any]) -> None:
        with self._lock:
            self._state["timeline"].append(dict(event))

    def get_state(self, key: Optional[str] = None) -> Any:
        with self._lock:
            if key is None:
                return {k: (v.copy() if hasattr(v, "copy") else v) for k, v in self._state.items()}
            value = self._state.get(key)
            return value.copy() if hasattr(value, "copy") else value

    def failed_items(self) -> List[str]:
        with self._lock:
            return sorted(k for k, v in self._state["outcomes"].items() if v["status"] == "failed")

    def get_execution_summary(self) -> Dict[str, Any]:
        with self._lock:
            outcomes = self._state["outcomes"]
            counts: Dict[str, int] = {}
            for outcome in outcomes.values():
                counts[outcome["status"]] = counts.get(outcome["status"], 0) + 1
            return {
                "items": len(outcomes),
                "status_counts": counts,
                "errors_count": len(self._state["errors"]),
                "events": len(self._state["timeline"]),
            }


class MessageBus:
    """
    Minimal publish/subscribe channel for progress events.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._messages: Dict[str, List[Dict[str, Any]]] = {}
        self._subscribers: Dict[str, List[Callable[[Dict[str, Any]], None]]] = {}

    def publish(self, topic: str, message: Dict[str, Any], sender: Optional[str] = None) -> None:
        envelope = {"content": message, "sender": sender, "timestamp": datetime.now().isoformat()}
        with self._lock:
            self._messages.setdefault(topic, []).append(envelope)
            subscribers = list(self._subscribers.get(topic, []))
        for callback in subscribers:
            try:
                callback(envelope)
            except Exception as exc:
                logger.warning("Subscriber on %s failed: %s", topic, exc)

    def subscribe(self, topic: str, callback: Callable[[Dict[str, Any]], None]) -> None:
        with self._lock:
            self._subscribers.setdefault(topic, []).append(callback)

    def get_messages(self, topic: str, limit: Optional[int] = None) -> List[Dict[str, Any]]:
        with self._lock:
            messages = self._messages.get(topic, [])
            return messages[-limit:] if limit else messages.copy()

    def clear_topic(self, topic: str) -> None:
        with self._lock:
            self._messages.pop(topic, None)
