"""
Ordered, bounded-concurrency execution of independent work items on LangChain runnables.
"""

import logging
import threading
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence, Union
from uuid import UUID

from langchain_core.callbacks import BaseCallbackHandler
from langchain_core.runnables import Runnable, RunnableLambda

from .run_ledger import MessageBus, RunLedger

logger = logging.getLogger(__name__)

STAGE_TOPIC = "stage_events"


def _preview(value: Any, limit: int = 100) -> str:
    text = str(value)
    return text[:limit] + "..." if len(text) > limit else text


class StageCallbackHandler(BaseCallbackHandler):
    """Times every runnable invocation and forwards the events to a ledger and bus."""

    def __init__(self, ledger: Optional[RunLedger] = None, bus: Optional[MessageBus] = None):
        self.ledger = ledger
        self.bus = bus
        self.execution_log: List[Dict[str, Any]] = []
        self._starts: Dict[UUID, tuple] = {}
        self._lock = threading.Lock()

    def _emit(self, entry: Dict[str, Any]) -> None:
        with self._lock:
            self.execution_log.append(entry)
        if self.ledger is not None:
            self.ledger.add_event(entry)
        if self.bus is not None:
            self.bus.publish(STAGE_TOPIC, entry, sender="orchestrator")

    def on_chain_start(self, serialized: Optional[Dict[str, Any]], inputs: Any, *, run_id: UUID,
                       **kwargs: Any) -> None:
        stage = kwargs.get("name") or (serialized or {}).get("name", "unknown")
        with self._lock:
            self._starts[run_id] = (stage, time.perf_counter())
        self._emit({
            "event": "chain_start",
            "stage": stage,
            "timestamp": datetime.now().isoformat(),
            "inputs": _preview(inputs),
        })

    def _finish(self, event: str, run_id: UUID, **extra: Any) -> None:
        with self._lock:
            stage, started = self._starts.pop(run_id, ("unknown", None))
        duration = time.perf_counter() - started if started is not None else 0.0
        self._emit({
            "event": event,
            "stage": stage,
            "timestamp": datetime.now().isoformat(),
            "duration": duration,
            **extra,
        })

    def on_chain_end(self, outputs: Any, *, run_id: UUID, **kwargs: Any) -> None:
        self._finish("chain_end", run_id)

    def on_chain_error(self, error: BaseException, *, run_id: UUID, **kwargs: Any) -> None:
        self._finish("chain_error", run_id, error=str(error))

    def get_performance_summary(self) -> Dict[str, Any]:
        """Total and per-stage durations of finished invocations."""
        with self._lock:
            log = list(self.execution_log)
        per_stage: Dict[str, float] = {}
        errors = []
        for entry in log:
            if entry["event"] in ("chain_end", "chain_error"):
                per_stage[entry["stage"]] = per_stage.get(entry["stage"], 0.0) + entry["duration"]
            if entry["event"] == "chain_error":
                errors.append(entry["error"])
        return {
            "total_duration": sum(per_stage.values()),
            "stage_durations": per_stage,
            "total_events": len(log),
            "error_count": len(errors),
            "errors": errors,
        }


def ordered_batch(fn: Union[Callable[[Any], Any], Runnable], items: Sequence[Any], max_concurrency: int = 1,
                  name: str = "stage", callbacks: Optional[List[BaseCallbackHandler]] = None) -> List[Any]:
    """
    Apply ``fn`` to every item with at most ``max_concurrency`` in flight.

    Results come back in input order; an item that raised yields its exception
    in place of a result.
    """
    if max_concurrency < 1:
        raise ValueError(f"max_concurrency must be >= 1, got {max_concurrency}")
    if not items:
        return []
    runnable = fn if isinstance(fn, Runnable) else RunnableLambda(fn, name=name)
    config = {"max_concurrency": max_concurrency, "callbacks": list(callbacks or [])}
    return runnable.batch(list(items), config=config, return_exceptions=True)
