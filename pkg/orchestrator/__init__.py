"""
Orchestration package for plane mask refinement.

Provides ordered parallel execution on LangChain runnables, per-run
bookkeeping and the per-image refinement chain.
"""

from .run_ledger import MessageBus, RunLedger
from .runner import StageCallbackHandler, ordered_batch
from .pipeline import RefinementOrchestrator, RunSummary

__version__ = "1.0.0"

__all__ = [
    "MessageBus",
    "RunLedger",
    "StageCallbackHandler",
    "ordered_batch",
    "RefinementOrchestrator",
    "RunSummary",
]
