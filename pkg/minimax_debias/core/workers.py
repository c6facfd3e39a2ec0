"""
Worker pool for replications and folds.

joblib's loky backend gives process-level parallelism; with one worker the
map runs inline so results and logging stay in the calling process.
"""
import logging
from typing import Callable, Iterable, List, Optional, TypeVar

from joblib import Parallel, delayed

from .config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """The --threads flag if given, else MINIMAX_THREADS from the environment."""
    value = settings.MINIMAX_THREADS if threads is None else threads
    if value < 1:
        raise ValueError(f"Thread count must be at least 1, got {value}")
    return value


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """fn over items, in input order."""
    items = list(items)
    n_jobs = resolve_threads(threads)
    if n_jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Dispatching {len(items)} jobs to {n_jobs} workers")
    return Parallel(n_jobs=n_jobs)(delayed(fn)(item) for item in items)
