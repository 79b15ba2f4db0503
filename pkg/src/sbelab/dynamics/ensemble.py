"""
Ordered parallel map over ensemble members
"""
from typing import Callable, List, Sequence, TypeVar

from joblib import Parallel, delayed

from sbelab.common.config import get_settings

T = TypeVar("T")


def run_ensemble(task: Callable[[int], T], paths: Sequence[int]) -> List[T]:
    """
    Evaluate ``task(path)`` for every path index; results come back in
    submission order whatever the backend, so reductions are deterministic.
    ``task`` must be picklable (a module-level function or a partial of one).
    """
    settings = get_settings()
    if settings.n_jobs == 1:
        return [task(p) for p in paths]
    return Parallel(n_jobs=settings.n_jobs, backend=settings.backend)(delayed(task)(p) for p in paths)
