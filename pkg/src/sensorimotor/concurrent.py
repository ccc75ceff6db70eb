"""
Thin wrapper around `concurrent.futures` with a progress meter.
"""

from collections.abc import Callable, Iterable
from contextlib import contextmanager
from operator import length_hint
from os import cpu_count
from typing import Any, TypeVar
from warnings import warn

from .errors import SensorimotorWarning
from .progress import StageMeter

R = TypeVar("R")


def default_workers() -> int:
    return max(1, cpu_count() or 1)


@contextmanager
def ensure_lock(meter_class: type[StageMeter]):
    """get (create if necessary) and then restore `meter_class`'s lock"""
    old_lock = getattr(meter_class, "_lock", None)
    lock = old_lock or meter_class.get_lock()
    meter_class.set_lock(lock)
    yield lock
    if old_lock is None:
        del meter_class._lock
    else:
        meter_class.set_lock(old_lock)


def _worker_init(lock, initializer, initargs) -> None:
    StageMeter.set_lock(lock)
    if initializer is not None:
        initializer(*initargs)


def process_map(
    fn: Callable[..., R],
    *iterables: Iterable[Any],
    max_workers: int | None = None,
    chunksize: int | None = None,
    initializer: Callable[..., None] | None = None,
    initargs: tuple = (),
    **meter_kwargs: Any,
) -> list[R]:
    """
    Equivalent of `list(map(fn, *iterables))` driven by
    `concurrent.futures.ProcessPoolExecutor`, with a `StageMeter`.

    Results are returned in submission order whatever the worker count.

    Parameters
    ----------
    max_workers  : int, optional
        Worker processes [default: cpu_count()]. With 1 the map runs
        in-process (the initializer is called in-process too).
    chunksize  : int, optional
        Items sent to a worker at a time [default: 1].
    initializer, initargs  : optional
        Called once per worker before any item, e.g. to install large
        read-only arrays as module globals instead of pickling them per item.
    **meter_kwargs
        Passed to `StageMeter` (desc, unit, file, disable, ...).
    """
    if max_workers is None:
        max_workers = default_workers()
    if "total" not in meter_kwargs and iterables:
        meter_kwargs["total"] = length_hint(iterables[0]) or None
    if max_workers == 1:
        if initializer is not None:
            initializer(*initargs)
        with StageMeter(**meter_kwargs) as meter:
            out = []
            for args in zip(*iterables):
                out.append(fn(*args))
                meter.update()
            return out

    if iterables and chunksize is None:
        longest = max(map(length_hint, iterables))
        if longest > 1000:
            # default `chunksize=1` has poor performance for large iterables
            warn(
                "Iterable length %d > 1000 but `chunksize` is not set."
                " This may seriously degrade multiprocess performance."
                " Set `chunksize=1` or more." % longest,
                SensorimotorWarning,
                stacklevel=2,
            )
    from concurrent.futures import ProcessPoolExecutor

    with ensure_lock(StageMeter) as lk:
        with ProcessPoolExecutor(
            max_workers=max_workers,
            initializer=_worker_init,
            initargs=(lk, initializer, initargs),
        ) as ex:
            with StageMeter(**meter_kwargs) as meter:
                out = []
                for result in ex.map(fn, *iterables, chunksize=chunksize or 1):
                    out.append(result)
                    meter.update()
                return out
