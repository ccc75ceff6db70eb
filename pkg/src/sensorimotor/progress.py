"""
Progress meter for long pipeline stages (exploration, metric, embedding).
"""

import sys
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from multiprocessing import RLock
from threading import RLock as TRLock
from time import time
from typing import Any, ClassVar, Generic, Self, TextIO, TypeVar
from weakref import WeakSet

from .utils import disp_len, format_meter, get_ema_func, terminal_width

T = TypeVar("T")


class MeterLock:
    """
    Thread lock plus (where available) a multiprocessing lock, so meters in
    worker processes do not interleave their writes with the parent's.
    """

    th_lock: ClassVar[Any] = TRLock()
    mp_lock: ClassVar[Any]

    def __init__(self) -> None:
        cls = type(self)
        with cls.th_lock:
            if not hasattr(cls, "mp_lock"):
                try:
                    cls.mp_lock = RLock()
                except OSError:  # pragma: no cover
                    cls.mp_lock = None
        self.locks = [lk for lk in (cls.mp_lock, cls.th_lock) if lk is not None]

    # thread locks cannot cross a process boundary; workers use their own
    def __getstate__(self) -> dict[str, Any]:
        return {"locks": [lk for lk in self.locks if lk is not type(self).th_lock]}

    def __setstate__(self, state: dict[str, Any]) -> None:
        self.locks = [*state["locks"], type(self).th_lock]

    def acquire(self, *args: Any, **kwargs: Any) -> None:
        for lock in self.locks:
            lock.acquire(*args, **kwargs)

    def release(self) -> None:
        for lock in reversed(self.locks):
            lock.release()

    def __enter__(self) -> None:
        self.acquire()

    def __exit__(self, *args: Any) -> None:
        self.release()


class StageMeter(Generic[T]):
    """
    Wrap an iterable (or count manual `update()` calls) and keep a one-line
    meter on `file` up to date.

    Parameters
    ----------
    iterable  : iterable, optional
        Items to pass through. Leave blank to drive the meter manually.
    desc  : str, optional
        Stage name shown as prefix.
    total  : int, optional
        Expected item count; defaults to `len(iterable)` when available.
    unit  : str, optional
        Item unit [default: 'it'].
    file  : text stream, optional
        Output stream [default: sys.stderr].
    mininterval  : float, optional
        Minimum seconds between redraws [default: 0.1].
    disable  : bool or None, optional
        Disable output entirely. If None, disable when `file` is not a TTY
        [default: None].
    colour  : str, optional
        Bar colour (e.g. 'green').
    leave  : bool, optional
        Keep the final line on screen after `close()` [default: True].
    """

    _instances: ClassVar[WeakSet["StageMeter"]] = WeakSet()
    _lock: ClassVar[MeterLock]

    def __init__(
        self,
        iterable: Iterable[T] | None = None,
        desc: str = "",
        total: int | None = None,
        unit: str = "it",
        file: TextIO | None = None,
        mininterval: float = 0.1,
        disable: bool | None = None,
        colour: str | None = None,
        leave: bool = True,
        smoothing: float = 0.3,
    ) -> None:
        if file is None:
            file = sys.stderr
        if disable is None:
            isatty = getattr(file, "isatty", None)
            disable = not (isatty is not None and isatty())
        if total is None and iterable is not None:
            try:
                total = len(iterable)  # type: ignore[arg-type]
            except TypeError:
                total = None

        self.iterable = iterable
        self.desc = desc
        self.total = total
        self.unit = unit
        self.fp = file
        self.mininterval = mininterval
        self.disable = disable
        self.colour = colour
        self.leave = leave
        self.postfix = ""
        self.n = 0
        self.closed = False
        self._ema_rate = get_ema_func(smoothing)
        self._last_len = 0
        self.start_t = self.last_print_t = time()
        self.last_print_n = 0
        if not disable:
            with self.get_lock():
                self._instances.add(self)
            self.refresh()

    @classmethod
    def get_lock(cls) -> MeterLock:
        """Get the global lock. Construct it if it does not exist."""
        if not hasattr(cls, "_lock"):
            cls._lock = MeterLock()
        return cls._lock

    @classmethod
    def set_lock(cls, lock: MeterLock) -> None:
        """Set the global lock (used by worker-process initializers)."""
        cls._lock = lock

    @classmethod
    @contextmanager
    def external_write_mode(cls, file: TextIO | None = None) -> Iterator[None]:
        """Clear active meters on `file`, yield, then redraw them."""
        fp = file if file is not None else sys.stdout
        with cls.get_lock():
            cleared = [
                inst
                for inst in list(cls._instances)
                if inst.fp == fp or all(f in (sys.stdout, sys.stderr) for f in (fp, inst.fp))
            ]
            for inst in cleared:
                inst.clear()
            yield
            for inst in cleared:
                inst.refresh()

    @classmethod
    def write(cls, s: str, file: TextIO | None = None, end: str = "\n") -> None:
        """Print a message without overlapping active meters."""
        fp = file if file is not None else sys.stdout
        with cls.external_write_mode(file=file):
            fp.write(s)
            fp.write(end)

    def __enter__(self) -> Self:
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def __len__(self) -> int:
        if self.total is None:
            raise TypeError("meter has no known total")
        return self.total

    def __iter__(self) -> Iterator[T]:
        if self.iterable is None:
            raise TypeError("meter needs an iterable to iterate")
        try:
            for item in self.iterable:
                yield item
                self.update()
        finally:
            self.close()

    def update(self, n: int = 1) -> None:
        self.n += n
        if self.disable:
            return
        now = time()
        dt = now - self.last_print_t
        if dt >= self.mininterval:
            self._ema_rate((self.n - self.last_print_n) / dt if dt else None)
            self.last_print_t = now
            self.last_print_n = self.n
            self.refresh()

    def set_postfix(self, refresh: bool = True, **kwargs: Any) -> None:
        """Set the `key=value` statistics shown after the rate."""
        self.postfix = ", ".join(f"{key}={value}" for key, value in kwargs.items())
        if refresh and not self.disable:
            self.refresh()

    def format_line(self) -> str:
        elapsed = self.last_print_t - self.start_t
        rate = self._ema_rate() or None
        return format_meter(
            self.n,
            self.total,
            elapsed,
            ncols=terminal_width(self.fp),
            prefix=self.desc,
            unit=self.unit,
            rate=rate,
            postfix=self.postfix,
            colour=self.colour,
        )

    def _print(self, s: str) -> None:
        len_s = disp_len(s)
        self.fp.write("\r" + s + " " * max(self._last_len - len_s, 0))
        self.fp.flush()
        self._last_len = len_s

    def refresh(self) -> None:
        if self.disable or self.closed:
            return
        with self.get_lock():
            self._print(self.format_line())

    def clear(self) -> None:
        if self.disable or self.closed:
            return
        self._print("")
        self.fp.write("\r")

    def close(self) -> None:
        if self.closed:
            return
        if not self.disable:
            with self.get_lock():
                self.last_print_t = time()
                if self.leave:
                    self._print(self.format_line())
                    self.fp.write("\n")
                else:
                    self.clear()
                self.fp.flush()
                self._instances.discard(self)
        self.closed = True
