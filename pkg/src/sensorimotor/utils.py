"""
General helpers: meter formatting for `sensorimotor.progress`, terminal
colour, hashing and seed derivation.
"""

import hashlib
import json
import math
import os
import re
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, TextIO

from colorama import Fore, Style, just_fix_windows_console
from wcwidth import wcwidth

RE_ANSI = re.compile(r"\x1b\[[;\d]*[A-Za-z]")
# one ANSI sequence or one character
RE_TOKEN = re.compile(r"\x1b\[[;\d]*[A-Za-z]|.", re.DOTALL)
IS_WIN = sys.platform.startswith(("win32", "cygwin"))

if IS_WIN:
    just_fix_windows_console()

COLOURS = {
    "RED": Fore.RED,
    "GREEN": Fore.GREEN,
    "YELLOW": Fore.YELLOW,
    "BLUE": Fore.BLUE,
    "MAGENTA": Fore.MAGENTA,
    "CYAN": Fore.CYAN,
}


def paint(text: str, colour: str | None) -> str:
    """
    Wrap `text` in the ANSI sequence for `colour` (a key of `COLOURS`,
    case-insensitive). Unknown or empty colours leave the text unchanged.
    """
    if not colour:
        return text
    code = COLOURS.get(colour.upper())
    if code is None:
        return text
    return code + text + Style.RESET_ALL


def disp_len(data: str) -> int:
    """
    Returns the real on-screen length of a string which may contain
    ANSI control codes and wide chars.
    """
    width = 0
    for char in RE_ANSI.sub("", data):
        wcw = wcwidth(char)
        if wcw > 0:
            width += wcw
    return width


def disp_trim(data: str, length: int) -> str:
    """
    Cut `data` to `length` screen columns. ANSI codes are kept, and a
    reset is appended when the cut leaves one open.
    """
    kept, width = [], 0
    for token in RE_TOKEN.findall(data):
        if not RE_ANSI.fullmatch(token):
            width += max(wcwidth(token), 0)
            if width > length:
                break
        kept.append(token)
    out = "".join(kept)
    if RE_ANSI.search(out) and not out.endswith(Style.RESET_ALL):
        out += Style.RESET_ALL
    return out


def get_ema_func(smoothing: float = 0.3) -> Callable[[float | None], float]:
    """
    Exponential moving average of a stream of values, bias-corrected.

    Parameters
    ----------
    smoothing  : float, optional
        Smoothing factor in range [0, 1], [default: 0.3].
        Ranges from 0 (yields old value) to 1 (yields new value).
    """
    beta = 1 - smoothing
    last: float = 0
    calls: int = 0

    def ema(x: float | None = None) -> float:
        nonlocal last, calls
        if x is not None:
            last = smoothing * x + beta * last
            calls += 1
        return last / (1 - beta**calls) if calls else last

    return ema


def _three_digits(x: float, kilo: bool = True) -> str:
    suffix = ""
    if kilo and x >= 999.5:
        x, suffix = x / 1000, "k"
    if x < 9.995:
        return f"{x:.2f}{suffix}"
    if x < 99.95:
        return f"{x:.1f}{suffix}"
    return f"{x:.0f}{suffix}"


def format_rate(rate: float | None, unit: str = "it") -> str:
    """Items per second, or seconds per item below one item a second."""
    if not rate:
        return f"?{unit}/s"
    if rate < 1:
        return f"{_three_digits(1 / rate, kilo=False)}s/{unit}"
    return f"{_three_digits(rate)}{unit}/s"


def format_interval(t: float) -> str:
    """
    Formats a number of seconds as a clock time, [H:]MM:SS
    """
    sign = "-" if t < 0 else ""
    mins, s = divmod(abs(int(t)), 60)
    h, m = divmod(mins, 60)
    if h:
        return f"{sign}{h:d}:{m:02d}:{s:02d}"
    return f"{sign}{m:02d}:{s:02d}"


def format_bar(frac: float, width: int, ascii: bool = False) -> str:
    """Fixed-width bar filled to `frac` (clamped to [0, 1])."""
    charset = " 123456789#" if ascii else " " + "".join(map(chr, range(0x258F, 0x2587, -1)))
    frac = max(0.0, min(1.0, frac))
    nsyms = len(charset) - 1
    full, partial = divmod(int(frac * width * nsyms), nsyms)
    res = charset[-1] * full
    if full < width:
        res += charset[partial] + charset[0] * (width - full - 1)
    return res


def format_meter(
    n: int,
    total: int | None,
    elapsed: float,
    ncols: int | None = None,
    prefix: str = "",
    unit: str = "it",
    rate: float | None = None,
    postfix: str | None = None,
    ascii: bool = False,
    colour: str | None = None,
) -> str:
    """
    Return a one-line progress meter.

    Parameters
    ----------
    n  : int
        Number of finished items.
    total  : int or None
        Expected number of items. If None only the counter, elapsed time
        and rate are shown.
    elapsed  : float
        Seconds since start.
    ncols  : int, optional
        Width of the whole line; the bar fills whatever the stats leave
        over. If unspecified the bar is 10 characters wide.
    prefix  : str, optional
        Stage name shown before the bar.
    unit  : str, optional
        Item unit [default: 'it'].
    rate  : float, optional
        Override for items per second (default: n / elapsed).
    postfix  : str, optional
        Extra statistics appended after the rate.
    colour  : str, optional
        Bar colour, see `paint`.

    Returns
    -------
    out  : Formatted meter, ready to display.
    """
    if total is not None and n > total:
        total = None
    if rate is None and elapsed:
        rate = n / elapsed
    rate_fmt = format_rate(rate, unit)
    postfix = ", " + postfix if postfix else ""
    l_bar = prefix + ": " if prefix else ""

    if not total:
        return f"{l_bar}{n}{unit} [{format_interval(elapsed)}, {rate_fmt}{postfix}]"

    frac = n / total
    remaining = format_interval((total - n) / rate) if rate else "?"
    # an unfinished stage never reads 100%
    percentage = frac * 100 if n == total else math.floor(frac * 100)
    l_bar += f"{percentage:3.0f}%|"
    r_bar = f"| {n}/{total} [{format_interval(elapsed)}<{remaining}, {rate_fmt}{postfix}]"
    width = max(1, ncols - disp_len(l_bar + r_bar)) if ncols else 10
    res = l_bar + paint(format_bar(frac, width, ascii=ascii), colour) + r_bar
    return disp_trim(res, ncols) if ncols else res


def terminal_width(fp: TextIO) -> int | None:
    """Column count of the terminal behind `fp`, or None if unknown."""
    try:
        return os.get_terminal_size(fp.fileno()).columns
    except (AttributeError, OSError, ValueError):
        return None


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, no whitespace variation."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fd:
        for chunk in iter(lambda: fd.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def derive_seed(master_seed: int, stage: str, index: int = 0) -> int:
    """
    Seed for the `index`-th random stream of `stage`, fixed by `master_seed`.

    >>> derive_seed(0, "explore") == derive_seed(0, "explore", 0)
    True
    >>> derive_seed(0, "explore") != derive_seed(1, "explore")
    True
    """
    digest = hashlib.sha256(f"{master_seed}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)
