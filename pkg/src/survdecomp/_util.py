import math
import os
import tempfile
from fractions import Fraction


def as_fraction(x):
    """Exact rational for a decimal literal; ``0.3`` becomes 3/10, not the binary double."""
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def round_half_up(x):
    """Nearest integer with halves rounded up; ``x`` may be int, float or Fraction."""
    return math.floor(as_fraction(x) + Fraction(1, 2))


def scaled_count(frac, n):
    """round_half_up(frac * n) without binary float error (0.3 * 9105 -> 2732)."""
    return round_half_up(as_fraction(frac) * int(n))


def atomic_write(path, data):
    """Write text or bytes via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    binary = isinstance(data, bytes)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        if binary:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
        else:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
