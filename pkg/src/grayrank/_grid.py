from decimal import Decimal
import re

_NUMBER = r'\d+(?:\.\d+)?'
_RANGE_RE = re.compile(
    f'\\A\\s*({_NUMBER})\\s*:\\s*({_NUMBER})\\s*:\\s*({_NUMBER})\\s*\\Z')
_LIST_RE = re.compile(f'\\A\\s*{_NUMBER}(\\s*,\\s*{_NUMBER})*\\s*\\Z')
_METRIC_RE = re.compile(r'\AR(\d+)@(\d+)\Z')


def parse_grid(s):
    """Returns a list of floats parsed from a human-friendly grid string.

    Example inputs:
    "0.1:0.9:0.1"  (start:stop:step, stop included)
    "0.1, 0.3, 0.5"
    "0.2"

    A list of numbers is returned as floats. Steps are accumulated in
    decimal, so "0.1:0.9:0.1" yields exactly 0.1, 0.2, ..., 0.9.

    Raises ValueError if it can't parse the string.
    """
    if isinstance(s, (list, tuple)):
        if not s:
            raise ValueError('empty grid')
        return [float(x) for x in s]
    match = _RANGE_RE.match(s)
    if match:
        start, stop, step = (Decimal(x) for x in match.groups())
        if step <= 0 or stop < start:
            raise ValueError(f'Unrecognized grid: {s}')
        values = []
        current = start
        while current <= stop:
            values.append(float(current))
            current += step
        return values
    if _LIST_RE.match(s):
        return [float(x) for x in s.split(',')]
    raise ValueError(f'Unrecognized grid: {s}')


def parse_metric(name):
    """Returns (n, k) for a recall metric name such as "R10@1".

    Raises ValueError if the name is malformed or k is not in 1..n.
    """
    match = _METRIC_RE.match(name)
    if not match:
        raise ValueError(f'Unrecognized metric: {name}')
    n, k = int(match.group(1)), int(match.group(2))
    if not 1 <= k <= n:
        raise ValueError(f'Unrecognized metric: {name}')
    return n, k
