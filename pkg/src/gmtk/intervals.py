"""Exact finite unions of closed intervals on the line.

Endpoints are stored as :class:`fractions.Fraction`. Dyadic unions (all
endpoints with power-of-two denominators) are the ones the exact content
solver accepts; other rational unions are still useful for generators such
as the middle-thirds Cantor set.
"""

from __future__ import annotations

import bisect
import re
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

_ENDPOINT = re.compile(r"^\s*(-?\d+)\s*(?:/\s*(?:2\s*\^\s*(\d+)|(\d+)))?\s*$")


def as_fraction(x) -> Fraction:
    """Exact conversion; floats are converted bit-for-bit."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return parse_endpoint(x)
    return Fraction(float(x))


def is_dyadic(x: Fraction) -> bool:
    d = x.denominator
    return d & (d - 1) == 0


def parse_endpoint(text: str) -> Fraction:
    m = _ENDPOINT.match(text)
    if not m:
        raise ValidationError(f"cannot parse endpoint {text!r}")
    p = int(m.group(1))
    if m.group(2) is not None:
        return Fraction(p, 2 ** int(m.group(2)))
    if m.group(3) is not None:
        return Fraction(p, int(m.group(3)))
    return Fraction(p)


class IntervalUnion:
    """Sorted, merged union of closed intervals with exact endpoints.

    Overlapping or touching input intervals are merged; the measure is
    unaffected by that normalization.
    """

    __slots__ = ("lo", "hi", "_prefix", "_flo", "_fhi", "_fprefix", "_dyadic", "_text", "_ints", "uid")

    def __init__(self, intervals: Iterable[Sequence] = ()):
        pairs = []
        for a, b in intervals:
            a, b = as_fraction(a), as_fraction(b)
            if b < a:
                raise ValidationError(f"interval [{a}, {b}] has right end before left end")
            pairs.append((a, b))
        pairs.sort()
        lo: list[Fraction] = []
        hi: list[Fraction] = []
        for a, b in pairs:
            if lo and a <= hi[-1]:
                if b > hi[-1]:
                    hi[-1] = b
            else:
                lo.append(a)
                hi.append(b)
        self.lo = lo
        self.hi = hi
        prefix = [Fraction(0)]
        for a, b in zip(lo, hi):
            prefix.append(prefix[-1] + (b - a))
        self._prefix = prefix
        self._flo = None
        self._dyadic = None
        self._text = None
        self._ints = None
        self.uid = None

    def __len__(self) -> int:
        return len(self.lo)

    def __iter__(self):
        return iter(zip(self.lo, self.hi))

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalUnion) and self.lo == other.lo and self.hi == other.hi

    def __repr__(self) -> str:
        return f"IntervalUnion({self.format()!r})"

    @property
    def length(self) -> Fraction:
        return self._prefix[-1]

    def is_dyadic(self) -> bool:
        if self._dyadic is None:
            self._dyadic = all(is_dyadic(a) and is_dyadic(b) for a, b in self)
        return self._dyadic

    def int_form(self) -> tuple[int, list[int], list[int]]:
        """(D, lo * D, hi * D) with D the largest endpoint denominator; D
        is a common denominator when the union is dyadic."""
        if self._ints is None:
            if not self.is_dyadic():
                raise ValidationError("integer form needs dyadic endpoints")
            den = max([1] + [x.denominator for x in self.lo + self.hi])
            self._ints = (den, [int(a * den) for a in self.lo], [int(b * den) for b in self.hi])
        return self._ints

    def _cumulative(self, x: Fraction) -> Fraction:
        # measure of the union intersected with (-inf, x]
        i = bisect.bisect_right(self.lo, x)
        if i == 0:
            return Fraction(0)
        return self._prefix[i] - max(Fraction(0), self.hi[i - 1] - x)

    def clip_length(self, a, b) -> Fraction:
        """Exact measure of the union intersected with [a, b]."""
        a, b = as_fraction(a), as_fraction(b)
        if b <= a:
            return Fraction(0)
        return self._cumulative(b) - self._cumulative(a)

    def clip(self, a, b) -> "IntervalUnion":
        a, b = as_fraction(a), as_fraction(b)
        out = []
        i = max(0, bisect.bisect_right(self.hi, a) - 1)
        j = bisect.bisect_right(self.lo, b)
        for lo, hi in zip(self.lo[i:j], self.hi[i:j]):
            lo2, hi2 = max(lo, a), min(hi, b)
            if lo2 <= hi2:
                out.append((lo2, hi2))
        return IntervalUnion(out)

    def clip_lengths_float(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized float version of :meth:`clip_length` for screening."""
        if self._flo is None:
            self._flo = np.array([float(x) for x in self.lo])
            self._fhi = np.array([float(x) for x in self.hi])
            self._fprefix = np.array([float(x) for x in self._prefix])

        def cum(x):
            i = np.searchsorted(self._flo, x, side="right")
            out = np.zeros_like(x, dtype=float)
            ok = i > 0
            ii = i[ok]
            out[ok] = self._fprefix[ii] - np.maximum(0.0, self._fhi[ii - 1] - x[ok])
            return out

        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return np.maximum(cum(b) - cum(a), 0.0)

    def contains(self, x) -> bool:
        x = as_fraction(x)
        i = bisect.bisect_right(self.lo, x)
        return i > 0 and x <= self.hi[i - 1]

    def format(self) -> str:
        """Text form ``p/2^k q/2^k; ...`` (plain ``p/q`` when not dyadic)."""
        if self._text is None:
            self._text = "; ".join(f"{_fmt(a)} {_fmt(b)}" for a, b in self)
        return self._text

    @classmethod
    def parse(cls, text: str) -> "IntervalUnion":
        items = []
        for chunk in text.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            parts = chunk.replace(",", " ").split()
            if len(parts) != 2:
                raise ValidationError(f"interval needs two endpoints, got {chunk!r}")
            items.append((parse_endpoint(parts[0]), parse_endpoint(parts[1])))
        return cls(items)


def _fmt(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    if is_dyadic(x):
        return f"{x.numerator}/2^{x.denominator.bit_length() - 1}"
    return f"{x.numerator}/{x.denominator}"
