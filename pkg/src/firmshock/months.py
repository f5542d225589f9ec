"""Year-month arithmetic."""
from __future__ import annotations

import re
from dataclasses import dataclass

_YM = re.compile(r"^\s*(\d{4})-(\d{1,2})\s*$")


@dataclass(frozen=True, order=True)
class YearMonth:
    """A calendar month, ordered and hashable; ``ym + 3`` shifts by months."""

    index: int  # year * 12 + (month - 1)

    @classmethod
    def of(cls, year: int, month: int) -> "YearMonth":
        if not 1 <= month <= 12:
            raise ValueError(f"month out of range: {month}")
        return cls(year * 12 + month - 1)

    @classmethod
    def parse(cls, text) -> "YearMonth":
        if isinstance(text, YearMonth):
            return text
        m = _YM.match(str(text))
        if not m:
            raise ValueError(f"not a year-month: {text!r}")
        return cls.of(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_date(cls, d) -> "YearMonth":
        return cls.of(d.year, d.month)

    @property
    def year(self) -> int:
        return self.index // 12

    @property
    def month(self) -> int:
        return self.index % 12 + 1

    @property
    def quarter(self) -> int:
        return (self.month - 1) // 3 + 1

    def __add__(self, k: int) -> "YearMonth":
        return YearMonth(self.index + int(k))

    def __sub__(self, other):
        if isinstance(other, YearMonth):
            return self.index - other.index
        return YearMonth(self.index - int(other))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def __repr__(self) -> str:
        return f"YearMonth({self})"


def month_range(start: YearMonth, end: YearMonth) -> list[YearMonth]:
    """Inclusive list of months from ``start`` to ``end``."""
    return [YearMonth(i) for i in range(start.index, end.index + 1)]


def parse_window(text: str) -> tuple[YearMonth, YearMonth]:
    """Parse ``YYYY-MM:YYYY-MM`` into an inclusive (start, end) pair."""
    a, _, b = str(text).partition(":")
    start, end = YearMonth.parse(a), YearMonth.parse(b)
    if end < start:
        raise ValueError(f"window ends before it starts: {text!r}")
    return start, end
